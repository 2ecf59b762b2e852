//! Multi-task over-the-air federated learning over cell-free massive MIMO.

pub mod accounting;
pub mod aggregation;
pub mod channel;
pub mod estimation;
pub mod fl;
pub mod linalg;
pub mod rng;
pub mod system;
pub mod topology;
pub mod runner;
