//! Gaussian class clusters in the unit cube.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::fl::LabeledData;

/// Class centres of one synthetic task.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTask {
    pub centers: DMatrix<f64>,
    pub spread: f64,
}

impl ClusterTask {
    /// Centres uniform in `[0.2, 0.8]` per feature.
    pub fn new<R: Rng + ?Sized>(features: usize, classes: usize, spread: f64, rng: &mut R) -> Self {
        Self {
            centers: DMatrix::from_fn(classes, features, |_, _| rng.random_range(0.2..0.8)),
            spread,
        }
    }

    pub fn classes(&self) -> usize {
        self.centers.nrows()
    }

    /// `n` samples with uniform labels, each feature clamped to [0, 1].
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> LabeledData {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.classes())).collect();
        let features = DMatrix::from_fn(n, self.centers.ncols(), |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            (self.centers[(labels[i], j)] + self.spread * z).clamp(0.0, 1.0)
        });
        LabeledData { features, labels }
    }
}
