//! Fronthaul signaling counts per cooperation level.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CooperationLevel {
    Level1,
    Level2,
    Level3,
}

impl CooperationLevel {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::Level1),
            2 => Some(Self::Level2),
            3 => Some(Self::Level3),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::Level1 => 1,
            Self::Level2 => 2,
            Self::Level3 => 3,
        }
    }
}

/// Dimensions that determine fronthaul load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FronthaulDims {
    pub tau_p: u64,
    pub tau_u: u64,
    pub antennas: u64,
    pub aps: u64,
    pub groups: u64,
    pub devices: u64,
}

/// Complex scalars sent over the fronthaul.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FronthaulReport {
    /// Per coherence block.
    pub pilot_data_scalars: u64,
    /// Per combiner refresh.
    pub combiner_scalars: u64,
    /// Sent once. Hermitian storage makes this `KLN²/2`, so it can be fractional.
    pub statistics_scalars: Ratio<u64>,
}

impl FronthaulReport {
    pub fn statistics_display(&self) -> u64 {
        self.statistics_scalars.ceil().to_integer()
    }
}

pub fn fronthaul_scalars(level: CooperationLevel, d: &FronthaulDims) -> FronthaulReport {
    let nl = d.antennas * d.aps;
    let stats = Ratio::new(d.devices * d.aps * d.antennas * d.antennas, 2);
    match level {
        CooperationLevel::Level3 => FronthaulReport {
            pilot_data_scalars: (d.tau_p + d.tau_u) * nl,
            combiner_scalars: 0,
            statistics_scalars: stats,
        },
        CooperationLevel::Level2 => FronthaulReport {
            pilot_data_scalars: d.tau_p * nl + d.tau_u * d.groups * d.aps,
            combiner_scalars: d.groups * nl,
            statistics_scalars: stats,
        },
        CooperationLevel::Level1 => FronthaulReport {
            pilot_data_scalars: d.tau_u * d.groups * d.aps,
            combiner_scalars: 0,
            statistics_scalars: Ratio::from_integer(0),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cheaper {
    Level2,
    Level3,
    Tie,
}

/// Compares Level 2 and Level 3 per coherence block when combiners are
/// refreshed `rounds` times per block. Level 2 wins iff
/// `rounds·N·G < τ_u(N − G)`.
pub fn cheaper_level(tau_u: u64, antennas: u64, groups: u64, rounds: u64) -> Cheaper {
    if antennas <= groups {
        return Cheaper::Level3;
    }
    let lhs = rounds * antennas * groups;
    let rhs = tau_u * (antennas - groups);
    match lhs.cmp(&rhs) {
        std::cmp::Ordering::Less => Cheaper::Level2,
        std::cmp::Ordering::Greater => Cheaper::Level3,
        std::cmp::Ordering::Equal => Cheaper::Tie,
    }
}

/// The crossover `τ_u(N − G)/(NG)` as an exact rational, or `None` when `N ≤ G`.
pub fn crossover_rounds(tau_u: u64, antennas: u64, groups: u64) -> Option<Ratio<u64>> {
    (antennas > groups).then(|| Ratio::new(tau_u * (antennas - groups), antennas * groups))
}
