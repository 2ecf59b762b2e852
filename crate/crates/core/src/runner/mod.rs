//! Scenario configuration, datasets, MSE sweeps, FL training and CSV output.

mod config;
mod csv;
pub mod idx;
mod sweep;
pub mod synthetic;
mod train;

pub use self::csv::{emit_csv, fmt_float, write_csv, HEADER};
pub use config::*;
pub use sweep::*;
pub use train::*;

use thiserror::Error;

use crate::accounting::FronthaulReport;
use crate::aggregation::AggregationError;
use crate::fl::FlError;
use crate::system::SystemError;

/// Environment variable naming the default dataset directory.
pub const DATA_DIR_ENV: &str = "CFOTA_DATA_DIR";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] idx::IdxError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
    #[error("dataset for group {group} has {available} samples, {needed} needed")]
    NotEnoughSamples { group: usize, available: usize, needed: usize },
}

impl RunnerError {
    /// Stable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Self::Config(ConfigError::Io { .. }) => "IoError",
            Self::Config(ConfigError::Parse { .. }) => "ParseError",
            Self::Config(ConfigError::Validation(_)) => "ValidationError",
            Self::Dataset(idx::IdxError::Io { .. }) => "IoError",
            Self::Dataset(idx::IdxError::BadMagic { .. }) => "BadMagic",
            Self::Dataset(idx::IdxError::TruncatedFile { .. }) => "TruncatedFile",
            Self::Dataset(idx::IdxError::LabelOutOfRange { .. }) => "LabelOutOfRange",
            Self::Dataset(idx::IdxError::CountMismatch { .. }) => "CountMismatch",
            Self::System(_) => "SystemError",
            Self::Aggregation(_) => "AggregationError",
            Self::Fl(FlError::DegenerateVariance) => "DegenerateVariance",
            Self::Fl(_) => "FlError",
            Self::ThreadPool(_) => "ThreadPoolError",
            Self::NotEnoughSamples { .. } => "NotEnoughSamples",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKind {
    Sweep,
    SweepMean,
    Train,
    TrainMean,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sweep => "sweep",
            Self::SweepMean => "sweep-mean",
            Self::Train => "train",
            Self::TrainMean => "train-mean",
        }
    }
}

/// One output line. `seed` is empty on rows averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub kind: RowKind,
    pub scenario: String,
    pub seed: Option<u64>,
    /// Power in dBm for sweeps, round index for training.
    pub point: f64,
    pub group_mse: Vec<f64>,
    pub weighted_mse: Option<f64>,
    pub accuracy: Vec<f64>,
    pub gap: Vec<f64>,
    pub bound: Vec<f64>,
    pub agg_error: Vec<f64>,
    pub iterations: Option<usize>,
    pub fronthaul: Option<FronthaulReport>,
    pub seed_count: usize,
    pub terminated_by: Option<String>,
}

impl ResultRow {
    pub fn new(kind: RowKind, scenario: &str, seed: Option<u64>, point: f64, seed_count: usize) -> Self {
        Self {
            kind,
            scenario: scenario.to_string(),
            seed,
            point,
            group_mse: Vec::new(),
            weighted_mse: None,
            accuracy: Vec::new(),
            gap: Vec::new(),
            bound: Vec::new(),
            agg_error: Vec::new(),
            iterations: None,
            fronthaul: None,
            seed_count,
            terminated_by: None,
        }
    }

    fn sort_key(&self) -> (RowKind, &str, Option<u64>) {
        (self.kind, &self.scenario, self.seed)
    }
}

fn mean_vec<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in rows {
        if sum.is_empty() {
            sum = vec![0.0; r.len()];
        }
        for (s, x) in sum.iter_mut().zip(r) {
            *s += x;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}

/// Averages per-seed rows sharing (scenario, point).
pub fn seed_means(rows: &[ResultRow], kind: RowKind) -> Vec<ResultRow> {
    let mut keys: Vec<(&str, f64)> = rows.iter().map(|r| (r.scenario.as_str(), r.point)).collect();
    keys.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(scenario, point)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.point == point)
                .collect();
            let first = group[0];
            let mut out = ResultRow::new(kind, scenario, None, point, group.len());
            out.group_mse = mean_vec(group.iter().map(|r| &r.group_mse));
            out.accuracy = mean_vec(group.iter().map(|r| &r.accuracy));
            out.gap = mean_vec(group.iter().map(|r| &r.gap));
            out.bound = mean_vec(group.iter().map(|r| &r.bound));
            out.agg_error = mean_vec(group.iter().map(|r| &r.agg_error));
            out.weighted_mse = first
                .weighted_mse
                .map(|_| group.iter().filter_map(|r| r.weighted_mse).sum::<f64>() / group.len() as f64);
            out.fronthaul = first.fronthaul;
            out
        })
        .collect()
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunnerError> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| RunnerError::ThreadPool(e.to_string())),
    }
}
