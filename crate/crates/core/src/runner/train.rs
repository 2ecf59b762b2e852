use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;

use super::idx::load_idx_dataset;
use super::synthetic::ClusterTask;
use super::sweep::networks;
use super::{seed_means, with_threads, DataSource, ResultRow, RowKind, RunnerError, ScenarioConfig, TaskKind};
use crate::aggregation::{AggregationScheme, AggregationWeights, SchemeRegistry};
use crate::fl::{
    desired_per_group, local_update, ota_round, prepare_round, convergence_bound, ConvexTask, Fnn, LabeledData,
};
use crate::rng::{stream, Purpose};
use crate::system::{dbm_to_watts, Instance};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// Base directory for relative dataset paths.
    pub data_dir: Option<PathBuf>,
}

/// Training and test data of one group.
#[derive(Debug, Clone)]
pub enum GroupTask {
    Fnn {
        net: Fnn,
        /// One dataset per member device, in device order.
        train: Vec<LabeledData>,
        test: LabeledData,
    },
    Ridge(ConvexTask),
}

impl GroupTask {
    fn initial_model(&self, seed: u64, g: usize) -> Vec<f64> {
        match self {
            Self::Fnn { net, .. } => net.init(&mut stream(seed, 0, Purpose::ModelInit, g as u64)),
            Self::Ridge(t) => vec![0.0; t.ridge.dim],
        }
    }

    fn step(&self, global: &[f64], member: usize, eta: f64) -> Result<Vec<f64>, RunnerError> {
        Ok(match self {
            Self::Fnn { net, train, .. } => local_update(net, global, &train[member], eta)?,
            Self::Ridge(t) => local_update(&t.ridge, global, &t.devices[member], 1.0 / t.chi())?,
        })
    }
}

type Loaded = Vec<Option<(LabeledData, LabeledData)>>;

fn resolve(path: &Path, base: Option<&Path>) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

fn load_sources(cfg: &ScenarioConfig, data_dir: Option<&Path>) -> Result<Loaded, RunnerError> {
    (0..cfg.system.groups)
        .map(|g| match cfg.training.tasks.get(g) {
            Some(DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                label_filter,
            }) if cfg.training.task == TaskKind::Fnn => {
                let classes = cfg.training.classes;
                let f = label_filter.as_deref();
                let train = load_idx_dataset(&resolve(train_images, data_dir), &resolve(train_labels, data_dir), f, classes)?;
                let test = load_idx_dataset(&resolve(test_images, data_dir), &resolve(test_labels, data_dir), f, classes)?;
                Ok(Some((train, test)))
            }
            _ => Ok(None),
        })
        .collect()
}

/// Builds every group's task for one seed.
pub fn build_tasks(cfg: &ScenarioConfig, loaded: &Loaded, seed: u64) -> Result<Vec<GroupTask>, RunnerError> {
    let t = &cfg.training;
    let per_group = cfg.system.devices / cfg.system.groups;
    (0..cfg.system.groups)
        .map(|g| {
            let gid = g as u64;
            match t.task {
                TaskKind::Ridge => Ok(GroupTask::Ridge(ConvexTask::synthetic(
                    t.ridge_dim,
                    per_group,
                    t.samples_per_device,
                    t.ridge_lambda,
                    0.5,
                    &mut stream(seed, 0, Purpose::Dataset, gid),
                )?)),
                TaskKind::Fnn => {
                    let (train, test): (Vec<LabeledData>, LabeledData) = match &loaded[g] {
                        Some((train_all, test_all)) => {
                            let needed = per_group * t.samples_per_device;
                            if train_all.len() < needed {
                                return Err(RunnerError::NotEnoughSamples {
                                    group: g,
                                    available: train_all.len(),
                                    needed,
                                });
                            }
                            let picked = sample(&mut stream(seed, 0, Purpose::DataSplit, gid), train_all.len(), needed).into_vec();
                            let train = picked
                                .chunks(t.samples_per_device)
                                .map(|rows| train_all.subset(rows))
                                .collect();
                            let n_test = t.test_samples.min(test_all.len());
                            (train, test_all.subset(&(0..n_test).collect::<Vec<_>>()))
                        }
                        None => {
                            let (features, spread) = match t.tasks.get(g) {
                                Some(DataSource::Synthetic { features, spread }) => (*features, *spread),
                                _ => match DataSource::default() {
                                    DataSource::Synthetic { features, spread } => (features, spread),
                                    DataSource::Idx { .. } => unreachable!(),
                                },
                            };
                            let mut rng = stream(seed, 0, Purpose::Dataset, gid);
                            let task = ClusterTask::new(features, t.classes, spread, &mut rng);
                            let train = (0..per_group)
                                .map(|i| {
                                    let id = (g * per_group + i) as u64;
                                    task.sample(t.samples_per_device, &mut stream(seed, 0, Purpose::DataSplit, id))
                                })
                                .collect();
                            (train, task.sample(t.test_samples, &mut rng))
                        }
                    };
                    let input = train_input_dim(&train);
                    Ok(GroupTask::Fnn {
                        net: Fnn::new(input, t.hidden, t.classes),
                        train,
                        test,
                    })
                }
            }
        })
        .collect()
}

fn train_input_dim(train: &[LabeledData]) -> usize {
    train.first().map_or(0, LabeledData::feature_dim)
}

struct Evaluation {
    accuracy: Vec<f64>,
    gap: Vec<f64>,
}

fn evaluate(tasks: &[GroupTask], globals: &[Vec<f64>]) -> Result<Evaluation, RunnerError> {
    let mut accuracy = Vec::new();
    let mut gap = Vec::new();
    for (task, theta) in tasks.iter().zip(globals) {
        match task {
            GroupTask::Fnn { net, test, .. } => accuracy.push(net.accuracy(theta, test)?),
            GroupTask::Ridge(t) => gap.push(t.gap(theta)),
        }
    }
    Ok(Evaluation { accuracy, gap })
}

/// Trains every group's model for `rounds` rounds with one scheme.
/// Channels are redrawn every round; the same initial models and data are
/// used whatever the scheme.
pub fn train_with_scheme(
    cfg: &ScenarioConfig,
    inst: &Instance,
    tasks: &[GroupTask],
    scheme: &dyn AggregationScheme,
    seed: u64,
    seed_count: usize,
) -> Result<Vec<ResultRow>, RunnerError> {
    let groups = tasks.len();
    let group_of_device = &inst.geometry.group_of_device;
    let member_index: Vec<usize> = (0..group_of_device.len())
        .map(|k| group_of_device[..k].iter().filter(|&&g| g == group_of_device[k]).count())
        .collect();
    let mut base = AggregationWeights::from_dataset_sizes(
        group_of_device,
        &vec![cfg.training.samples_per_device.max(1); group_of_device.len()],
    );
    base.omega = cfg.omega();
    let power = vec![dbm_to_watts(cfg.system.max_power_dbm); group_of_device.len()];
    let opts = cfg.solver_options(true);

    let mut globals: Vec<Vec<f64>> = tasks.iter().enumerate().map(|(g, t)| t.initial_model(seed, g)).collect();
    let initial = evaluate(tasks, &globals)?;
    let initial_gap = initial.gap.clone();
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); groups];
    let mut row = ResultRow::new(RowKind::Train, scheme.name(), Some(seed), 0.0, seed_count);
    row.accuracy = initial.accuracy;
    row.bound = initial_gap.clone();
    row.gap = initial.gap;
    let mut rows = vec![row];

    for t in 1..=cfg.training.rounds {
        let locals: Vec<Vec<f64>> = (0..group_of_device.len())
            .map(|k| {
                let g = group_of_device[k];
                tasks[g].step(&globals[g], member_index[k], cfg.training.eta)
            })
            .collect::<Result<_, _>>()?;
        let mut row = ResultRow::new(RowKind::Train, scheme.name(), Some(seed), t as f64, seed_count);
        let agg_error = if scheme.infrastructure() == crate::aggregation::Infrastructure::None {
            globals = desired_per_group(&locals, &base);
            vec![0.0; groups]
        } else {
            let channels = inst.round(t as u64);
            let prepared = prepare_round(&locals, &base)?;
            let inputs = channels.inputs(inst, &prepared.weights, &power);
            let design = scheme.design(&inputs, &opts, None)?;
            let mut rng = stream(seed, t as u64, Purpose::DataNoise, 0);
            let outcome = ota_round(scheme, &design, &inputs, &locals, &prepared, &mut rng)?;
            row.group_mse = design.group_mse;
            row.weighted_mse = Some(design.weighted_mse);
            row.iterations = design.history.as_ref().map(|h| h.iterations);
            globals = outcome.recovered;
            outcome.error
        };
        let eval = evaluate(tasks, &globals)?;
        for (g, e) in agg_error.iter().enumerate() {
            errors[g].push(*e);
        }
        row.bound = tasks
            .iter()
            .enumerate()
            .filter_map(|(g, task)| match task {
                GroupTask::Ridge(c) => Some(convergence_bound(c.chi(), c.xi(), initial_gap[g], &errors[g])),
                GroupTask::Fnn { .. } => None,
            })
            .collect::<Result<_, _>>()?;
        row.accuracy = eval.accuracy;
        row.gap = eval.gap;
        row.agg_error = agg_error;
        rows.push(row);
    }
    Ok(rows)
}

fn train_seed(
    cfg: &ScenarioConfig,
    registry: &SchemeRegistry,
    loaded: &Loaded,
    seed: u64,
    seed_count: usize,
) -> Result<Vec<ResultRow>, RunnerError> {
    let inst = Instance::generate(&cfg.system_params(), networks(cfg), seed)?;
    let tasks = build_tasks(cfg, loaded, seed)?;
    let mut rows = Vec::new();
    for arch in &cfg.system.architectures {
        let scheme = registry.get(arch)?;
        rows.extend(train_with_scheme(cfg, &inst, &tasks, scheme.as_ref(), seed, seed_count)?);
    }
    Ok(rows)
}

/// FL training of every configured architecture for seeds
/// `cfg.seed .. cfg.seed + cfg.training.seeds`. Returns per-seed rows
/// followed by seed averages.
pub fn run_fl_training(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<ResultRow>, RunnerError> {
    cfg.validate().map_err(super::ConfigError::from)?;
    let loaded = load_sources(cfg, opts.data_dir.as_deref())?;
    let registry = SchemeRegistry::builtin();
    let n = cfg.training.seeds;
    let per_seed: Vec<Vec<ResultRow>> = with_threads(opts.threads, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| train_seed(cfg, &registry, &loaded, cfg.seed + i, n))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let mut rows: Vec<ResultRow> = per_seed.into_iter().flatten().collect();
    let means = seed_means(&rows, RowKind::TrainMean);
    rows.extend(means);
    Ok(rows)
}
