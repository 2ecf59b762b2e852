use rayon::prelude::*;

use super::{seed_means, with_threads, ResultRow, RowKind, RunnerError, ScenarioConfig, TaskKind};
use crate::accounting::{fronthaul_scalars, FronthaulDims};
use crate::aggregation::{AggregationWeights, SchemeRegistry, TxCoefficients};
use crate::fl::{normalize, Fnn};
use crate::rng::{stream, Purpose};
use crate::system::{dbm_to_watts, Instance, Networks};

pub fn fronthaul_dims(cfg: &ScenarioConfig) -> FronthaulDims {
    let s = &cfg.system;
    FronthaulDims {
        tau_p: s.tau_p as u64,
        tau_u: s.tau_u as u64,
        antennas: s.ap_antennas as u64,
        aps: s.aps as u64,
        groups: s.groups as u64,
        devices: s.devices as u64,
    }
}

pub fn networks(cfg: &ScenarioConfig) -> Networks {
    let a = &cfg.system.architectures;
    Networks {
        cell_free: a.iter().any(|x| x.starts_with("level")),
        cellular: a.iter().any(|x| x == "cellular"),
    }
}

/// Input width of the configured FNN for group `g`.
pub fn fnn_input(cfg: &ScenarioConfig, g: usize) -> usize {
    match cfg.training.tasks.get(g).cloned().unwrap_or_default() {
        super::DataSource::Synthetic { features, .. } => features,
        super::DataSource::Idx { .. } => 784,
    }
}

/// Shared initial global model of group `g`.
pub fn initial_model(cfg: &ScenarioConfig, seed: u64, g: usize) -> Vec<f64> {
    let t = &cfg.training;
    match t.task {
        TaskKind::Fnn => Fnn::new(fnn_input(cfg, g), t.hidden, t.classes)
            .init(&mut stream(seed, 0, Purpose::ModelInit, g as u64)),
        TaskKind::Ridge => vec![0.0; t.ridge_dim],
    }
}

/// Aggregation weights of the first round: equal dataset sizes, configured
/// priorities, and the statistics of each group's initial model. A constant
/// initial model falls back to unit deviation and zero mean.
pub fn first_round_weights(cfg: &ScenarioConfig, group_of_device: &[usize], seed: u64) -> AggregationWeights {
    let sizes = vec![cfg.training.samples_per_device.max(1); group_of_device.len()];
    let mut w = AggregationWeights::from_dataset_sizes(group_of_device, &sizes);
    w.omega = cfg.omega();
    for g in 0..cfg.system.groups {
        if let Ok((_, st)) = normalize(&initial_model(cfg, seed, g)) {
            for (k, &q) in group_of_device.iter().enumerate() {
                if q == g {
                    w.nu[k] = st.std;
                    w.theta_bar[k] = st.mean;
                }
            }
        }
    }
    w
}

fn sweep_seed(cfg: &ScenarioConfig, registry: &SchemeRegistry, seed: u64, seed_count: usize) -> Result<Vec<ResultRow>, RunnerError> {
    let inst = Instance::generate(&cfg.system_params(), networks(cfg), seed)?;
    let channels = inst.round(0);
    let weights = first_round_weights(cfg, &inst.geometry.group_of_device, seed);
    let mut grid: Vec<f64> = cfg.sweep.power_dbm.clone();
    grid.sort_by(f64::total_cmp);
    let dims = fronthaul_dims(cfg);
    let mut rows = Vec::new();
    for arch in &cfg.system.architectures {
        let scheme = registry.get(arch)?;
        let fronthaul = scheme.cooperation_level().map(|l| fronthaul_scalars(l, &dims));
        let mut prev: Option<TxCoefficients> = None;
        for &dbm in &grid {
            let power = vec![dbm_to_watts(dbm); cfg.system.devices];
            let inputs = channels.inputs(&inst, &weights, &power);
            let mut design = scheme.design(&inputs, &cfg.solver_options(true), None)?;
            // warm start from the previous power level keeps the sweep monotone
            if let Some(b) = &prev {
                let warm = scheme.design(&inputs, &cfg.solver_options(true), Some(b))?;
                if warm.weighted_mse < design.weighted_mse {
                    design = warm;
                }
            }
            let mut row = ResultRow::new(RowKind::Sweep, arch, Some(seed), dbm, seed_count);
            row.group_mse = design.group_mse.clone();
            row.weighted_mse = Some(design.weighted_mse);
            row.fronthaul = fronthaul;
            if let Some(h) = &design.history {
                row.iterations = Some(h.iterations);
                row.terminated_by = Some(format!("{:?}", h.terminated_by).to_lowercase());
                let full = scheme.design(&inputs, &cfg.solver_options(false), None)?;
                let mut fp = ResultRow::new(RowKind::Sweep, &format!("{arch}-fullpower"), Some(seed), dbm, seed_count);
                fp.group_mse = full.group_mse;
                fp.weighted_mse = Some(full.weighted_mse);
                fp.fronthaul = fronthaul;
                rows.push(fp);
            }
            rows.push(row);
            prev = Some(design.b);
        }
    }
    Ok(rows)
}

/// Weighted sum-MSE of every configured architecture at each power level,
/// with and without coefficient optimization, for seeds
/// `cfg.seed .. cfg.seed + cfg.sweep.seeds`. Returns per-seed rows followed
/// by seed averages.
pub fn run_mse_sweep(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<ResultRow>, RunnerError> {
    cfg.validate().map_err(super::ConfigError::from)?;
    let registry = SchemeRegistry::builtin();
    let n = cfg.sweep.seeds;
    let per_seed: Vec<Vec<ResultRow>> = with_threads(threads, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| sweep_seed(cfg, &registry, cfg.seed + i, n))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let mut rows: Vec<ResultRow> = per_seed.into_iter().flatten().collect();
    let means = seed_means(&rows, RowKind::SweepMean);
    rows.extend(means);
    Ok(rows)
}
