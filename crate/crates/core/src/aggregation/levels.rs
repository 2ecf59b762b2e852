use rand::Rng;

use super::{
    alternating_optimize, group_mse, optimal_combiner, AggregationProblem, AggregationWeights,
    AlternatingSolution, ReceiverView, SolverOptions, TxCoefficients,
};
use crate::channel::ChannelRealization;
use crate::linalg::{block_diag, c, complex_normal, stack, CMat, CVec, C64};

/// Centralized view: per-device estimates stacked over all receivers with
/// block-diagonal error covariances.
pub fn stacked_view(h_hat: &[Vec<CVec>], err_cov: &[Vec<CMat>]) -> ReceiverView {
    ReceiverView {
        h_hat: h_hat.iter().map(|row| stack(row)).collect(),
        err_cov: err_cov.iter().map(|row| block_diag(row)).collect(),
    }
}

/// View of receiver `l` alone.
pub fn local_view(h_hat: &[Vec<CVec>], err_cov: &[Vec<CMat>], l: usize) -> ReceiverView {
    ReceiverView {
        h_hat: h_hat.iter().map(|row| row[l].clone()).collect(),
        err_cov: err_cov.iter().map(|row| row[l].clone()).collect(),
    }
}

/// Cellular problem: group `g` is decoded by BS `g` from that BS's estimates.
/// BSs beyond the number of groups stay idle.
pub fn cellular_problem(
    h_hat: &[Vec<CVec>],
    err_cov: &[Vec<CMat>],
    weights: AggregationWeights,
    power: Vec<f64>,
    noise_var: f64,
) -> AggregationProblem {
    let groups = weights.groups();
    AggregationProblem {
        views: (0..groups).map(|g| local_view(h_hat, err_cov, g)).collect(),
        view_of_group: (0..groups).collect(),
        weights,
        power,
        noise_var,
    }
}

pub fn mse_level3(problem: &AggregationProblem, b: &TxCoefficients, v: &CVec, g: usize) -> f64 {
    group_mse(problem, &b.b, v, g)
}

pub fn combiner_level3(problem: &AggregationProblem, b: &TxCoefficients, g: usize) -> CVec {
    optimal_combiner(problem, &b.b, g)
}

/// Local combiner of group `g`; `local` is a problem built on one AP's view.
pub fn combiner_level1(local: &AggregationProblem, b: &TxCoefficients, g: usize) -> CVec {
    optimal_combiner(local, &b.b, g)
}

/// Local combiners `[group][ap]` at full power.
pub fn level1_combiners(
    h_hat: &[Vec<CVec>],
    err_cov: &[Vec<CMat>],
    weights: &AggregationWeights,
    power: &[f64],
    noise_var: f64,
) -> Vec<Vec<CVec>> {
    let aps = h_hat.first().map_or(0, Vec::len);
    let b = TxCoefficients::full_power(power);
    let per_ap: Vec<Vec<CVec>> = (0..aps)
        .map(|l| {
            let local = AggregationProblem::shared(
                local_view(h_hat, err_cov, l),
                weights.clone(),
                power.to_vec(),
                noise_var,
            );
            super::optimal_combiners(&local, &b.b)
        })
        .collect();
    (0..weights.groups())
        .map(|g| per_ap.iter().map(|row| row[g].clone()).collect())
        .collect()
}

/// Averaging the local estimates equals one stacked combiner `(1/L)[v_1; …; v_L]`.
pub fn level1_stacked(local: &[CVec]) -> CVec {
    stack(local) * c(1.0 / local.len() as f64, 0.0)
}

/// `u_gk[l] = v_glᴴ h_kl`, device `k`'s true channel after each local combiner.
pub fn combined_channels(local: &[CVec], truth: &ChannelRealization, k: usize) -> CVec {
    CVec::from_iterator(
        local.len(),
        local.iter().zip(&truth.h[k]).map(|(v, h)| v.dotc(h)),
    )
}

/// Level-1 MSE of group `g` conditioned on the true combined channels:
/// `Σ_k |aᴴu_k b_k − t_k|² + δ² aᴴZa` with `a = (1/L)·1`.
pub fn mse_level1(
    b: &TxCoefficients,
    local: &[CVec],
    truth: &ChannelRealization,
    weights: &AggregationWeights,
    g: usize,
    noise_var: f64,
) -> f64 {
    let a = 1.0 / local.len() as f64;
    let noise: f64 = local.iter().map(|v| v.norm_squared()).sum::<f64>() * a * a;
    let mut mse = noise_var * noise;
    for (k, bk) in b.b.iter().enumerate() {
        let u = combined_channels(local, truth, k);
        let x = u.sum() * a * bk;
        mse += (x - c(weights.target(k, g), 0.0)).norm_sqr();
    }
    mse
}

/// Received signal at every receiver for one slot:
/// `y_l = Σ_k h_kl b_k s_k + n_l`.
pub fn received_signals<R: Rng + ?Sized>(
    truth: &ChannelRealization,
    b: &TxCoefficients,
    symbols: &[f64],
    noise_var: f64,
    rng: &mut R,
) -> Vec<CVec> {
    let receivers = truth.h.first().map_or(0, Vec::len);
    (0..receivers)
        .map(|l| {
            let n = truth.h[0][l].len();
            let mut y = complex_normal(n, rng) * c(noise_var.sqrt(), 0.0);
            for (k, row) in truth.h.iter().enumerate() {
                y += &row[l] * (b.b[k] * symbols[k]);
            }
            y
        })
        .collect()
}

/// `vᴴy + Σ γθ̄` on the stacked signal.
pub fn recover_level3(v: &CVec, y: &CVec, weights: &AggregationWeights, g: usize) -> C64 {
    v.dotc(y) + weights.mean_offset(g)
}

/// Each AP applies its block of the centralized combiner and forwards the
/// partial result; the CPU sums the partials.
pub fn recover_level2(v: &CVec, y: &[CVec], weights: &AggregationWeights, g: usize) -> C64 {
    let mut start = 0;
    let mut acc = c(0.0, 0.0);
    for yl in y {
        let n = yl.len();
        acc += v.rows(start, n).dotc(yl);
        start += n;
    }
    acc + weights.mean_offset(g)
}

/// Average of the local estimates with the mean offset added once.
pub fn recover_level1(local: &[CVec], y: &[CVec], weights: &AggregationWeights, g: usize) -> C64 {
    let sum: C64 = local.iter().zip(y).map(|(v, yl)| v.dotc(yl)).sum();
    sum / local.len() as f64 + weights.mean_offset(g)
}

pub fn cellular_optimize(problem: &AggregationProblem, opts: &SolverOptions) -> AlternatingSolution {
    alternating_optimize(problem, opts, None)
}
