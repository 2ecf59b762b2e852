//! Aggregation MSE, optimal receive combiners, KKT-based transmit coefficient
//! optimization and the alternating optimization loop.
//!
//! All receiver architectures share one formulation: each group `g` is
//! decoded from a [`ReceiverView`], i.e. a channel estimate and an error
//! covariance per device as seen by that group's receiver. The fully
//! centralized cell-free receiver gives every group the same stacked view;
//! the cellular baseline gives group `g` the view of its serving BS; local
//! per-AP processing uses the view of a single AP.

mod levels;
mod scheme;

pub use levels::*;
pub use scheme::*;

use thiserror::Error;

use crate::linalg::{c, hermitian_solve_mat, quad_form, CMat, CVec, C64};

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("scheme `{0}` needs link state that was not provided")]
    MissingLinks(&'static str),
    #[error("weights of group {group} sum to {sum}, expected 1")]
    WeightsNotNormalized { group: usize, sum: f64 },
    #[error("unknown aggregation scheme `{0}`")]
    UnknownScheme(String),
}

/// Complex transmit scalar per device.
#[derive(Debug, Clone, PartialEq)]
pub struct TxCoefficients {
    pub b: Vec<C64>,
}

impl TxCoefficients {
    pub fn full_power(power: &[f64]) -> Self {
        Self {
            b: power.iter().map(|p| c(p.sqrt(), 0.0)).collect(),
        }
    }

    pub fn feasible(&self, power: &[f64]) -> bool {
        self.b.iter().zip(power).all(|(b, p)| b.norm_sqr() <= *p)
    }
}

/// Per-round aggregation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    pub group_of_device: Vec<usize>,
    /// `|D_k| / |D̃_g|` for the device's own group.
    pub gamma: Vec<f64>,
    /// Priority of each group.
    pub omega: Vec<f64>,
    /// Standard deviation of the device's parameters this round.
    pub nu: Vec<f64>,
    /// Mean of the device's parameters this round.
    pub theta_bar: Vec<f64>,
}

impl AggregationWeights {
    /// Weights proportional to local dataset sizes, equal priorities, unit
    /// standard deviations and zero means.
    pub fn from_dataset_sizes(group_of_device: &[usize], sizes: &[usize]) -> Self {
        let groups = group_of_device.iter().max().map_or(0, |g| g + 1);
        let mut totals = vec![0usize; groups];
        for (&g, &s) in group_of_device.iter().zip(sizes) {
            totals[g] += s;
        }
        let gamma = group_of_device
            .iter()
            .zip(sizes)
            .map(|(&g, &s)| s as f64 / totals[g] as f64)
            .collect();
        let k = group_of_device.len();
        Self {
            group_of_device: group_of_device.to_vec(),
            gamma,
            omega: vec![1.0; groups],
            nu: vec![1.0; k],
            theta_bar: vec![0.0; k],
        }
    }

    pub fn devices(&self) -> usize {
        self.group_of_device.len()
    }

    pub fn groups(&self) -> usize {
        self.omega.len()
    }

    /// Desired contribution of device `k` to group `g`'s combined symbol.
    pub fn target(&self, k: usize, g: usize) -> f64 {
        if self.group_of_device[k] == g {
            self.gamma[k] * self.nu[k]
        } else {
            0.0
        }
    }

    /// `Σ_{j∈g} γ_j θ̄_j`, added back after combining.
    pub fn mean_offset(&self, g: usize) -> f64 {
        self.members(g).map(|j| self.gamma[j] * self.theta_bar[j]).sum()
    }

    pub fn members(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of_device
            .iter()
            .enumerate()
            .filter(move |(_, &q)| q == g)
            .map(|(k, _)| k)
    }

    pub fn validate(&self) -> Result<(), AggregationError> {
        for g in 0..self.groups() {
            let sum: f64 = self.members(g).map(|j| self.gamma[j]).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(AggregationError::WeightsNotNormalized { group: g, sum });
            }
        }
        Ok(())
    }
}

/// Channel knowledge of one receiver: per-device estimate and error covariance.
#[derive(Debug, Clone)]
pub struct ReceiverView {
    pub h_hat: Vec<CVec>,
    pub err_cov: Vec<CMat>,
}

impl ReceiverView {
    pub fn dim(&self) -> usize {
        self.h_hat.first().map_or(0, CVec::len)
    }
}

/// Weighted sum-MSE problem for one coherence block.
#[derive(Debug, Clone)]
pub struct AggregationProblem {
    pub views: Vec<ReceiverView>,
    pub view_of_group: Vec<usize>,
    pub weights: AggregationWeights,
    pub power: Vec<f64>,
    pub noise_var: f64,
}

impl AggregationProblem {
    /// Every group decoded from the same receiver.
    pub fn shared(view: ReceiverView, weights: AggregationWeights, power: Vec<f64>, noise_var: f64) -> Self {
        let groups = weights.groups();
        Self {
            views: vec![view],
            view_of_group: vec![0; groups],
            weights,
            power,
            noise_var,
        }
    }

    pub fn view(&self, g: usize) -> &ReceiverView {
        &self.views[self.view_of_group[g]]
    }

    pub fn devices(&self) -> usize {
        self.weights.devices()
    }

    pub fn groups(&self) -> usize {
        self.weights.groups()
    }
}

/// Conditional MSE of group `g` given the channel estimates:
/// `Σ_k (|vᴴĥ_k b_k − t_kg|² + |b_k|² vᴴC_k v) + δ²‖v‖²`.
pub fn group_mse(problem: &AggregationProblem, b: &[C64], v: &CVec, g: usize) -> f64 {
    let view = problem.view(g);
    let mut mse = problem.noise_var * v.norm_squared();
    for (k, bk) in b.iter().enumerate() {
        let x = v.dotc(&view.h_hat[k]) * bk;
        let t = problem.weights.target(k, g);
        mse += (x - c(t, 0.0)).norm_sqr() + bk.norm_sqr() * quad_form(&view.err_cov[k], v);
    }
    mse
}

pub fn weighted_sum_mse(problem: &AggregationProblem, b: &[C64], combiners: &[CVec]) -> f64 {
    combiners
        .iter()
        .enumerate()
        .map(|(g, v)| problem.weights.omega[g] * group_mse(problem, b, v, g))
        .sum()
}

fn system_matrix(problem: &AggregationProblem, view: &ReceiverView, b: &[C64]) -> CMat {
    let n = view.dim();
    let mut a = CMat::identity(n, n) * c(problem.noise_var, 0.0);
    for (k, bk) in b.iter().enumerate() {
        let p = bk.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let h = &view.h_hat[k];
        a += (h * h.adjoint() + &view.err_cov[k]) * c(p, 0.0);
    }
    a
}

fn combiner_rhs(problem: &AggregationProblem, view: &ReceiverView, b: &[C64], g: usize) -> CVec {
    let mut rhs = CVec::zeros(view.dim());
    for j in problem.weights.members(g) {
        let w = problem.weights.gamma[j] * problem.weights.nu[j];
        rhs += &view.h_hat[j] * (b[j] * w);
    }
    rhs
}

/// MSE-minimizing combiner of group `g` for fixed coefficients:
/// `(Σ_k |b_k|²(ĥ_k ĥ_kᴴ + C_k) + δ² I)⁻¹ Σ_{j∈g} γ_j b_j ν_j ĥ_j`.
pub fn optimal_combiner(problem: &AggregationProblem, b: &[C64], g: usize) -> CVec {
    let view = problem.view(g);
    let a = system_matrix(problem, view, b);
    let rhs = combiner_rhs(problem, view, b, g);
    crate::linalg::hermitian_solve(&a, &rhs)
}

/// Optimal combiners for all groups. Groups sharing a view share one
/// factorization of the system matrix.
pub fn optimal_combiners(problem: &AggregationProblem, b: &[C64]) -> Vec<CVec> {
    let mut out = vec![CVec::zeros(0); problem.groups()];
    for (vi, view) in problem.views.iter().enumerate() {
        let groups: Vec<usize> = (0..problem.groups())
            .filter(|&g| problem.view_of_group[g] == vi)
            .collect();
        if groups.is_empty() {
            continue;
        }
        let a = system_matrix(problem, view, b);
        let rhs_cols: Vec<CVec> = groups.iter().map(|&g| combiner_rhs(problem, view, b, g)).collect();
        let sol = hermitian_solve_mat(&a, &CMat::from_columns(&rhs_cols));
        for (col, &g) in groups.iter().enumerate() {
            out[g] = sol.column(col).into_owned();
        }
    }
    out
}

/// Result of the per-device KKT update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcoStep {
    pub b: C64,
    /// Lagrange multiplier of the power constraint.
    pub mu: f64,
}

/// Closed-form KKT solution for device `k` given all combiners:
/// `b = ω_g γ ν ĥᴴv_g / (Σ_p ω_p(|v_pᴴĥ|² + v_pᴴ C v_p) + μ)` with
/// `μ = max(0, ω_g γ ν |v_gᴴĥ| / √P − Σ_p ω_p(…))`.
pub fn tco_step(problem: &AggregationProblem, combiners: &[CVec], k: usize) -> TcoStep {
    let w = &problem.weights;
    let g = w.group_of_device[k];
    let mut denom = 0.0;
    for (p, v) in combiners.iter().enumerate() {
        let view = problem.view(p);
        denom += w.omega[p] * (v.dotc(&view.h_hat[k]).norm_sqr() + quad_form(&view.err_cov[k], v));
    }
    let proj = problem.view(g).h_hat[k].dotc(&combiners[g]);
    let num = proj * (w.omega[g] * w.gamma[k] * w.nu[k]);
    let cap = problem.power[k].sqrt();
    let mu = (num.norm() / cap - denom).max(0.0);
    let mut b = if mu > 0.0 {
        // on the boundary |b| = √P exactly
        num * (cap / num.norm())
    } else if denom > 0.0 {
        num / denom
    } else {
        c(0.0, 0.0)
    };
    while b.norm_sqr() > problem.power[k] {
        b *= 1.0 - f64::EPSILON;
    }
    TcoStep { b, mu }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct SolverOptions {
    pub epsilon: f64,
    pub max_iters: usize,
    /// When false, coefficients stay at full power and only combiners are optimized.
    pub tco: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_iters: 500,
            tco: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Threshold,
    MaxIters,
    /// Coefficients fixed at full power; a single combiner update.
    FixedPower,
}

/// Weighted sum-MSE after every iteration. Entry 0 is the value at the
/// initial coefficients with optimal combiners.
#[derive(Debug, Clone, PartialEq)]
pub struct OptHistory {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub terminated_by: Termination,
}

impl OptHistory {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("history is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct AlternatingSolution {
    pub b: TxCoefficients,
    pub combiners: Vec<CVec>,
    pub multipliers: Vec<f64>,
    pub history: OptHistory,
}

/// Alternates closed-form combiner and coefficient updates. Each iteration
/// updates every combiner, then every coefficient. Stops when the weighted
/// sum-MSE decreases by less than `epsilon` or after `max_iters` iterations.
pub fn alternating_optimize(
    problem: &AggregationProblem,
    opts: &SolverOptions,
    init: Option<&TxCoefficients>,
) -> AlternatingSolution {
    let mut b = match init {
        Some(t) => t
            .b
            .iter()
            .zip(&problem.power)
            .map(|(b, p)| if b.norm_sqr() > *p { b * (p.sqrt() / b.norm()) } else { *b })
            .collect(),
        None => TxCoefficients::full_power(&problem.power).b,
    };
    let mut combiners = optimal_combiners(problem, &b);
    let mut values = vec![weighted_sum_mse(problem, &b, &combiners)];
    let mut multipliers = vec![0.0; problem.devices()];
    if !opts.tco {
        return AlternatingSolution {
            b: TxCoefficients { b },
            combiners,
            multipliers,
            history: OptHistory {
                values,
                iterations: 0,
                terminated_by: Termination::FixedPower,
            },
        };
    }
    let mut terminated_by = Termination::MaxIters;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        if iterations > 1 {
            combiners = optimal_combiners(problem, &b);
        }
        for k in 0..problem.devices() {
            let step = tco_step(problem, &combiners, k);
            b[k] = step.b;
            multipliers[k] = step.mu;
        }
        let f = weighted_sum_mse(problem, &b, &combiners);
        let prev = *values.last().unwrap();
        values.push(f);
        if prev - f < opts.epsilon {
            terminated_by = Termination::Threshold;
            break;
        }
    }
    AlternatingSolution {
        b: TxCoefficients { b },
        combiners,
        multipliers,
        history: OptHistory {
            values,
            iterations,
            terminated_by,
        },
    }
}

#[cfg(test)]
mod tests;
