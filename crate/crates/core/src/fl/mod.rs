//! Federated learning over the simulated uplink.

mod fnn;
mod ota;
mod ridge;

pub use fnn::*;
pub use ota::*;
pub use ridge::*;

use thiserror::Error;

use crate::aggregation::AggregationError;

#[derive(Debug, Error, PartialEq)]
pub enum FlError {
    #[error("parameter vector has zero variance")]
    DegenerateVariance,
    #[error("parameter vector needs at least 2 entries, got {0}")]
    TooShort(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("strong convexity {xi} exceeds smoothness {chi}")]
    InvalidConstants { chi: f64, xi: f64 },
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

/// `s = (θ − mean)/std` with the population standard deviation.
pub fn normalize(theta: &[f64]) -> Result<(Vec<f64>, NormalizationStats), FlError> {
    if theta.len() < 2 {
        return Err(FlError::TooShort(theta.len()));
    }
    let d = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / d;
    let var = theta.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
    let std = var.sqrt();
    if std == 0.0 || !std.is_finite() {
        return Err(FlError::DegenerateVariance);
    }
    let s = theta.iter().map(|x| (x - mean) / std).collect();
    Ok((s, NormalizationStats { mean, std }))
}

pub fn denormalize(s: &[f64], stats: NormalizationStats) -> Vec<f64> {
    s.iter().map(|x| x * stats.std + stats.mean).collect()
}

/// A per-device training objective.
pub trait LocalObjective {
    type Data;

    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64], data: &Self::Data) -> Result<f64, FlError>;

    fn gradient(&self, theta: &[f64], data: &Self::Data) -> Result<Vec<f64>, FlError>;
}

/// One full-batch gradient step from the group's global model.
pub fn local_update<O: LocalObjective>(
    objective: &O,
    global: &[f64],
    data: &O::Data,
    eta: f64,
) -> Result<Vec<f64>, FlError> {
    let g = objective.gradient(global, data)?;
    Ok(global.iter().zip(&g).map(|(t, g)| t - eta * g).collect())
}

/// `Σ_k γ_k θ_k`.
pub fn desired_global(locals: &[&[f64]], gamma: &[f64]) -> Vec<f64> {
    let d = locals.first().map_or(0, |t| t.len());
    let mut out = vec![0.0; d];
    for (theta, g) in locals.iter().zip(gamma) {
        for (o, t) in out.iter_mut().zip(theta.iter()) {
            *o += g * t;
        }
    }
    out
}

/// Upper bound on the optimality gap after `T = errors.len()` rounds:
/// `λ^T·gap₁ + Σ_t χ λ^{T−t}/2 · E‖e^{t+1}‖²` with `λ = 1 − ξ/χ`.
pub fn convergence_bound(chi: f64, xi: f64, initial_gap: f64, errors: &[f64]) -> Result<f64, FlError> {
    if xi > chi || xi <= 0.0 {
        return Err(FlError::InvalidConstants { chi, xi });
    }
    let lambda = 1.0 - xi / chi;
    let t = errors.len();
    let mut bound = lambda.powi(t as i32) * initial_gap;
    for (i, e) in errors.iter().enumerate() {
        bound += chi * lambda.powi((t - 1 - i) as i32) / 2.0 * e;
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_example() {
        let (s, st) = normalize(&[1.0, 2.0, 3.0]).unwrap();
        assert!((st.mean - 2.0).abs() < 1e-15);
        assert!((st.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s[0] + 1.224744871391589).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
        assert!((s[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert_eq!(normalize(&[4.0; 5]).unwrap_err(), FlError::DegenerateVariance);
        assert_eq!(normalize(&[4.0]).unwrap_err(), FlError::TooShort(1));
    }

    struct Quadratic;

    impl LocalObjective for Quadratic {
        type Data = f64;

        fn dim(&self) -> usize {
            1
        }

        fn loss(&self, theta: &[f64], target: &f64) -> Result<f64, FlError> {
            Ok((theta[0] - target).powi(2) / 2.0)
        }

        fn gradient(&self, theta: &[f64], target: &f64) -> Result<Vec<f64>, FlError> {
            Ok(vec![theta[0] - target])
        }
    }

    #[test]
    fn local_update_examples() {
        assert_eq!(local_update(&Quadratic, &[0.0], &1.0, 1.0).unwrap(), vec![1.0]);
        assert_eq!(local_update(&Quadratic, &[1.0], &1.0, 0.3).unwrap(), vec![1.0]);
    }

    #[test]
    fn desired_global_examples() {
        let a = [0.0, 0.0, 0.0];
        let b = [2.0, 2.0, 2.0];
        assert_eq!(desired_global(&[&a, &b], &[0.5, 0.5]), vec![1.0; 3]);
        let x = [0.3, -1.0];
        assert_eq!(desired_global(&[&x, &x, &x, &x], &[0.25; 4]), x.to_vec());
        let w = crate::aggregation::AggregationWeights::from_dataset_sizes(&[0, 0, 0], &[500, 500, 500]);
        assert!(w.gamma.iter().all(|g| (g - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(convergence_bound(1.0, 1.0, 5.0, &[0.0]).unwrap(), 0.0);
        assert!((convergence_bound(2.0, 1.0, 1.0, &[0.0; 3]).unwrap() - 0.125).abs() < 1e-15);
        assert!(matches!(convergence_bound(1.0, 2.0, 1.0, &[]), Err(FlError::InvalidConstants { .. })));
    }

    proptest! {
        #[test]
        fn normalize_round_trip(theta in prop::collection::vec(-1e3f64..1e3, 2..64)) {
            prop_assume!(theta.iter().any(|x| *x != theta[0]));
            let (s, st) = normalize(&theta).unwrap();
            let d = s.len() as f64;
            prop_assert!((s.iter().sum::<f64>() / d).abs() < 1e-9);
            prop_assert!((s.iter().map(|x| x * x).sum::<f64>() / d - 1.0).abs() < 1e-9);
            prop_assert!(st.std >= 0.0);
            for (a, b) in denormalize(&s, st).iter().zip(&theta) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(st.std));
            }
        }
    }
}
