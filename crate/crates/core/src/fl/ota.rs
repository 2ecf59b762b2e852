use super::{desired_global, normalize, FlError, NormalizationStats};
use crate::aggregation::{AggregationScheme, AggregationWeights, Design, Infrastructure, RoundInputs};
use crate::rng::SimRng;

/// Normalized symbols and the matching aggregation weights for one round.
#[derive(Debug, Clone)]
pub struct PreparedRound {
    pub symbols: Vec<Vec<f64>>,
    pub stats: Vec<NormalizationStats>,
    pub weights: AggregationWeights,
}

/// Normalizes every local model and fills `ν` and `θ̄` into a copy of `base`.
pub fn prepare_round(locals: &[Vec<f64>], base: &AggregationWeights) -> Result<PreparedRound, FlError> {
    let mut symbols = Vec::with_capacity(locals.len());
    let mut stats = Vec::with_capacity(locals.len());
    for theta in locals {
        let (s, st) = normalize(theta)?;
        symbols.push(s);
        stats.push(st);
    }
    let mut weights = base.clone();
    weights.nu = stats.iter().map(|s| s.std).collect();
    weights.theta_bar = stats.iter().map(|s| s.mean).collect();
    Ok(PreparedRound { symbols, stats, weights })
}

#[derive(Debug, Clone)]
pub struct OtaOutcome {
    /// Real part of each group's recovery.
    pub recovered: Vec<Vec<f64>>,
    /// `Σ_d (θ̃_d − Re θ̂_d)²` per group.
    pub error: Vec<f64>,
    /// `Σ_d |θ̃_d − θ̂_d|²` per group, the quantity the closed-form MSE predicts per slot.
    pub complex_error: Vec<f64>,
}

/// Per-group desired models `Σ_{k∈g} γ_k θ_k`.
pub fn desired_per_group(locals: &[Vec<f64>], weights: &AggregationWeights) -> Vec<Vec<f64>> {
    (0..weights.groups())
        .map(|g| {
            let members: Vec<usize> = weights.members(g).collect();
            let refs: Vec<&[f64]> = members.iter().map(|&k| locals[k].as_slice()).collect();
            let gamma: Vec<f64> = members.iter().map(|&k| weights.gamma[k]).collect();
            desired_global(&refs, &gamma)
        })
        .collect()
}

/// Transmits every parameter slot over the air. All devices transmit in
/// every slot; a device whose model is shorter than the longest one sends
/// zeros after its last entry. Schemes without a channel return the desired
/// models unchanged.
pub fn ota_round(
    scheme: &dyn AggregationScheme,
    design: &Design,
    inputs: &RoundInputs<'_>,
    locals: &[Vec<f64>],
    prepared: &PreparedRound,
    rng: &mut SimRng,
) -> Result<OtaOutcome, FlError> {
    let desired = desired_per_group(locals, inputs.weights);
    let groups = desired.len();
    if scheme.infrastructure() == Infrastructure::None {
        return Ok(OtaOutcome {
            recovered: desired,
            error: vec![0.0; groups],
            complex_error: vec![0.0; groups],
        });
    }
    let slots = prepared.symbols.iter().map(Vec::len).max().unwrap_or(0);
    let mut recovered: Vec<Vec<f64>> = desired.iter().map(|d| Vec::with_capacity(d.len())).collect();
    let mut error = vec![0.0; groups];
    let mut complex_error = vec![0.0; groups];
    let mut slot = vec![0.0; locals.len()];
    for d in 0..slots {
        for (x, s) in slot.iter_mut().zip(&prepared.symbols) {
            *x = s.get(d).copied().unwrap_or(0.0);
        }
        let est = scheme.recover_slot(design, inputs, &slot, rng)?;
        for g in 0..groups {
            if let Some(&want) = desired[g].get(d) {
                recovered[g].push(est[g].re);
                error[g] += (want - est[g].re).powi(2);
                complex_error[g] += (est[g] - want).norm_sqr();
            }
        }
    }
    Ok(OtaOutcome {
        recovered,
        error,
        complex_error,
    })
}
