//! Pilot assignment and MMSE channel estimation under pilot contamination.

use rand::Rng;
use thiserror::Error;

use crate::channel::{ArrayStatistics, ChannelRealization};
use crate::linalg::{c, complex_normal, hermitian_part, hermitian_solve, hermitian_solve_mat, CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("group {group} has {size} devices but only {tau_p} pilots exist")]
    PilotShortage { group: usize, size: usize, tau_p: usize },
    #[error("pilot length must be at least 1")]
    ZeroPilotLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub tau_p: usize,
    pub pilot_of_device: Vec<usize>,
    /// Pilot transmit power per device (W).
    pub pilot_power: Vec<f64>,
}

impl PilotPlan {
    /// Devices sharing device `k`'s pilot, `k` included.
    pub fn sharing(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.pilot_of_device[k];
        self.pilot_of_device
            .iter()
            .enumerate()
            .filter(move |(_, &q)| q == p)
            .map(|(i, _)| i)
    }
}

/// Round-robin pilots within each group: the `i`-th device of a group gets
/// pilot `i`. Groups reuse the same pilot set.
pub fn assign_pilots(
    group_of_device: &[usize],
    tau_p: usize,
    pilot_power_w: f64,
) -> Result<PilotPlan, EstimationError> {
    if tau_p == 0 {
        return Err(EstimationError::ZeroPilotLength);
    }
    let groups = group_of_device.iter().max().map_or(0, |g| g + 1);
    let mut next = vec![0usize; groups];
    let mut pilot_of_device = Vec::with_capacity(group_of_device.len());
    for &g in group_of_device {
        pilot_of_device.push(next[g]);
        next[g] += 1;
    }
    if let Some((group, &size)) = next.iter().enumerate().find(|(_, &n)| n > tau_p) {
        return Err(EstimationError::PilotShortage { group, size, tau_p });
    }
    Ok(PilotPlan {
        tau_p,
        pilot_of_device,
        pilot_power: vec![pilot_power_w; group_of_device.len()],
    })
}

/// Despread pilot observations, `y[pilot][receiver]`.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub y: Vec<Vec<CVec>>,
}

impl PilotObservation {
    pub fn for_device(&self, plan: &PilotPlan, k: usize, receiver: usize) -> &CVec {
        &self.y[plan.pilot_of_device[k]][receiver]
    }
}

/// `y_{p,l} = Σ_{i uses p} √(p_i τ_p) h_il + n`, `n ~ CN(0, δ² I)`.
pub fn pilot_observation<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    plan: &PilotPlan,
    noise_var: f64,
    rng: &mut R,
) -> PilotObservation {
    let receivers = channels.h.first().map_or(0, Vec::len);
    let antennas = channels.h.first().and_then(|r| r.first()).map_or(0, |h| h.len());
    let sigma = noise_var.sqrt();
    let y = (0..plan.tau_p)
        .map(|p| {
            (0..receivers)
                .map(|l| {
                    let mut y = complex_normal(antennas, rng) * c(sigma, 0.0);
                    for (i, _) in plan.pilot_of_device.iter().enumerate().filter(|(_, &q)| q == p) {
                        let gain = (plan.pilot_power[i] * plan.tau_p as f64).sqrt();
                        y += &channels.h[i][l] * c(gain, 0.0);
                    }
                    y
                })
                .collect()
        })
        .collect();
    PilotObservation { y }
}

/// MMSE estimate of one link with its estimate and error covariances.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_hat: CVec,
    pub b: CMat,
    pub c: CMat,
}

fn xi_matrix(stats: &ArrayStatistics, plan: &PilotPlan, k: usize, l: usize, noise_var: f64) -> CMat {
    let n = stats.antennas;
    let mut xi = CMat::identity(n, n) * c(noise_var, 0.0);
    for i in plan.sharing(k) {
        xi += stats.link(i, l).r() * c(plan.pilot_power[i] * plan.tau_p as f64, 0.0);
    }
    xi
}

/// `ĥ = √(p_k τ_p) R Ξ⁻¹ y`, `B = p_k τ_p R Ξ⁻¹ R`, `C = R − B`.
pub fn mmse_estimate(
    y: &CVec,
    plan: &PilotPlan,
    stats: &ArrayStatistics,
    k: usize,
    l: usize,
    noise_var: f64,
) -> ChannelEstimate {
    let r = stats.link(k, l).r();
    let xi = xi_matrix(stats, plan, k, l, noise_var);
    let pt = plan.pilot_power[k] * plan.tau_p as f64;
    let h_hat = r * hermitian_solve(&xi, y) * c(pt.sqrt(), 0.0);
    let xi_inv_r = hermitian_solve_mat(&xi, r);
    let b = hermitian_part(&(r * xi_inv_r * c(pt, 0.0)));
    let c_mat = hermitian_part(&(r - &b));
    ChannelEstimate { h_hat, b, c: c_mat }
}

#[derive(Debug, Clone)]
struct LinkEstimator {
    /// `√(p_k τ_p) R Ξ⁻¹`
    gain: CMat,
    b: CMat,
    c: CMat,
}

/// Precomputed MMSE filters for every link. Filters and covariances depend
/// only on statistics, so they are built once and applied to each new pilot
/// observation.
#[derive(Debug, Clone)]
pub struct MmseEstimator {
    links: Vec<Vec<LinkEstimator>>,
}

impl MmseEstimator {
    pub fn new(stats: &ArrayStatistics, plan: &PilotPlan, noise_var: f64) -> Self {
        let links = (0..stats.devices())
            .map(|k| {
                (0..stats.receivers())
                    .map(|l| {
                        let r = stats.link(k, l).r();
                        let xi = xi_matrix(stats, plan, k, l, noise_var);
                        let pt = plan.pilot_power[k] * plan.tau_p as f64;
                        // Ξ⁻¹R, whose adjoint is RΞ⁻¹
                        let xi_inv_r = hermitian_solve_mat(&xi, r);
                        let gain = xi_inv_r.adjoint() * c(pt.sqrt(), 0.0);
                        let b = hermitian_part(&(r * &xi_inv_r * c(pt, 0.0)));
                        let c_mat = hermitian_part(&(r - &b));
                        LinkEstimator { gain, b, c: c_mat }
                    })
                    .collect()
            })
            .collect();
        Self { links }
    }

    pub fn devices(&self) -> usize {
        self.links.len()
    }

    pub fn receivers(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }

    /// Estimate covariance `B` of link (k, l).
    pub fn b(&self, k: usize, l: usize) -> &CMat {
        &self.links[k][l].b
    }

    /// Error covariance `C` of link (k, l).
    pub fn c(&self, k: usize, l: usize) -> &CMat {
        &self.links[k][l].c
    }

    /// Estimates `ĥ[device][receiver]` from one pilot observation.
    pub fn estimate(&self, obs: &PilotObservation, plan: &PilotPlan) -> Vec<Vec<CVec>> {
        self.links
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(l, link)| &link.gain * obs.for_device(plan, k, l))
                    .collect()
            })
            .collect()
    }

    /// Error covariances as `[device][receiver]`.
    pub fn error_covariances(&self) -> Vec<Vec<CMat>> {
        self.links
            .iter()
            .map(|row| row.iter().map(|l| l.c.clone()).collect())
            .collect()
    }
}
