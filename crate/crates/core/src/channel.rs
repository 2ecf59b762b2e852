//! Large-scale fading, correlated shadowing, spatial correlation and
//! correlated Rayleigh small-scale fading.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{c, clamp_psd, complex_normal, psd_sqrt, psd_sqrt_real, CMat, CVec};
use crate::topology::{wrap_distance, wrap_offset, Area, Point};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("shadowing covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
}

/// Path loss and shadowing parameters of the urban microcell model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct LargeScaleParams {
    pub beta0_db: f64,
    pub alpha: f64,
    pub d0_m: f64,
    pub shadow_std_db: f64,
    pub decorr_m: f64,
}

impl Default for LargeScaleParams {
    fn default() -> Self {
        Self {
            beta0_db: -30.5,
            alpha: 3.67,
            d0_m: 1.0,
            shadow_std_db: 4.0,
            decorr_m: 9.0,
        }
    }
}

/// Path loss in dB without shadowing. Distances below the reference
/// distance are clamped to it.
pub fn pathloss_db(d: f64, params: &LargeScaleParams) -> f64 {
    let d = d.max(params.d0_m);
    params.beta0_db - 10.0 * params.alpha * (d / params.d0_m).log10()
}

/// Covariance (dB²) of the shadowing terms between all devices and a single
/// receiver: `σ² · 2^(-x/decorr)` with `x` the wrap distance between devices.
/// Shadowing towards different receivers is independent, so one matrix
/// serves every receiver.
pub fn shadow_covariance(
    devices: &[Point],
    area: Area,
    params: &LargeScaleParams,
) -> Result<DMatrix<f64>, ChannelError> {
    let var = params.shadow_std_db * params.shadow_std_db;
    let k = devices.len();
    let cov = DMatrix::from_fn(k, k, |i, j| {
        let x = wrap_distance(devices[i], devices[j], area);
        var * 2f64.powf(-x / params.decorr_m)
    });
    if k > 0 && var > 0.0 {
        let (_, min) = psd_sqrt_real(&cov);
        if min < -1e-6 * cov.trace() {
            return Err(ChannelError::NotPsd { min_eigenvalue: min });
        }
    }
    Ok(cov)
}

/// Zero-mean Gaussian vector with covariance `cov` (symmetric square root,
/// eigenvalues clamped at zero).
pub fn sample_shadowing<R: Rng + ?Sized>(cov: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let (root, _) = psd_sqrt_real(cov);
    let z = nalgebra::DVector::from_fn(cov.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    (root * z).iter().copied().collect()
}

/// Spatial correlation matrix of one link, with `beta = trace / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCorrelation {
    pub matrix: CMat,
    pub beta: f64,
}

impl SpatialCorrelation {
    pub fn antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: CMat::zeros(n, n),
            beta: 0.0,
        }
    }
}

/// Gaussian local scattering correlation for a half-wavelength ULA, using the
/// closed-form small angular-spread approximation:
/// `R[m,n] = β · exp(jπ(m−n) sin φ) · exp(−(σ π (m−n) cos φ)² / 2)`.
pub fn local_scattering_correlation(
    n_antennas: usize,
    nominal_angle: f64,
    asd: f64,
    beta: f64,
) -> SpatialCorrelation {
    let (sin, cos) = nominal_angle.sin_cos();
    let raw = CMat::from_fn(n_antennas, n_antennas, |m, n| {
        let dist = m as f64 - n as f64;
        let phase = std::f64::consts::PI * dist * sin;
        let spread = asd * std::f64::consts::PI * dist * cos;
        let amp = beta * (-spread * spread / 2.0).exp();
        c(amp * phase.cos(), amp * phase.sin())
    });
    let mut matrix = clamp_psd(&raw);
    let trace = matrix.trace().re;
    if trace > 0.0 {
        let scale = beta * n_antennas as f64 / trace;
        matrix.iter_mut().for_each(|z| *z *= scale);
    }
    SpatialCorrelation { matrix, beta }
}

/// Correlation matrix and its square root for one (device, receiver) link.
#[derive(Debug, Clone)]
pub struct LinkStatistics {
    pub correlation: SpatialCorrelation,
    pub sqrt: CMat,
}

impl LinkStatistics {
    pub fn new(correlation: SpatialCorrelation) -> Self {
        let sqrt = psd_sqrt(&correlation.matrix);
        Self { correlation, sqrt }
    }

    pub fn r(&self) -> &CMat {
        &self.correlation.matrix
    }
}

/// Long-term statistics of every link between devices and a set of receivers
/// (the APs of the cell-free network or the BSs of the cellular network).
#[derive(Debug, Clone)]
pub struct ArrayStatistics {
    pub antennas: usize,
    /// Indexed `[device][receiver]`.
    pub links: Vec<Vec<LinkStatistics>>,
}

impl ArrayStatistics {
    pub fn devices(&self) -> usize {
        self.links.len()
    }

    pub fn receivers(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }

    pub fn link(&self, device: usize, receiver: usize) -> &LinkStatistics {
        &self.links[device][receiver]
    }

    /// Builds statistics from link geometry. The nominal angle of each link is
    /// the bearing from the receiver to the device's nearest wrapped copy,
    /// measured from the x axis.
    pub fn generate<R: Rng + ?Sized>(
        devices: &[Point],
        receivers: &[Point],
        area: Area,
        antennas: usize,
        params: &LargeScaleParams,
        asd: f64,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let cov = shadow_covariance(devices, area, params)?;
        let shadow_per_receiver: Vec<Vec<f64>> = receivers
            .iter()
            .map(|_| sample_shadowing(&cov, rng))
            .collect();
        let links = devices
            .iter()
            .enumerate()
            .map(|(k, dev)| {
                receivers
                    .iter()
                    .enumerate()
                    .map(|(l, rx)| {
                        let (dx, dy) = wrap_offset(*rx, *dev, area);
                        let d = dx.hypot(dy);
                        let beta_db = pathloss_db(d, params) + shadow_per_receiver[l][k];
                        let beta = 10f64.powf(beta_db / 10.0);
                        let angle = dy.atan2(dx);
                        LinkStatistics::new(local_scattering_correlation(antennas, angle, asd, beta))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { antennas, links })
    }
}

/// One small-scale fading realization, `h[device][receiver]`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: Vec<Vec<CVec>>,
}

impl ChannelRealization {
    /// Stacks device `k`'s channels to all receivers into one vector.
    pub fn stacked(&self, device: usize) -> CVec {
        crate::linalg::stack(&self.h[device])
    }
}

/// `h = R^{1/2} z` with `z ~ CN(0, I)`, independently for every link.
pub fn sample_channels<R: Rng + ?Sized>(stats: &ArrayStatistics, rng: &mut R) -> ChannelRealization {
    let h = stats
        .links
        .iter()
        .map(|row| {
            row.iter()
                .map(|link| &link.sqrt * complex_normal(stats.antennas, rng))
                .collect()
        })
        .collect();
    ChannelRealization { h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_rel, min_eigenvalue};
    use crate::rng::{stream, Purpose};

    #[test]
    fn pathloss_examples() {
        let p = LargeScaleParams::default();
        assert!((pathloss_db(1.0, &p) + 30.5).abs() < 1e-12);
        assert!((pathloss_db(100.0, &p) + 103.9).abs() < 1e-9);
        assert_eq!(pathloss_db(0.5, &p), pathloss_db(1.0, &p));
    }

    #[test]
    fn shadow_covariance_values() {
        let area = Area::new(500.0).unwrap();
        let p = LargeScaleParams::default();
        let pts = [Point::new(10.0, 10.0), Point::new(19.0, 10.0)];
        let cov = shadow_covariance(&pts, area, &p).unwrap();
        assert!((cov[(0, 0)] - 16.0).abs() < 1e-12);
        assert!((cov[(0, 1)] - 8.0).abs() < 1e-12);
        assert_eq!(cov[(0, 1)], cov[(1, 0)]);
    }

    #[test]
    fn shadowing_degenerate_cases() {
        let mut rng = stream(1, 0, Purpose::Shadowing, 0);
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert!(sample_shadowing(&zero, &mut rng).iter().all(|&s| s == 0.0));
        let ones = DMatrix::<f64>::from_element(3, 3, 4.0);
        let draw = sample_shadowing(&ones, &mut rng);
        assert!((draw[0] - draw[1]).abs() < 1e-9 && (draw[1] - draw[2]).abs() < 1e-9);
    }

    #[test]
    fn shadowing_variance_monte_carlo() {
        let mut rng = stream(2, 0, Purpose::Shadowing, 0);
        let cov = DMatrix::<f64>::identity(2, 2) * 16.0;
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_shadowing(&cov, &mut rng)[0].powi(2);
        }
        let var = acc / n as f64;
        // var of the sample variance of N(0,16) is 2·16²/n
        let sd = (2.0 * 256.0 / n as f64).sqrt();
        assert!((var - 16.0).abs() < 3.0 * sd, "{var}");
    }

    #[test]
    fn scattering_scalar_and_rank_one() {
        let r = local_scattering_correlation(1, 0.3, 0.26, 2.5);
        assert!((r.matrix[(0, 0)].re - 2.5).abs() < 1e-12);

        let r = local_scattering_correlation(4, 0.7, 0.0, 1.5);
        let a = CVec::from_fn(4, |m, _| {
            let ph = std::f64::consts::PI * m as f64 * 0.7f64.sin();
            c(ph.cos(), ph.sin())
        });
        let want = (&a * a.adjoint()).map(|z| z * 1.5);
        assert!(frobenius_rel(&r.matrix, &want) < 1e-10);
    }

    /// Exact Gaussian local scattering integral by composite Simpson quadrature.
    fn exact_scattering_entry(dist: f64, angle: f64, asd: f64) -> crate::linalg::C64 {
        let steps = 20_000;
        let (lo, hi) = (-10.0 * asd, 10.0 * asd);
        let h = (hi - lo) / steps as f64;
        let f = |d: f64| {
            let pdf = (-d * d / (2.0 * asd * asd)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * asd);
            let ph = std::f64::consts::PI * dist * (angle + d).sin();
            c(ph.cos() * pdf, ph.sin() * pdf)
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(lo + i as f64 * h) * w;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn scattering_two_antennas_fifteen_degrees() {
        let asd = 15f64.to_radians();
        let r = local_scattering_correlation(2, 0.0, asd, 1.0);
        let got = r.matrix[(0, 1)].norm();
        assert!((got - 0.7132).abs() < 1e-3, "{got}");
        let exact = exact_scattering_entry(1.0, 0.0, asd).norm();
        assert!((exact - got).abs() < 0.02, "exact {exact} closed form {got}");
    }

    #[test]
    fn scattering_matrix_invariants() {
        for (n, ang, beta) in [(4, 0.3, 1e-9), (8, -2.0, 3.0), (2, 1.4, 0.2)] {
            let r = local_scattering_correlation(n, ang, 15f64.to_radians(), beta);
            assert!(frobenius_rel(&r.matrix.adjoint(), &r.matrix) < 1e-14);
            assert!(min_eigenvalue(&r.matrix) >= -1e-9 * r.matrix.trace().re);
            assert!((r.matrix.trace().re / n as f64 - beta).abs() <= 1e-9 * beta);
        }
    }

    #[test]
    fn channel_sampling_limits() {
        let mut rng = stream(3, 0, Purpose::SmallScale, 0);
        let zero = ArrayStatistics {
            antennas: 3,
            links: vec![vec![LinkStatistics::new(SpatialCorrelation::zeros(3))]],
        };
        assert_eq!(sample_channels(&zero, &mut rng).h[0][0].norm(), 0.0);

        let rank1 = local_scattering_correlation(3, 0.4, 0.0, 1.0);
        let a = rank1.matrix.column(0).into_owned();
        let stats = ArrayStatistics {
            antennas: 3,
            links: vec![vec![LinkStatistics::new(rank1)]],
        };
        for _ in 0..10 {
            let h = &sample_channels(&stats, &mut rng).h[0][0];
            // h is parallel to a: |a^H h| = ‖a‖‖h‖
            assert!((a.dotc(h).norm() - a.norm() * h.norm()).abs() < 1e-9 * (1.0 + a.norm() * h.norm()));
        }
    }

    #[test]
    fn empirical_covariance_matches_identity() {
        let mut rng = stream(4, 0, Purpose::SmallScale, 0);
        let r = SpatialCorrelation {
            matrix: CMat::identity(3, 3),
            beta: 1.0,
        };
        let stats = ArrayStatistics {
            antennas: 3,
            links: vec![vec![LinkStatistics::new(r)]],
        };
        let n = 100_000;
        let mut acc = CMat::zeros(3, 3);
        for _ in 0..n {
            let h = &sample_channels(&stats, &mut rng).h[0][0];
            acc += h * h.adjoint();
        }
        acc /= c(n as f64, 0.0);
        assert!(frobenius_rel(&acc, &CMat::identity(3, 3)) < 0.02);
    }

    #[test]
    fn generated_statistics_match_large_scale() {
        let area = Area::new(500.0).unwrap();
        let devices = [Point::new(100.0, 100.0), Point::new(400.0, 250.0), Point::new(490.0, 10.0)];
        let aps = crate::topology::place_aps_grid(4, area).unwrap();
        let mut rng = stream(5, 0, Purpose::Shadowing, 0);
        let stats = ArrayStatistics::generate(&devices, &aps, area, 4, &LargeScaleParams::default(), 15f64.to_radians(), &mut rng).unwrap();
        for row in &stats.links {
            for link in row {
                let r = link.r();
                assert!((r.trace().re / 4.0 - link.correlation.beta).abs() <= 1e-9 * link.correlation.beta);
                assert!(frobenius_rel(&(&link.sqrt * &link.sqrt), r) < 1e-8);
            }
        }
    }
}
