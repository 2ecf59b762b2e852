use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{FlError, LocalObjective};

/// Design matrix (rows are samples) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// `‖Aθ − y‖²/(2n) + λ‖θ‖²/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ridge {
    pub dim: usize,
    pub lambda: f64,
}

impl Ridge {
    fn check(&self, theta: &[f64], data: &RegressionData) -> Result<(), FlError> {
        for got in [theta.len(), data.a.ncols()] {
            if got != self.dim {
                return Err(FlError::ShapeMismatch { expected: self.dim, got });
            }
        }
        Ok(())
    }
}

impl LocalObjective for Ridge {
    type Data = RegressionData;

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &[f64], data: &RegressionData) -> Result<f64, FlError> {
        self.check(theta, data)?;
        let t = DVector::from_column_slice(theta);
        let n = data.a.nrows().max(1) as f64;
        let r = &data.a * &t - &data.y;
        Ok(r.norm_squared() / (2.0 * n) + self.lambda * t.norm_squared() / 2.0)
    }

    fn gradient(&self, theta: &[f64], data: &RegressionData) -> Result<Vec<f64>, FlError> {
        self.check(theta, data)?;
        let t = DVector::from_column_slice(theta);
        let n = data.a.nrows().max(1) as f64;
        let g = data.a.transpose() * (&data.a * &t - &data.y) / n + &t * self.lambda;
        Ok(g.as_slice().to_vec())
    }
}

/// A group's strongly convex objective `Σ_k γ_k F_k` with known constants.
#[derive(Debug, Clone)]
pub struct ConvexTask {
    pub ridge: Ridge,
    pub devices: Vec<RegressionData>,
    pub gamma: Vec<f64>,
    hessian: DMatrix<f64>,
    optimum: DVector<f64>,
    chi: f64,
    xi: f64,
}

impl ConvexTask {
    pub fn new(ridge: Ridge, devices: Vec<RegressionData>, gamma: Vec<f64>) -> Result<Self, FlError> {
        let d = ridge.dim;
        let mut hessian = DMatrix::identity(d, d) * ridge.lambda;
        let mut rhs = DVector::zeros(d);
        for (data, g) in devices.iter().zip(&gamma) {
            if data.a.ncols() != d {
                return Err(FlError::ShapeMismatch { expected: d, got: data.a.ncols() });
            }
            let n = data.a.nrows().max(1) as f64;
            hessian += data.a.transpose() * &data.a * (g / n);
            rhs += data.a.transpose() * &data.y * (g / n);
        }
        let eig = SymmetricEigen::new(hessian.clone()).eigenvalues;
        let chi = eig.max();
        let xi = eig.min();
        if xi <= 0.0 {
            return Err(FlError::InvalidConstants { chi, xi });
        }
        let optimum = hessian
            .clone()
            .cholesky()
            .expect("hessian is positive definite")
            .solve(&rhs);
        Ok(Self { ridge, devices, gamma, hessian, optimum, chi, xi })
    }

    /// Gaussian features, a random true model and Gaussian label noise.
    pub fn synthetic<R: Rng + ?Sized>(
        dim: usize,
        devices: usize,
        samples: usize,
        lambda: f64,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Self, FlError> {
        let truth = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = (0..devices)
            .map(|_| {
                let a = DMatrix::from_fn(samples, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &a * &truth + DVector::from_fn(samples, |_, _| noise_std * rng.sample::<f64, _>(StandardNormal));
                RegressionData { a, y }
            })
            .collect();
        Self::new(Ridge { dim, lambda }, data, vec![1.0 / devices as f64; devices])
    }

    /// Smoothness constant.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Strong convexity constant.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Contraction factor `1 − ξ/χ` of a gradient step with `η = 1/χ`.
    pub fn lambda(&self) -> f64 {
        1.0 - self.xi / self.chi
    }

    pub fn optimum(&self) -> &[f64] {
        self.optimum.as_slice()
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64, FlError> {
        self.devices
            .iter()
            .zip(&self.gamma)
            .map(|(d, g)| self.ridge.loss(theta, d).map(|l| g * l))
            .sum()
    }

    /// `F(θ) − F(θ*)`, evaluated as `½(θ−θ*)ᵀH(θ−θ*)` to avoid cancellation.
    pub fn gap(&self, theta: &[f64]) -> f64 {
        let e = DVector::from_column_slice(theta) - &self.optimum;
        0.5 * e.dot(&(&self.hessian * &e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::local_update;
    use crate::rng::{stream, Purpose};

    #[test]
    fn constants_are_ordered_and_gap_matches_values() {
        let task = ConvexTask::synthetic(4, 3, 20, 0.1, 0.5, &mut stream(1, 0, Purpose::Dataset, 0)).unwrap();
        assert!(task.xi() <= task.chi());
        let theta = [0.3, -0.2, 1.0, 0.5];
        let direct = task.value(&theta).unwrap() - task.value(task.optimum()).unwrap();
        assert!((task.gap(&theta) - direct).abs() < 1e-12);
        assert!(task.gap(task.optimum()).abs() < 1e-24);
    }

    #[test]
    fn gradient_step_contracts_by_lambda() {
        let task = ConvexTask::synthetic(5, 3, 30, 0.05, 0.3, &mut stream(2, 0, Purpose::Dataset, 0)).unwrap();
        let eta = 1.0 / task.chi();
        let mut theta = vec![1.0; 5];
        for _ in 0..20 {
            let before = task.gap(&theta);
            let locals: Vec<Vec<f64>> = task
                .devices
                .iter()
                .map(|d| local_update(&task.ridge, &theta, d, eta).unwrap())
                .collect();
            let refs: Vec<&[f64]> = locals.iter().map(Vec::as_slice).collect();
            theta = crate::fl::desired_global(&refs, &task.gamma);
            assert!(task.gap(&theta) <= task.lambda() * before);
        }
    }

    #[test]
    fn scalar_quadratic_constants() {
        let data = RegressionData {
            a: DMatrix::from_element(1, 1, 1.0),
            y: DVector::from_element(1, 1.0),
        };
        let task = ConvexTask::new(Ridge { dim: 1, lambda: 0.0 }, vec![data], vec![1.0]).unwrap();
        assert_eq!((task.chi(), task.xi(), task.lambda()), (1.0, 1.0, 0.0));
        assert_eq!(task.optimum(), &[1.0]);
    }
}
