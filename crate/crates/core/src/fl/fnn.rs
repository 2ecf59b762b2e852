use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{FlError, LocalObjective};

/// Samples as rows with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// One-hidden-layer network with tanh hidden units and a softmax output,
/// trained on cross-entropy. Parameters are flattened as
/// `W1 (hidden × input, row-major), b1, W2 (classes × hidden, row-major), b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fnn {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

struct Layers {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

struct Forward {
    hidden: DMatrix<f64>,
    probs: DMatrix<f64>,
}

impl Fnn {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        Self { input, hidden, classes }
    }

    /// 784-60-10.
    pub fn full_size() -> Self {
        Self::new(784, 60, 10)
    }

    pub fn param_count(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.classes + self.classes
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_count());
        let a1 = (6.0 / (self.input + self.hidden) as f64).sqrt();
        theta.extend((0..self.input * self.hidden).map(|_| rng.random_range(-a1..a1)));
        theta.extend(std::iter::repeat_n(0.0, self.hidden));
        let a2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        theta.extend((0..self.hidden * self.classes).map(|_| rng.random_range(-a2..a2)));
        theta.extend(std::iter::repeat_n(0.0, self.classes));
        theta
    }

    fn unpack(&self, theta: &[f64]) -> Result<Layers, FlError> {
        if theta.len() != self.param_count() {
            return Err(FlError::ShapeMismatch {
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        let (h, i, c) = (self.hidden, self.input, self.classes);
        let (w1, rest) = theta.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        Ok(Layers {
            w1: DMatrix::from_row_slice(h, i, w1),
            b1: DVector::from_column_slice(b1),
            w2: DMatrix::from_row_slice(c, h, w2),
            b2: DVector::from_column_slice(b2),
        })
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), FlError> {
        if x.ncols() != self.input {
            return Err(FlError::ShapeMismatch {
                expected: self.input,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn run(&self, p: &Layers, x: &DMatrix<f64>) -> Forward {
        let mut hidden = x * p.w1.transpose();
        for mut row in hidden.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(p.b1.iter()) {
                *v = (*v + b).tanh();
            }
        }
        let mut probs = &hidden * p.w2.transpose();
        for mut row in probs.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(p.b2.iter()) {
                *v += b;
            }
            let max = row.max();
            row.apply(|v| *v = (*v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        Forward { hidden, probs }
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, theta: &[f64], x: &DMatrix<f64>) -> Result<DMatrix<f64>, FlError> {
        self.check_input(x)?;
        Ok(self.run(&self.unpack(theta)?, x).probs)
    }

    pub fn accuracy(&self, theta: &[f64], data: &LabeledData) -> Result<f64, FlError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let probs = self.forward(theta, &data.features)?;
        let hits = probs
            .row_iter()
            .zip(&data.labels)
            .filter(|(row, &y)| row.transpose().argmax().0 == y)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }
}

impl LocalObjective for Fnn {
    type Data = LabeledData;

    fn dim(&self) -> usize {
        self.param_count()
    }

    /// Mean cross-entropy.
    fn loss(&self, theta: &[f64], data: &LabeledData) -> Result<f64, FlError> {
        let probs = self.forward(theta, &data.features)?;
        let total: f64 = data
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[(i, y)].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / data.len().max(1) as f64)
    }

    fn gradient(&self, theta: &[f64], data: &LabeledData) -> Result<Vec<f64>, FlError> {
        self.check_input(&data.features)?;
        let p = self.unpack(theta)?;
        let fw = self.run(&p, &data.features);
        let n = data.len().max(1) as f64;
        let mut dz = fw.probs;
        for (i, &y) in data.labels.iter().enumerate() {
            dz[(i, y)] -= 1.0;
        }
        dz /= n;
        let dw2 = dz.transpose() * &fw.hidden;
        let db2 = dz.row_sum();
        let mut da = &dz * &p.w2;
        da.zip_apply(&fw.hidden, |d, h| *d *= 1.0 - h * h);
        let dw1 = da.transpose() * &data.features;
        let db1 = da.row_sum();

        let mut g = Vec::with_capacity(self.param_count());
        g.extend(dw1.transpose().iter());
        g.extend(db1.iter());
        g.extend(dw2.transpose().iter());
        g.extend(db2.iter());
        Ok(g)
    }
}
