//! Complex dense linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// (A + A^H) / 2.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Eigen-decomposition of the Hermitian part of `a` with eigenvalues clamped
/// at zero, returned as (eigenvectors, clamped eigenvalues, smallest raw eigenvalue).
fn clamped_eigen(a: &CMat) -> (CMat, Vec<f64>, f64) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let vals = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    (eig.eigenvectors, vals, min)
}

fn reassemble(u: &CMat, vals: impl Iterator<Item = f64>) -> CMat {
    let d = CVec::from_iterator(u.ncols(), vals.map(|v| c(v, 0.0)));
    let scaled = u * CMat::from_diagonal(&d);
    hermitian_part(&(scaled * u.adjoint()))
}

/// Nearest-in-spectrum PSD matrix: negative eigenvalues set to zero.
pub fn clamp_psd(a: &CMat) -> CMat {
    let (u, vals, _) = clamped_eigen(a);
    reassemble(&u, vals.into_iter())
}

/// Hermitian square root `S` with `S S = A`, negative eigenvalues clamped.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let (u, vals, _) = clamped_eigen(a);
    reassemble(&u, vals.into_iter().map(f64::sqrt))
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    clamped_eigen(a).2
}

/// Real symmetric square root with clamping, for real covariance matrices.
pub fn psd_sqrt_real(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    let s = u * DMatrix::from_diagonal(&d) * u.transpose();
    (s, min)
}

/// Solves `A x = b` for Hermitian positive definite `A`. Falls back to LU if
/// the Cholesky factorization breaks down.
pub fn hermitian_solve(a: &CMat, b: &CVec) -> CVec {
    match Cholesky::new(a.clone()) {
        Some(ch) => ch.solve(b),
        None => a
            .clone()
            .lu()
            .solve(b)
            .unwrap_or_else(|| CVec::zeros(b.len())),
    }
}

/// Solves `A X = B` for Hermitian positive definite `A` with a matrix right-hand side.
pub fn hermitian_solve_mat(a: &CMat, b: &CMat) -> CMat {
    match Cholesky::new(a.clone()) {
        Some(ch) => ch.solve(b),
        None => a
            .clone()
            .lu()
            .solve(b)
            .unwrap_or_else(|| CMat::zeros(b.nrows(), b.ncols())),
    }
}

/// Draws a vector with i.i.d. CN(0, 1) entries.
pub fn complex_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re * s, im * s)
    })
}

/// Real part of `x^H A x`.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Stacks column vectors on top of each other.
pub fn stack(parts: &[CVec]) -> CVec {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = CVec::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

/// Relative Frobenius distance `‖a - b‖ / ‖b‖` (absolute when `b` is zero).
pub fn frobenius_rel(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}
