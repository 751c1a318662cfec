#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random square matrix with spectral norm exactly `norm`.
pub fn scaled_matrix(rng: &mut impl Rng, n: usize, norm: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n);
    let s = m.clone().svd(false, false).singular_values.max();
    m * (norm / s)
}

/// Random square matrix with spectral radius `radius` (up to rounding).
pub fn matrix_with_radius(rng: &mut impl Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n);
    let rho = m
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    m * (radius / rho)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
