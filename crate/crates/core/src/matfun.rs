//! Dense matrix-function and quadrature kernels.
//!
//! Matrix exponential by scaling and squaring with diagonal Padé approximants,
//! `φ`-functions through an augmented block exponential, Gauss–Legendre rules,
//! and QR-based fusion of covariance square-root factors.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Right square-root of a symmetric positive semi-definite matrix, `M = F·Fᵀ`.
///
/// The factor is neither required to be square nor triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtFactor(DMatrix<f64>);

impl SqrtFactor {
    pub fn new(factor: DMatrix<f64>) -> Self {
        Self(factor)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    /// The represented matrix `F·Fᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<DMatrix<f64>> for SqrtFactor {
    fn from(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

/// Quadrature nodes and positive weights on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(invalid(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé coefficients and backward-error thresholds (Higham, 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for arguments within the scaling threshold")
}

fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let a2 = a * a;
    let mut even = DMatrix::identity(n, n) * coeffs[0];
    let mut odd = DMatrix::identity(n, n) * coeffs[1];
    let mut power = DMatrix::identity(n, n);
    for k in 1..coeffs.len() / 2 {
        power = &power * &a2;
        even += &power * coeffs[2 * k];
        odd += &power * coeffs[2 * k + 1];
    }
    pade_solve(a * odd, even)
}

/// Matrix exponential `exp(M)`.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "matrix exponential argument")?;
    let n = m.nrows();
    let norm = norm1(m);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs = match degree {
                3 => &PADE3[..],
                5 => &PADE5[..],
                7 => &PADE7[..],
                _ => &PADE9[..],
            };
            return Ok(pade_low(m, coeffs));
        }
    }

    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let a = m * 2f64.powi(-s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = pade_solve(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `φ_0(Z), …, φ_k(Z)` from a single exponential of the block companion
/// matrix `[[Z, I, 0, …], [0, 0, I, …], …, [0, …, 0]]` of size `n(k+1)`,
/// whose first block row is `[φ_0(Z), φ_1(Z), …, φ_k(Z)]`.
pub fn phi_all(k: usize, z: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    check_square(z, "phi-function argument")?;
    let n = z.nrows();
    if k == 0 {
        return Ok(vec![expm(z)?]);
    }
    let size = n * (k + 1);
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(z);
    for i in 0..k {
        aug.view_mut((i * n, (i + 1) * n), (n, n))
            .fill_diagonal(1.0);
    }
    let e = expm(&aug)?;
    Ok((0..=k)
        .map(|j| e.view((0, j * n), (n, n)).into_owned())
        .collect())
}

/// `φ_k(Z) = ∫₀¹ exp(Z(1−τ)) τ^{k−1}/(k−1)! dτ`, with `φ_0 = exp`.
pub fn phi(k: usize, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(phi_all(k, z)?
        .pop()
        .expect("phi_all returns k + 1 matrices"))
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let mf = m as f64;
    let dp = mf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `m`-node Gauss–Legendre rule on `[a, b]`, nodes in increasing order.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(invalid("Gauss-Legendre rule needs at least one node"));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!(
            "quadrature interval [{a}, {b}] is empty or not finite"
        )));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    if m == 1 {
        nodes[0] = mid;
        weights[0] = b - a;
        return Ok(QuadratureRule { nodes, weights });
    }
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; mirror for the symmetric partner.
        nodes[m - 1 - i] = mid + half * x;
        nodes[i] = mid - half * x;
        weights[m - 1 - i] = half * w;
        weights[i] = half * w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = mid;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Square-root of `Σ Fᵢ·Fᵢᵀ` via a QR decomposition of the stacked `[F₁ … F_k]ᵀ`.
///
/// The result has the common row count `r` and at most `r` columns.
pub fn qr_fuse(factors: &[&DMatrix<f64>]) -> Result<SqrtFactor> {
    let first = factors
        .first()
        .ok_or_else(|| invalid("qr_fuse needs at least one factor"))?;
    let rows = first.nrows();
    if let Some(bad) = factors.iter().find(|f| f.nrows() != rows) {
        return Err(invalid(format!(
            "qr_fuse factors must share the row count {rows}, got {}",
            bad.nrows()
        )));
    }
    let cols: usize = factors.iter().map(|f| f.ncols()).sum();
    if rows == 0 {
        return Ok(SqrtFactor::zeros(0, 0));
    }
    if cols == 0 {
        return Ok(SqrtFactor::zeros(rows, 0));
    }
    let mut stacked = DMatrix::zeros(cols, rows);
    let mut offset = 0;
    for f in factors {
        stacked
            .view_mut((offset, 0), (f.ncols(), rows))
            .copy_from(&f.transpose());
        offset += f.ncols();
    }
    let r = stacked.qr().r();
    Ok(SqrtFactor(r.transpose()))
}

/// Convenience wrapper over [`qr_fuse`] for [`SqrtFactor`] values.
pub fn fuse(factors: &[&SqrtFactor]) -> Result<SqrtFactor> {
    let mats: Vec<&DMatrix<f64>> = factors.iter().map(|f| f.matrix()).collect();
    qr_fuse(&mats)
}

/// Frobenius norm of `a − b` relative to `‖b‖_F` (absolute when `b = 0`).
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub(crate) fn block_diag_scale(scale: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    out
}
