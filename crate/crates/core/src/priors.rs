//! Gauss–Markov priors over stacked derivative states and their discrete transitions.
//!
//! The state of a prior with ODE dimension `d` and smoothness `q` is
//! `Y = [Y⁽⁰⁾; Y⁽¹⁾; …; Y⁽q⁾]`, each block of length `d`, so entry `i·d + k`
//! holds the `i`-th derivative of component `k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::matfun::{self, SqrtFactor};

/// Dimension bookkeeping for a stacked derivative state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub dim: usize,
    pub order: usize,
}

impl StateLayout {
    pub fn new(dim: usize, order: usize) -> Self {
        Self { dim, order }
    }

    /// Length of the stacked state, `d(q+1)`.
    pub fn state_len(&self) -> usize {
        self.dim * (self.order + 1)
    }

    /// Selection matrix `E_i` with `E_i·Y = Y⁽ⁱ⁾`.
    pub fn projection(&self, i: usize) -> DMatrix<f64> {
        assert!(
            i <= self.order,
            "derivative index {i} exceeds order {}",
            self.order
        );
        let mut e = DMatrix::zeros(self.dim, self.state_len());
        e.view_mut((0, i * self.dim), (self.dim, self.dim))
            .fill_diagonal(1.0);
        e
    }

    /// Block `i` of a stacked vector.
    pub fn block(&self, y: &DVector<f64>, i: usize) -> DVector<f64> {
        y.rows(i * self.dim, self.dim).into_owned()
    }

    /// Rows `i·d .. (i+1)·d` of a stacked matrix.
    pub fn block_rows(&self, m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
        m.rows(i * self.dim, self.dim).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    /// `q`-times integrated Wiener process.
    Iwp,
    /// `q`-times integrated Ornstein–Uhlenbeck process with rate matrix `L`.
    Ioup { rate: DMatrix<f64> },
}

/// Linear time-invariant prior `dY = A·Y dt + κ·B dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussMarkovPrior {
    pub layout: StateLayout,
    pub drift: DMatrix<f64>,
    pub dispersion: DMatrix<f64>,
    pub kind: PriorKind,
}

fn iwp_drift(d: usize, q: usize) -> DMatrix<f64> {
    let n = d * (q + 1);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..q {
        a.view_mut((i * d, (i + 1) * d), (d, d)).fill_diagonal(1.0);
    }
    a
}

fn last_block_dispersion(d: usize, q: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(d * (q + 1), d);
    b.view_mut((q * d, 0), (d, d)).fill_diagonal(1.0);
    b
}

fn check_dims(d: usize, q: usize) -> Result<()> {
    if d == 0 {
        return Err(invalid("prior dimension must be at least 1"));
    }
    if q == 0 {
        return Err(invalid("prior smoothness q must be at least 1"));
    }
    Ok(())
}

/// `q`-times integrated Wiener process prior for a `d`-dimensional ODE.
pub fn make_iwp(d: usize, q: usize) -> Result<GaussMarkovPrior> {
    check_dims(d, q)?;
    Ok(GaussMarkovPrior {
        layout: StateLayout::new(d, q),
        drift: iwp_drift(d, q),
        dispersion: last_block_dispersion(d, q),
        kind: PriorKind::Iwp,
    })
}

/// `q`-times integrated Ornstein–Uhlenbeck process prior with rate matrix `rate`.
pub fn make_ioup(d: usize, q: usize, rate: &DMatrix<f64>) -> Result<GaussMarkovPrior> {
    check_dims(d, q)?;
    if rate.nrows() != d || rate.ncols() != d {
        return Err(invalid(format!(
            "IOUP rate must be {d}x{d}, got {}x{}",
            rate.nrows(),
            rate.ncols()
        )));
    }
    if rate.iter().any(|v| !v.is_finite()) {
        return Err(invalid("IOUP rate has non-finite entries"));
    }
    let mut drift = iwp_drift(d, q);
    drift.view_mut((q * d, q * d), (d, d)).copy_from(rate);
    Ok(GaussMarkovPrior {
        layout: StateLayout::new(d, q),
        drift,
        dispersion: last_block_dispersion(d, q),
        kind: PriorKind::Ioup { rate: rate.clone() },
    })
}

impl GaussMarkovPrior {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn rate(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            PriorKind::Iwp => None,
            PriorKind::Ioup { rate } => Some(rate),
        }
    }
}

/// Step-size dependent coordinate change `T(h)` for IWP transitions.
///
/// In the scaled coordinates `Ỹ = T⁻¹Y` the transition matrix and the process
/// noise square-root no longer depend on `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    /// Diagonal of `T(h)`.
    pub scale: DVector<f64>,
    /// `T⁻¹·Φ(h)·T`.
    pub transition: DMatrix<f64>,
    /// `T⁻¹·√Q(h)`.
    pub noise_sqrt: SqrtFactor,
}

impl Preconditioner {
    pub fn to_scaled(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        matfun::block_diag_scale(&self.scale.map(|s| 1.0 / s), m)
    }

    pub fn from_scaled(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        matfun::block_diag_scale(&self.scale, m)
    }
}

/// Discrete transition `Y(t+h) | Y(t) ~ N(Φ(h)·Y(t), κ²·Q(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub step: f64,
    pub transition: DMatrix<f64>,
    pub noise_sqrt: SqrtFactor,
    pub preconditioner: Option<Preconditioner>,
    /// Matrix exponentials evaluated to build this model.
    pub expm_calls: usize,
}

impl TransitionModel {
    /// Dense `Q(h)`.
    pub fn noise(&self) -> DMatrix<f64> {
        self.noise_sqrt.gram()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn kron_identity(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows() * d, m.ncols() * d);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.view_mut((i * d, j * d), (d, d))
                .fill_diagonal(m[(i, j)]);
        }
    }
    out
}

fn iwp_preconditioner_scale(d: usize, q: usize, h: f64) -> DVector<f64> {
    DVector::from_fn(d * (q + 1), |idx, _| {
        let i = idx / d;
        h.sqrt() * h.powi((q - i) as i32) / factorial(q - i)
    })
}

/// Closed-form `Q(h)` of the `q`-times integrated Wiener process.
pub fn iwp_noise(d: usize, q: usize, h: f64) -> DMatrix<f64> {
    let one_d = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        let p = 2 * q + 1 - i - j;
        h.powi(p as i32) / (p as f64 * factorial(q - i) * factorial(q - j))
    });
    kron_identity(&one_d, d)
}

fn discretize_iwp(prior: &GaussMarkovPrior, h: f64) -> Result<TransitionModel> {
    let (d, q) = (prior.dim(), prior.order());
    // Scaled transition: binomial coefficients; scaled noise: [1/(2q+1-i-j)].
    let binom = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        if j >= i {
            factorial(q - i) / (factorial(j - i) * factorial(q - j))
        } else {
            0.0
        }
    });
    let hilbert = DMatrix::from_fn(q + 1, q + 1, |i, j| 1.0 / (2 * q + 1 - i - j) as f64);
    let chol = hilbert
        .cholesky()
        .ok_or_else(|| invalid("scaled IWP process noise is not positive definite"))?
        .l();
    let scale = iwp_preconditioner_scale(d, q, h);
    let scaled_transition = kron_identity(&binom, d);
    let scaled_noise = kron_identity(&chol, d);

    let transition = DMatrix::from_fn(d * (q + 1), d * (q + 1), |r, c| {
        scale[r] * scaled_transition[(r, c)] / scale[c]
    });
    let noise_sqrt = matfun::block_diag_scale(&scale, &scaled_noise);
    Ok(TransitionModel {
        step: h,
        transition,
        noise_sqrt: SqrtFactor::new(noise_sqrt),
        preconditioner: Some(Preconditioner {
            scale,
            transition: scaled_transition,
            noise_sqrt: SqrtFactor::new(scaled_noise),
        }),
        expm_calls: 0,
    })
}

/// Square-root of `Q(h) ≈ Σ wᵢ·exp(A(h−τᵢ))·B·Bᵀ·exp(A(h−τᵢ))ᵀ` by Gauss–Legendre
/// quadrature on `[0, h]`, fused with a QR decomposition.
pub fn quadrature_noise_sqrt(prior: &GaussMarkovPrior, h: f64, nodes: usize) -> Result<SqrtFactor> {
    let rule = matfun::gauss_legendre(nodes, 0.0, h)?;
    let mut factors = Vec::with_capacity(rule.len());
    for (&tau, &w) in rule.nodes.iter().zip(&rule.weights) {
        let e = matfun::expm(&(&prior.drift * (h - tau)))?;
        factors.push(e * &prior.dispersion * w.sqrt());
    }
    let refs: Vec<&DMatrix<f64>> = factors.iter().collect();
    matfun::qr_fuse(&refs)
}

/// Discretize with the default quadrature node count `m = q`.
pub fn discretize(prior: &GaussMarkovPrior, h: f64) -> Result<TransitionModel> {
    discretize_with_nodes(prior, h, prior.order())
}

/// Discretize a prior over a step `h`.
///
/// IWP transitions use the closed form and a preconditioned Cholesky factor of
/// `Q(h)`; IOUP transitions use a full matrix exponential for `Φ(h)` and an
/// `nodes`-point quadrature square-root for `Q(h)`.
pub fn discretize_with_nodes(
    prior: &GaussMarkovPrior,
    h: f64,
    nodes: usize,
) -> Result<TransitionModel> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!(
            "step size must be positive and finite, got {h}"
        )));
    }
    match prior.kind {
        PriorKind::Iwp => discretize_iwp(prior, h),
        PriorKind::Ioup { .. } => {
            let transition = matfun::expm(&(&prior.drift * h))?;
            let noise_sqrt = quadrature_noise_sqrt(prior, h, nodes)?;
            Ok(TransitionModel {
                step: h,
                transition,
                noise_sqrt,
                preconditioner: None,
                expm_calls: 1 + nodes,
            })
        }
    }
}

/// `Q(h)` by the matrix fraction decomposition: with
/// `exp([[−A, BBᵀ], [0, Aᵀ]]·h) = [[·, G], [0, F]]`, `Q(h) = Fᵀ·G`.
pub fn mfd_q(prior: &GaussMarkovPrior, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(invalid(format!("step size must be positive, got {h}")));
    }
    let n = prior.layout.state_len();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-&prior.drift));
    block
        .view_mut((0, n), (n, n))
        .copy_from(&(&prior.dispersion * prior.dispersion.transpose()));
    block
        .view_mut((n, n), (n, n))
        .copy_from(&prior.drift.transpose());
    let e = matfun::expm(&(block * h))?;
    let g = e.view((0, n), (n, n));
    let f = e.view((n, n), (n, n));
    let q = f.transpose() * g;
    Ok((&q + q.transpose()) * 0.5)
}

/// Block decomposition of an IOUP transition matrix,
/// `Φ(h) = [[exp(A_IWP(d,q−1)·h), Φ₁₂(h)], [0, exp(L·h)]]`, where block `i` of
/// `Φ₁₂(h)` is `h^{q−i}·φ_{q−i}(L·h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoupBlocks {
    pub iwp: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub rate_exp: DMatrix<f64>,
}

impl IoupBlocks {
    pub fn assemble(&self) -> DMatrix<f64> {
        let top = self.iwp.nrows();
        let d = self.rate_exp.nrows();
        let n = top + d;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (top, top)).copy_from(&self.iwp);
        m.view_mut((0, top), (top, d)).copy_from(&self.coupling);
        m.view_mut((top, top), (d, d)).copy_from(&self.rate_exp);
        m
    }
}

/// Blockwise IOUP transition through `φ`-functions of `L·h`.
pub fn transition_block_structure(prior: &GaussMarkovPrior, h: f64) -> Result<IoupBlocks> {
    let rate = prior
        .rate()
        .ok_or_else(|| invalid("block structure is only defined for IOUP priors"))?;
    if !(h > 0.0) {
        return Err(invalid(format!("step size must be positive, got {h}")));
    }
    let (d, q) = (prior.dim(), prior.order());
    let phis = matfun::phi_all(q, &(rate * h))?;
    let iwp_1d = DMatrix::from_fn(q, q, |i, j| {
        if j >= i {
            h.powi((j - i) as i32) / factorial(j - i)
        } else {
            0.0
        }
    });
    let mut coupling = DMatrix::zeros(d * q, d);
    for i in 0..q {
        let k = q - i;
        coupling
            .view_mut((i * d, 0), (d, d))
            .copy_from(&(&phis[k] * h.powi(k as i32)));
    }
    Ok(IoupBlocks {
        iwp: kron_identity(&iwp_1d, d),
        coupling,
        rate_exp: phis[0].clone(),
    })
}
