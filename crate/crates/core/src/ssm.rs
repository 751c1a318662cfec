//! Square-root Gaussian inference for ODE filters.
//!
//! Covariances are only ever carried as right square-roots; prediction,
//! correction and smoothing are QR triangularizations of stacked pre-arrays.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::matfun::{self, SqrtFactor};
use crate::priors::{StateLayout, TransitionModel};
use crate::problems::Ivp;

/// Gaussian `N(mean, F·Fᵀ)` with right square-root `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtGaussian {
    pub mean: DVector<f64>,
    pub cov_sqrt: SqrtFactor,
}

impl SqrtGaussian {
    pub fn new(mean: DVector<f64>, cov_sqrt: SqrtFactor) -> Result<Self> {
        if cov_sqrt.rows() != mean.len() {
            return Err(invalid(format!(
                "covariance factor has {} rows for a mean of length {}",
                cov_sqrt.rows(),
                mean.len()
            )));
        }
        Ok(Self { mean, cov_sqrt })
    }

    /// Point mass at `mean`.
    pub fn dirac(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov_sqrt: SqrtFactor::zeros(n, n),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn cov(&self) -> DMatrix<f64> {
        self.cov_sqrt.gram()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov_sqrt.is_finite()
    }

    /// Same mean, covariance scaled by `s²`.
    pub fn scale_cov(&self, s: f64) -> Self {
        Self {
            mean: self.mean.clone(),
            cov_sqrt: self.cov_sqrt.scaled(s),
        }
    }

    /// Marginal of derivative block `i`.
    pub fn marginal(&self, layout: &StateLayout, i: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mean = layout.block(&self.mean, i);
        let f = layout.block_rows(self.cov_sqrt.matrix(), i);
        let cov = &f * f.transpose();
        (mean, cov)
    }
}

/// `p(Y(t+h)) = N(Φ·μ, Φ·Σ·Φᵀ + κ²·Q)` in square-root form.
pub fn predict(state: &SqrtGaussian, tm: &TransitionModel, kappa: f64) -> Result<SqrtGaussian> {
    let n = tm.transition.nrows();
    if state.len() != n {
        return Err(invalid(format!(
            "state of length {} does not match transition of size {n}",
            state.len()
        )));
    }
    let mean = &tm.transition * &state.mean;
    let cov_sqrt = match &tm.preconditioner {
        Some(p) => {
            let scaled = p.to_scaled(state.cov_sqrt.matrix());
            let propagated = &p.transition * scaled;
            let noise = p.noise_sqrt.matrix() * kappa;
            let fused = matfun::qr_fuse(&[&propagated, &noise])?;
            SqrtFactor::new(p.from_scaled(fused.matrix()))
        }
        None => {
            let propagated = &tm.transition * state.cov_sqrt.matrix();
            let noise = tm.noise_sqrt.matrix() * kappa;
            matfun::qr_fuse(&[&propagated, &noise])?
        }
    };
    Ok(SqrtGaussian { mean, cov_sqrt })
}

/// Choice of `F_y ≈ ∂f/∂y` in the linearized information operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearizationStrategy {
    /// `F_y = 0`.
    Ek0,
    /// `F_y = ∂f/∂y` at the predicted mean.
    Ek1,
    /// `F_y = L`, the linear part of a semi-linear problem.
    Ekl,
}

/// `I[Y](t) ≈ H·Y + b`, with `b` folded into the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub jacobian: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    /// `E₁·μ⁻ − f(E₀·μ⁻, t)`.
    pub residual: DVector<f64>,
    pub f_evals: usize,
    pub jac_evals: usize,
    /// Set when the Jacobian came from finite differences.
    pub finite_difference: bool,
}

/// Central finite-difference Jacobian of the vector field.
pub fn fd_jacobian(ivp: &dyn Ivp, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let d = y.len();
    let base = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = base * (1.0 + y[j].abs());
        let mut plus = y.clone();
        plus[j] += step;
        let mut minus = y.clone();
        minus[j] -= step;
        let col = (ivp.rhs(&plus, t) - ivp.rhs(&minus, t)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

/// Jacobian of `f`, analytic when available. Returns `(J, f_evals, used_fd)`.
pub fn jacobian_or_fd(ivp: &dyn Ivp, y: &DVector<f64>, t: f64) -> (DMatrix<f64>, usize, bool) {
    match ivp.jacobian(y, t) {
        Some(j) => (j, 0, false),
        None => (fd_jacobian(ivp, y, t), 2 * y.len(), true),
    }
}

/// Linearize with an explicit `F_y`.
pub fn linearize_with(
    ivp: &dyn Ivp,
    layout: &StateLayout,
    predicted_mean: &DVector<f64>,
    t: f64,
    jacobian: DMatrix<f64>,
) -> Result<Linearization> {
    if predicted_mean.len() != layout.state_len() {
        return Err(invalid(format!(
            "mean of length {} does not match state length {}",
            predicted_mean.len(),
            layout.state_len()
        )));
    }
    let y = layout.block(predicted_mean, 0);
    let dy = layout.block(predicted_mean, 1);
    let residual = dy - ivp.rhs(&y, t);
    let observation = layout.projection(1) - &jacobian * layout.projection(0);
    Ok(Linearization {
        jacobian,
        observation,
        residual,
        f_evals: 1,
        jac_evals: 0,
        finite_difference: false,
    })
}

/// Linearize the information operator `E₁·Y − f(E₀·Y, t)` around the predicted mean.
pub fn linearize(
    strategy: LinearizationStrategy,
    ivp: &dyn Ivp,
    layout: &StateLayout,
    predicted_mean: &DVector<f64>,
    t: f64,
) -> Result<Linearization> {
    let d = layout.dim;
    match strategy {
        LinearizationStrategy::Ek0 => {
            linearize_with(ivp, layout, predicted_mean, t, DMatrix::zeros(d, d))
        }
        LinearizationStrategy::Ekl => {
            let l = ivp.linear_part().ok_or_else(|| {
                Error::Configuration(format!(
                    "EKL linearization needs a semi-linear split, '{}' declares none",
                    ivp.name()
                ))
            })?;
            linearize_with(ivp, layout, predicted_mean, t, l.clone())
        }
        LinearizationStrategy::Ek1 => {
            let y = layout.block(predicted_mean, 0);
            let (jac, evals, fd) = jacobian_or_fd(ivp, &y, t);
            let mut lin = linearize_with(ivp, layout, predicted_mean, t, jac)?;
            lin.f_evals += evals;
            lin.jac_evals = 1;
            lin.finite_difference = fd;
            Ok(lin)
        }
    }
}

/// Innovation statistics of a correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionStats {
    /// Square-root of `S = H·Σ⁻·Hᵀ`.
    pub innovation_sqrt: SqrtFactor,
    pub residual: DVector<f64>,
    /// `S_sqrt⁻¹·ẑ`.
    pub whitened: DVector<f64>,
}

fn triangular_diag_ratio(r: &DMatrix<f64>) -> (f64, f64) {
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Upper-triangular `R` with `RᵀR = X·Xᵀ`, padded to `X.nrows()` rows.
fn triangularize(pre: &DMatrix<f64>) -> DMatrix<f64> {
    let size = pre.nrows();
    let r = pre.transpose().qr().r();
    if r.nrows() == size {
        return r;
    }
    let mut padded = DMatrix::zeros(size, size);
    padded.view_mut((0, 0), (r.nrows(), size)).copy_from(&r);
    padded
}

/// Noiseless Kalman update conditioning on `H·Y + b = 0`.
///
/// The stacked pre-array `[H·F; F]` with `F` the predicted factor is
/// triangularized to `[[R₁₁, 0], [R₁₂ᵀ, R₂₂ᵀ]]`; then `S = R₁₁ᵀR₁₁`,
/// `K = R₁₂ᵀR₁₁⁻ᵀ` and the posterior factor is `R₂₂ᵀ`.
///
/// A singular innovation yields [`Error::StepFailure`] with `step = 0` and
/// `t = NaN`; the solver fills in its position.
pub fn correct(
    state: &SqrtGaussian,
    lin: &Linearization,
) -> Result<(SqrtGaussian, CorrectionStats)> {
    let n = state.len();
    let d = lin.observation.nrows();
    if lin.observation.ncols() != n || lin.residual.len() != d {
        return Err(invalid("linearization does not match the state dimensions"));
    }
    let f = state.cov_sqrt.matrix();
    let k = f.ncols();
    let mut pre = DMatrix::zeros(d + n, k);
    pre.view_mut((0, 0), (d, k))
        .copy_from(&(&lin.observation * f));
    pre.view_mut((d, 0), (n, k)).copy_from(f);
    let r = triangularize(&pre);

    let r11 = r.view((0, 0), (d, d)).into_owned();
    let r12 = r.view((0, d), (d, n)).into_owned();
    let r22 = r.view((d, d), (n, n)).into_owned();

    let (min, max) = triangular_diag_ratio(&r11);
    if !(max > 0.0) || !(min > f64::EPSILON * max) {
        let condition = if max > 0.0 { min / max } else { 0.0 };
        return Err(Error::StepFailure {
            step: 0,
            t: f64::NAN,
            condition,
        });
    }
    let r11t = r11.transpose();
    let whitened =
        r11t.solve_lower_triangular(&lin.residual)
            .ok_or_else(|| Error::StepFailure {
                step: 0,
                t: f64::NAN,
                condition: min / max,
            })?;
    let mean = &state.mean - r12.transpose() * &whitened;
    let post = SqrtGaussian {
        mean,
        cov_sqrt: SqrtFactor::new(r22.transpose()),
    };
    let stats = CorrectionStats {
        innovation_sqrt: SqrtFactor::new(r11t),
        residual: lin.residual.clone(),
        whitened,
    };
    Ok((post, stats))
}

/// Backward Markov kernel `Y_n | Y_{n+1} ~ N(G·Y_{n+1} + offset, Λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardKernel {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov_sqrt: SqrtFactor,
}

const GAIN_TRUNCATION: f64 = 1e-12;

/// Solve `G·R₁₁ᵀ = R₁₂ᵀ` with truncation of directions where `R₁₁` is
/// numerically rank deficient.
fn smoother_gain(r11: &DMatrix<f64>, r12: &DMatrix<f64>) -> DMatrix<f64> {
    let (min, max) = triangular_diag_ratio(r11);
    if max == 0.0 {
        return DMatrix::zeros(r12.ncols(), r11.nrows());
    }
    if min > GAIN_TRUNCATION * max {
        if let Some(x) = r11.solve_upper_triangular(r12) {
            return x.transpose();
        }
    }
    let svd = r11.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(GAIN_TRUNCATION * smax)
        .expect("SVD was computed with both singular vector sets");
    (pinv * r12).transpose()
}

/// One backward step of the Rauch–Tung–Striebel smoother.
///
/// `filtered` is the filtering estimate at `t_n`, `tm` the transition to
/// `t_{n+1}` and `smoothed_next` the smoothed estimate at `t_{n+1}`.
pub fn smooth_step(
    filtered: &SqrtGaussian,
    tm: &TransitionModel,
    kappa: f64,
    smoothed_next: &SqrtGaussian,
) -> Result<(SqrtGaussian, BackwardKernel)> {
    let n = filtered.len();
    if tm.transition.nrows() != n || smoothed_next.len() != n {
        return Err(invalid("smoother inputs have inconsistent dimensions"));
    }
    let (factor, transition, noise) = match &tm.preconditioner {
        Some(p) => (
            p.to_scaled(filtered.cov_sqrt.matrix()),
            p.transition.clone(),
            p.noise_sqrt.matrix() * kappa,
        ),
        None => (
            filtered.cov_sqrt.matrix().clone(),
            tm.transition.clone(),
            tm.noise_sqrt.matrix() * kappa,
        ),
    };
    let k = factor.ncols();
    let l = noise.ncols();
    let mut pre = DMatrix::zeros(2 * n, k + l);
    pre.view_mut((0, 0), (n, k))
        .copy_from(&(&transition * &factor));
    pre.view_mut((0, k), (n, l)).copy_from(&noise);
    pre.view_mut((n, 0), (n, k)).copy_from(&factor);
    let r = triangularize(&pre);
    let r11 = r.view((0, 0), (n, n)).into_owned();
    let r12 = r.view((0, n), (n, n)).into_owned();
    let r22 = r.view((n, n), (n, n)).into_owned();

    let scaled_gain = smoother_gain(&r11, &r12);
    let (gain, backward_sqrt) = match &tm.preconditioner {
        Some(p) => {
            let inv = p.scale.map(|s| 1.0 / s);
            let g = DMatrix::from_fn(n, n, |i, j| p.scale[i] * scaled_gain[(i, j)] * inv[j]);
            (g, p.from_scaled(&r22.transpose()))
        }
        None => (scaled_gain, r22.transpose()),
    };

    let predicted_mean = &tm.transition * &filtered.mean;
    let offset = &filtered.mean - &gain * &predicted_mean;
    let mean = &offset + &gain * &smoothed_next.mean;
    let propagated = &gain * smoothed_next.cov_sqrt.matrix();
    let cov_sqrt = matfun::qr_fuse(&[&propagated, &backward_sqrt])?;
    Ok((
        SqrtGaussian { mean, cov_sqrt },
        BackwardKernel {
            gain,
            offset,
            cov_sqrt: SqrtFactor::new(backward_sqrt),
        },
    ))
}

/// Fixed-interval smoothing of `N + 1` filtering estimates through `N` transitions.
///
/// Returns the smoothed estimates and the `N` backward kernels.
pub fn smooth(
    filtered: &[SqrtGaussian],
    transitions: &[&TransitionModel],
    kappa: f64,
) -> Result<(Vec<SqrtGaussian>, Vec<BackwardKernel>)> {
    if filtered.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    if transitions.len() + 1 != filtered.len() {
        return Err(invalid(format!(
            "smoothing {} states needs {} transitions, got {}",
            filtered.len(),
            filtered.len() - 1,
            transitions.len()
        )));
    }
    let steps = transitions.len();
    let mut smoothed = vec![filtered[steps].clone()];
    let mut kernels = Vec::with_capacity(steps);
    for i in (0..steps).rev() {
        let next = smoothed.last().expect("seeded with the final state");
        let (s, kernel) = smooth_step(&filtered[i], transitions[i], kappa, next)?;
        smoothed.push(s);
        kernels.push(kernel);
    }
    smoothed.reverse();
    kernels.reverse();
    Ok((smoothed, kernels))
}

/// Running sum for the global quasi-maximum-likelihood diffusion estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationAccumulator {
    /// Number of scalar residual components, `N·d`.
    pub count: usize,
    /// `Σ ẑᵀS⁻¹ẑ`.
    pub sum: f64,
}

impl CalibrationAccumulator {
    pub fn push(&mut self, stats: &CorrectionStats) {
        self.count += stats.whitened.len();
        self.sum += stats.whitened.norm_squared();
    }
}

/// `σ̂ = sqrt(Σ ẑᵀS⁻¹ẑ / (N·d))`.
pub fn calibrate(acc: &CalibrationAccumulator) -> Result<f64> {
    if acc.count == 0 {
        return Err(Error::InvalidState(
            "cannot calibrate without any residuals".into(),
        ));
    }
    Ok((acc.sum / acc.count as f64).sqrt())
}

fn draw(rng: &mut impl Rng, g: &SqrtGaussian) -> DVector<f64> {
    let f = g.cov_sqrt.matrix();
    let xi = DVector::from_fn(f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    &g.mean + f * xi
}

/// Joint posterior sample through the backward kernels, ordered forward in time.
pub fn sample(
    terminal: &SqrtGaussian,
    kernels: &[BackwardKernel],
    rng: &mut impl Rng,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(kernels.len() + 1);
    let mut current = draw(rng, terminal);
    out.push(current.clone());
    for kernel in kernels.iter().rev() {
        let cond = SqrtGaussian {
            mean: &kernel.offset + &kernel.gain * &current,
            cov_sqrt: kernel.cov_sqrt.clone(),
        };
        current = draw(rng, &cond);
        out.push(current.clone());
    }
    out.reverse();
    out
}
