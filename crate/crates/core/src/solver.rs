//! The ODE filter: initialization, fixed-grid stepping, smoothing, calibration
//! and dense output.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::jet::Jet;
use crate::matfun::SqrtFactor;
use crate::priors::{
    discretize_with_nodes, make_ioup, make_iwp, GaussMarkovPrior, StateLayout, TransitionModel,
};
use crate::problems::{linear_test, Ivp};
use crate::ssm::{
    self, BackwardKernel, CalibrationAccumulator, CorrectionStats, LinearizationStrategy,
    SqrtGaussian,
};

/// Which Gauss–Markov prior drives the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorChoice {
    /// Integrated Wiener process.
    Iwp,
    /// Integrated Ornstein–Uhlenbeck process with the problem's linear part as rate.
    Ioup,
    /// IOUP whose rate is re-set to the local Jacobian at every step.
    IoupRosenbrock,
}

/// How the initial state is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InitMode {
    /// All derivatives from a Taylor expansion of the solution, zero covariance.
    #[default]
    Exact,
    /// Value and first derivative exact, higher derivatives unknown.
    Extended,
}

/// Prior standard deviation of unknown derivatives in [`InitMode::Extended`].
pub const EXTENDED_INIT_STD: f64 = 1e3;

/// Time discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// Equidistant steps of size `h` over the problem's span; the final step is
    /// shortened when `h` does not divide the span.
    Step(f64),
    /// Explicit, strictly increasing points starting at `t₀`.
    Points(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub prior: PriorChoice,
    pub q: usize,
    pub linearization: LinearizationStrategy,
    pub grid: Grid,
    /// Quadrature nodes for IOUP process noise; `None` means `q`.
    pub nodes: Option<usize>,
    pub calibrate: bool,
    pub smooth: bool,
    pub init: InitMode,
    /// Diffusion scale `κ` used during the forward pass.
    pub diffusion: f64,
    /// Abort with [`Error::Divergence`] once any entry of the solution mean `E₀μ`
    /// exceeds this magnitude.
    pub divergence_bound: Option<f64>,
}

impl SolverConfig {
    /// The probabilistic exponential integrator: IOUP prior with `EKL` linearization.
    pub fn exponential(q: usize, h: f64) -> Self {
        Self {
            prior: PriorChoice::Ioup,
            q,
            linearization: LinearizationStrategy::Ekl,
            grid: Grid::Step(h),
            nodes: None,
            calibrate: true,
            smooth: true,
            init: InitMode::Exact,
            diffusion: 1.0,
            divergence_bound: None,
        }
    }

    pub fn iwp(q: usize, h: f64, linearization: LinearizationStrategy) -> Self {
        Self {
            prior: PriorChoice::Iwp,
            linearization,
            ..Self::exponential(q, h)
        }
    }

    /// Rosenbrock-type exponential integrator with `EK1` linearization.
    pub fn rosenbrock(q: usize, h: f64) -> Self {
        Self {
            prior: PriorChoice::IoupRosenbrock,
            linearization: LinearizationStrategy::Ek1,
            ..Self::exponential(q, h)
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = Some(nodes);
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.unwrap_or(self.q)
    }
}

/// Work spent by a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounters {
    pub steps: usize,
    pub f_evals: usize,
    pub jac_evals: usize,
    pub expm_calls: usize,
}

impl WorkCounters {
    fn add(&mut self, other: &WorkCounters) {
        self.steps += other.steps;
        self.f_evals += other.f_evals;
        self.jac_evals += other.jac_evals;
        self.expm_calls += other.expm_calls;
    }
}

/// Posterior of a probabilistic ODE solve.
#[derive(Debug, Clone)]
pub struct ProbabilisticSolution {
    pub grid: Vec<f64>,
    pub filtered: Vec<SqrtGaussian>,
    /// Empty unless smoothing was requested.
    pub smoothed: Vec<SqrtGaussian>,
    /// Backward kernels of the smoother, one per step.
    pub kernels: Vec<BackwardKernel>,
    /// Quasi-maximum-likelihood diffusion estimate, when calibrated.
    pub sigma_hat: Option<f64>,
    /// Diffusion the stored covariances correspond to.
    pub diffusion: f64,
    pub stats: WorkCounters,
    /// Euclidean norm of the residual at each step.
    pub residual_norms: Vec<f64>,
    pub transitions: Vec<Arc<TransitionModel>>,
    pub priors: Vec<Arc<GaussMarkovPrior>>,
    pub layout: StateLayout,
    pub nodes: usize,
}

impl ProbabilisticSolution {
    /// Smoothed states when available, otherwise filtered states.
    pub fn states(&self) -> &[SqrtGaussian] {
        if self.smoothed.is_empty() {
            &self.filtered
        } else {
            &self.smoothed
        }
    }

    /// Means of derivative block `i` along the grid.
    pub fn means(&self, i: usize) -> Vec<DVector<f64>> {
        self.states()
            .iter()
            .map(|s| self.layout.block(&s.mean, i))
            .collect()
    }

    pub fn final_value(&self) -> DVector<f64> {
        let last = self
            .states()
            .last()
            .expect("solutions hold at least one state");
        self.layout.block(&last.mean, 0)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().expect("non-empty grid"))
    }
}

/// Taylor coefficients `y(t₀ + τ) ≈ Σ cᵢτⁱ` up to order `q`, from `q` jet evaluations.
fn taylor_coefficients(ivp: &dyn Ivp, q: usize) -> Result<Vec<DVector<f64>>> {
    let y0 = ivp.initial_value();
    let t0 = ivp.time_span().0;
    let d = y0.len();
    let mut coeffs = vec![y0];
    for k in 0..q {
        if k == 0 {
            let f0 = ivp.rhs(&coeffs[0], t0);
            if f0.len() != d || f0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Initialization(format!(
                    "vector field is not evaluable at the initial value of '{}'",
                    ivp.name()
                )));
            }
            coeffs.push(f0);
            continue;
        }
        let jets: Vec<Jet> = (0..d)
            .map(|c| Jet::new(coeffs.iter().map(|v| v[c]).collect()))
            .collect();
        let t = Jet::variable(t0, k);
        let f = ivp.rhs_jet(&jets, &t).ok_or_else(|| {
            Error::Initialization(format!(
                "'{}' cannot be expanded in Taylor jets; use the extended initialization",
                ivp.name()
            ))
        })?;
        if f.len() != d {
            return Err(Error::Initialization(format!(
                "vector field returned {} components, expected {d}",
                f.len()
            )));
        }
        let next = DVector::from_fn(d, |c, _| f[c].coeffs()[k] / (k + 1) as f64);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Initialization(format!(
                "Taylor coefficient {} is not finite",
                k + 1
            )));
        }
        coeffs.push(next);
    }
    Ok(coeffs)
}

fn init_with_count(ivp: &dyn Ivp, q: usize, mode: InitMode) -> Result<(SqrtGaussian, usize)> {
    if q == 0 {
        return Err(invalid("smoothness q must be at least 1"));
    }
    let d = ivp.dim();
    let layout = StateLayout::new(d, q);
    let y0 = ivp.initial_value();
    if y0.len() != d || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Initialization(
            "initial value is not a finite vector of the problem dimension".into(),
        ));
    }
    let t0 = ivp.time_span().0;
    let mut mean = DVector::zeros(layout.state_len());
    let mut factor = DMatrix::zeros(layout.state_len(), layout.state_len());
    let evals;
    match mode {
        InitMode::Exact => {
            let coeffs = taylor_coefficients(ivp, q)?;
            let mut fact = 1.0;
            for (i, c) in coeffs.iter().enumerate() {
                if i > 0 {
                    fact *= i as f64;
                }
                mean.rows_mut(i * d, d).copy_from(&(c * fact));
            }
            evals = q;
        }
        InitMode::Extended => {
            let f0 = ivp.rhs(&y0, t0);
            if f0.len() != d || f0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Initialization(format!(
                    "vector field is not evaluable at the initial value of '{}'",
                    ivp.name()
                )));
            }
            mean.rows_mut(0, d).copy_from(&y0);
            mean.rows_mut(d, d).copy_from(&f0);
            for k in 2 * d..layout.state_len() {
                factor[(k, k)] = EXTENDED_INIT_STD;
            }
            evals = 1;
        }
    }
    Ok((SqrtGaussian::new(mean, SqrtFactor::new(factor))?, evals))
}

/// Initial state with `y₀` in block 0 and the solution's derivatives above it.
pub fn init_state(ivp: &dyn Ivp, q: usize, mode: InitMode) -> Result<SqrtGaussian> {
    init_with_count(ivp, q, mode).map(|(s, _)| s)
}

fn build_grid(ivp: &dyn Ivp, grid: &Grid) -> Result<Vec<f64>> {
    let (t0, t_end) = ivp.time_span();
    let points = match grid {
        Grid::Step(h) => {
            if !(*h > 0.0) || !h.is_finite() {
                return Err(invalid(format!(
                    "step size must be positive and finite, got {h}"
                )));
            }
            let ratio = (t_end - t0) / h;
            let n = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
                ratio.round() as usize
            } else {
                ratio.ceil() as usize
            }
            .max(1);
            let mut pts: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
            pts.push(t_end);
            pts
        }
        Grid::Points(pts) => pts.clone(),
    };
    if points.len() < 2 {
        return Err(invalid("a grid needs at least two points"));
    }
    if points[0] != t0 {
        return Err(invalid(format!(
            "grid must start at t0 = {t0}, starts at {}",
            points[0]
        )));
    }
    if points.windows(2).any(|w| !(w[1] > w[0])) || points.iter().any(|t| !t.is_finite()) {
        return Err(invalid(
            "grid points must be finite and strictly increasing",
        ));
    }
    Ok(points)
}

/// Result of one predict-linearize-correct cycle.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SqrtGaussian,
    pub stats: CorrectionStats,
    pub work: WorkCounters,
}

fn diverged(state: &SqrtGaussian, layout: &StateLayout, bound: Option<f64>) -> bool {
    !state.is_finite()
        || bound.is_some_and(|b| state.mean.rows(0, layout.dim).iter().any(|v| v.abs() > b))
}

/// Predicted state, corrected state (absent once values stop being finite), work.
type StepParts = (
    SqrtGaussian,
    Option<(SqrtGaussian, CorrectionStats)>,
    WorkCounters,
);

/// Predict with `tm`, linearize at `t`, correct. `rate` is the Jacobian used as
/// IOUP rate in the Rosenbrock scheme, reused as `F_y` by `EKL`.
#[allow(clippy::too_many_arguments)]
fn filter_step(
    ivp: &dyn Ivp,
    layout: &StateLayout,
    state: &SqrtGaussian,
    tm: &TransitionModel,
    kappa: f64,
    strategy: LinearizationStrategy,
    t: f64,
    rate: Option<&DMatrix<f64>>,
) -> Result<StepParts> {
    let predicted = ssm::predict(state, tm, kappa)?;
    let mut work = WorkCounters::default();
    if !predicted.is_finite() {
        return Ok((predicted, None, work));
    }
    let lin = match (strategy, rate) {
        (LinearizationStrategy::Ekl, Some(j)) => {
            ssm::linearize_with(ivp, layout, &predicted.mean, t, j.clone())?
        }
        _ => ssm::linearize(strategy, ivp, layout, &predicted.mean, t)?,
    };
    work.f_evals += lin.f_evals;
    work.jac_evals += lin.jac_evals;
    if lin.residual.iter().any(|v| !v.is_finite()) || lin.observation.iter().any(|v| !v.is_finite())
    {
        return Ok((predicted, None, work));
    }
    let corrected = ssm::correct(&predicted, &lin)?;
    Ok((predicted, Some(corrected), work))
}

fn rosenbrock_prior(
    ivp: &dyn Ivp,
    layout: &StateLayout,
    state: &SqrtGaussian,
    t: f64,
) -> Result<(GaussMarkovPrior, WorkCounters)> {
    let y = layout.block(&state.mean, 0);
    let (jac, evals, _) = ssm::jacobian_or_fd(ivp, &y, t);
    let prior = make_ioup(layout.dim, layout.order, &jac)?;
    Ok((
        prior,
        WorkCounters {
            f_evals: evals,
            jac_evals: 1,
            ..Default::default()
        },
    ))
}

/// One step of the Rosenbrock-type exponential integrator from the filtering
/// estimate `state` at `t`.
///
/// The IOUP rate is the Jacobian at the filtering mean; the prior is
/// re-discretized for this step.
pub fn rosenbrock_step(
    ivp: &dyn Ivp,
    state: &SqrtGaussian,
    t: f64,
    h: f64,
    config: &SolverConfig,
) -> Result<(StepOutcome, TransitionModel)> {
    let layout = StateLayout::new(ivp.dim(), config.q);
    let (prior, mut work) = rosenbrock_prior(ivp, &layout, state, t)?;
    let tm = discretize_with_nodes(&prior, h, config.node_count())?;
    work.expm_calls += tm.expm_calls;
    let rate = prior.rate().cloned();
    let (_, corrected, step_work) = filter_step(
        ivp,
        &layout,
        state,
        &tm,
        config.diffusion,
        config.linearization,
        t + h,
        rate.as_ref(),
    )?;
    work.add(&step_work);
    work.steps = 1;
    let (state, stats) = corrected.ok_or(Error::Divergence {
        step: 1,
        t: t + h,
        last_finite_mean: state.mean.clone(),
        last_finite_t: t,
        work,
    })?;
    Ok((StepOutcome { state, stats, work }, tm))
}

fn fixed_prior(ivp: &dyn Ivp, config: &SolverConfig) -> Result<Option<GaussMarkovPrior>> {
    let d = ivp.dim();
    match config.prior {
        PriorChoice::Iwp => make_iwp(d, config.q).map(Some),
        PriorChoice::Ioup => {
            let l = ivp.linear_part().ok_or_else(|| {
                Error::Configuration(format!(
                    "the IOUP prior needs a linear part, '{}' declares none",
                    ivp.name()
                ))
            })?;
            make_ioup(d, config.q, l).map(Some)
        }
        PriorChoice::IoupRosenbrock => Ok(None),
    }
}

fn validate(ivp: &dyn Ivp, config: &SolverConfig) -> Result<()> {
    if config.q == 0 {
        return Err(invalid("smoothness q must be at least 1"));
    }
    if config.nodes == Some(0) {
        return Err(invalid("quadrature needs at least one node"));
    }
    if !(config.diffusion >= 0.0) || !config.diffusion.is_finite() {
        return Err(invalid(format!(
            "diffusion must be non-negative, got {}",
            config.diffusion
        )));
    }
    if config.linearization == LinearizationStrategy::Ekl
        && config.prior != PriorChoice::IoupRosenbrock
        && ivp.linear_part().is_none()
    {
        return Err(Error::Configuration(format!(
            "EKL linearization needs a semi-linear split, '{}' declares none",
            ivp.name()
        )));
    }
    Ok(())
}

/// Solve an initial value problem with an ODE filter.
pub fn solve(ivp: &dyn Ivp, config: &SolverConfig) -> Result<ProbabilisticSolution> {
    validate(ivp, config)?;
    let grid = build_grid(ivp, &config.grid)?;
    let layout = StateLayout::new(ivp.dim(), config.q);
    let nodes = config.node_count();
    let kappa = config.diffusion;

    let (init, init_evals) = init_with_count(ivp, config.q, config.init)?;
    let mut stats = WorkCounters {
        f_evals: init_evals,
        ..Default::default()
    };
    let fixed = fixed_prior(ivp, config)?.map(Arc::new);
    let mut cache: Vec<(f64, Arc<TransitionModel>)> = Vec::new();

    let steps = grid.len() - 1;
    let mut filtered = Vec::with_capacity(grid.len());
    filtered.push(init);
    let mut transitions = Vec::with_capacity(steps);
    let mut priors = Vec::with_capacity(steps);
    let mut residual_norms = Vec::with_capacity(steps);
    let mut acc = CalibrationAccumulator::default();

    for n in 0..steps {
        let (t, t_next) = (grid[n], grid[n + 1]);
        let h = t_next - t;
        let current = filtered.last().expect("seeded with the initial state");

        let (prior, tm, rate) = match &fixed {
            Some(prior) => {
                // Steps of an equidistant grid differ by round-off only.
                let hit = cache
                    .iter()
                    .find(|(key, _)| (h - key).abs() <= 1e-12 * key)
                    .map(|(_, tm)| tm.clone());
                let tm = match hit {
                    Some(tm) => tm,
                    None => {
                        let tm = Arc::new(discretize_with_nodes(prior, h, nodes)?);
                        stats.expm_calls += tm.expm_calls;
                        cache.push((h, tm.clone()));
                        tm
                    }
                };
                (prior.clone(), tm, None)
            }
            None => {
                let (prior, work) = rosenbrock_prior(ivp, &layout, current, t)?;
                stats.add(&work);
                let tm = Arc::new(discretize_with_nodes(&prior, h, nodes)?);
                stats.expm_calls += tm.expm_calls;
                let rate = prior.rate().cloned();
                (Arc::new(prior), tm, rate)
            }
        };

        let outcome = filter_step(
            ivp,
            &layout,
            current,
            &tm,
            kappa,
            config.linearization,
            t_next,
            rate.as_ref(),
        );
        let (_, corrected, work) = match outcome {
            Err(Error::StepFailure { condition, .. }) => {
                return Err(Error::StepFailure {
                    step: n + 1,
                    t: t_next,
                    condition,
                })
            }
            other => other?,
        };
        stats.add(&work);
        stats.steps += 1;
        let divergence = |state: &SqrtGaussian| Error::Divergence {
            step: n + 1,
            t: t_next,
            last_finite_mean: state.mean.clone(),
            last_finite_t: t,
            work: stats,
        };
        let Some((state, cstats)) = corrected else {
            return Err(divergence(current));
        };
        if diverged(&state, &layout, config.divergence_bound) {
            return Err(divergence(current));
        }
        acc.push(&cstats);
        residual_norms.push(cstats.residual.norm());
        filtered.push(state);
        transitions.push(tm);
        priors.push(prior);
    }

    let (mut smoothed, mut kernels) = if config.smooth {
        let refs: Vec<&TransitionModel> = transitions.iter().map(|t| t.as_ref()).collect();
        ssm::smooth(&filtered, &refs, kappa)?
    } else {
        (Vec::new(), Vec::new())
    };

    let sigma_hat = if config.calibrate {
        Some(ssm::calibrate(&acc)?)
    } else {
        None
    };
    let mut diffusion = kappa;
    if let Some(s) = sigma_hat {
        for state in filtered.iter_mut().chain(smoothed.iter_mut()) {
            state.cov_sqrt = state.cov_sqrt.scaled(s);
        }
        for k in kernels.iter_mut() {
            k.cov_sqrt = k.cov_sqrt.scaled(s);
        }
        diffusion *= s;
    }

    Ok(ProbabilisticSolution {
        grid,
        filtered,
        smoothed,
        kernels,
        sigma_hat,
        diffusion,
        stats,
        residual_norms,
        transitions,
        priors,
        layout,
        nodes,
    })
}

/// Posterior at an arbitrary time inside the solution span.
///
/// Between grid points the filtering estimate is extrapolated to `t` and then
/// conditioned on the (smoothed) estimate at the next grid point.
pub fn dense_eval(solution: &ProbabilisticSolution, t: f64) -> Result<SqrtGaussian> {
    let (start, end) = solution.span();
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let states = solution.states();
    let idx = solution.grid.partition_point(|&g| g <= t) - 1;
    if solution.grid[idx] == t {
        return Ok(states[idx].clone());
    }
    let prior = &solution.priors[idx];
    let kappa = solution.diffusion;
    let to_t = discretize_with_nodes(prior, t - solution.grid[idx], solution.nodes)?;
    let extrapolated = ssm::predict(&solution.filtered[idx], &to_t, kappa)?;
    if solution.smoothed.is_empty() {
        return Ok(extrapolated);
    }
    let to_next = discretize_with_nodes(prior, solution.grid[idx + 1] - t, solution.nodes)?;
    let (bridged, _) =
        ssm::smooth_step(&extrapolated, &to_next, kappa, &solution.smoothed[idx + 1])?;
    Ok(bridged)
}

/// Empirical stability function: one step of size 1 on `ẏ = z·y` from the exact
/// initial state, returning `E₀μ₁ / y₀`.
///
/// Unbounded growth is reported as the returned value rather than as an error.
pub fn amplification(config: &SolverConfig, z: f64) -> Result<f64> {
    let ivp = linear_test(z);
    let layout = StateLayout::new(1, config.q);
    let state = init_state(&ivp, config.q, config.init)?;
    let nodes = config.node_count();
    let (tm, rate) = match config.prior {
        PriorChoice::Iwp => (
            discretize_with_nodes(&make_iwp(1, config.q)?, 1.0, nodes)?,
            None,
        ),
        PriorChoice::Ioup | PriorChoice::IoupRosenbrock => {
            let rate = DMatrix::from_element(1, 1, z);
            let prior = make_ioup(1, config.q, &rate)?;
            (discretize_with_nodes(&prior, 1.0, nodes)?, Some(rate))
        }
    };
    let (predicted, corrected, _) = filter_step(
        &ivp,
        &layout,
        &state,
        &tm,
        config.diffusion,
        config.linearization,
        1.0,
        rate.as_ref(),
    )?;
    let mean = corrected.map(|(s, _)| s.mean).unwrap_or(predicted.mean);
    Ok(mean[0] / ivp.initial_value()[0])
}

/// Spectral radius of the mean recursion `μ_{n+1} = (I − K·H)·Φ·μ_n` of the
/// filter on `ẏ = z·y` with unit steps, once the covariance has reached its
/// steady state.
///
/// This is the asymptotic growth factor of the filter on the test equation,
/// independent of how the derivative blocks were initialized.
pub fn steady_state_amplification(config: &SolverConfig, z: f64) -> Result<f64> {
    let ivp = linear_test(z);
    let q = config.q;
    let layout = StateLayout::new(1, q);
    let n = layout.state_len();
    let nodes = config.node_count();
    let (tm, rate) = match config.prior {
        PriorChoice::Iwp => (discretize_with_nodes(&make_iwp(1, q)?, 1.0, nodes)?, None),
        PriorChoice::Ioup | PriorChoice::IoupRosenbrock => {
            let rate = DMatrix::from_element(1, 1, z);
            (
                discretize_with_nodes(&make_ioup(1, q, &rate)?, 1.0, nodes)?,
                Some(rate),
            )
        }
    };
    let kappa = config.diffusion.max(f64::MIN_POSITIVE).max(1.0);
    let step = |state: &SqrtGaussian| -> Result<SqrtGaussian> {
        let (predicted, corrected, _) = filter_step(
            &ivp,
            &layout,
            state,
            &tm,
            kappa,
            config.linearization,
            1.0,
            rate.as_ref(),
        )?;
        corrected.map(|(s, _)| s).ok_or_else(|| {
            Error::InvalidState(format!("non-finite filter state {:?}", predicted.mean))
        })
    };

    let mut state = SqrtGaussian::new(DVector::zeros(n), SqrtFactor::zeros(n, n))?;
    let mut cov = state.cov();
    for _ in 0..10_000 {
        state = step(&state)?;
        let next = state.cov();
        let change = (&next - &cov).norm();
        cov = next;
        if change <= 1e-14 * cov.norm() {
            break;
        }
    }
    let mut recursion = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut mean = DVector::zeros(n);
        mean[j] = 1.0;
        let probe = SqrtGaussian::new(mean, state.cov_sqrt.clone())?;
        recursion.set_column(j, &step(&probe)?.mean);
    }
    Ok(recursion
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{logistic, CustomIvp};

    #[test]
    fn linear_chain_initialization() {
        let l = nalgebra::dmatrix![-1.0, 2.0; 0.5, -3.0];
        let y0 = DVector::from_vec(vec![1.0, -2.0]);
        let ivp = CustomIvp::new("lin", y0.clone(), (0.0, 1.0), {
            let l = l.clone();
            move |y, _| &l * y
        })
        .with_linear_part(l.clone());
        assert!(matches!(
            init_state(&ivp, 2, InitMode::Exact),
            Err(Error::Initialization(_))
        ));
        let s = init_state(&ivp, 3, InitMode::Extended).unwrap();
        let layout = StateLayout::new(2, 3);
        assert_eq!(layout.block(&s.mean, 1), &l * &y0);
        assert_eq!(s.cov_sqrt.matrix()[(5, 5)], EXTENDED_INIT_STD);
        assert_eq!(s.cov_sqrt.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn logistic_initial_derivatives() {
        let k = 7.0;
        let ivp = logistic(k).unwrap();
        let s = init_state(&ivp, 3, InitMode::Exact).unwrap();
        let d1 = -1.0 + 1.0 / k;
        let d2 = (-1.0 + 2.0 / k) * d1;
        // y''' = f''(y)·ẏ² + f'(y)·ÿ with f'' = 2/K.
        let d3 = 2.0 / k * d1 * d1 + (-1.0 + 2.0 / k) * d2;
        assert!((s.mean[1] - d1).abs() < 1e-15);
        assert!((s.mean[2] - d2).abs() < 1e-15);
        assert!((s.mean[3] - d3).abs() < 1e-14);
        assert!(s.cov().norm() == 0.0);
    }

    #[test]
    fn step_grid_covers_span() {
        let ivp = logistic(10.0).unwrap();
        let g = build_grid(&ivp, &Grid::Step(0.1)).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(*g.last().unwrap(), 10.0);
        let g = build_grid(&ivp, &Grid::Step(3.0)).unwrap();
        assert_eq!(g, vec![0.0, 3.0, 6.0, 9.0, 10.0]);
        assert!(build_grid(&ivp, &Grid::Points(vec![0.0, 2.0, 1.0])).is_err());
        assert!(build_grid(&ivp, &Grid::Points(vec![0.5, 1.0])).is_err());
    }

    #[test]
    fn ekl_without_split_is_rejected() {
        let ivp = CustomIvp::new("f", DVector::from_element(1, 1.0), (0.0, 1.0), |y, _| -y);
        let cfg = SolverConfig::iwp(1, 0.1, LinearizationStrategy::Ekl);
        assert!(matches!(solve(&ivp, &cfg), Err(Error::Configuration(_))));
        let cfg = SolverConfig::exponential(1, 0.1);
        assert!(matches!(solve(&ivp, &cfg), Err(Error::Configuration(_))));
    }
}
