//! Initial value problems, most of them semi-linear `f(y, t) = L·y + N(y, t)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::jet::{Jet, Scalar};

/// An initial value problem `ẏ = f(y, t)`, `y(t₀) = y₀`, on `[t₀, T]`.
pub trait Ivp: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn initial_value(&self) -> DVector<f64>;

    fn time_span(&self) -> (f64, f64);

    fn rhs(&self, y: &DVector<f64>, t: f64) -> DVector<f64>;

    /// Vector field evaluated over Taylor jets, when the problem supports it.
    fn rhs_jet(&self, _y: &[Jet], _t: &Jet) -> Option<Vec<Jet>> {
        None
    }

    /// The linear part `L` of a semi-linear split.
    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        None
    }

    /// The non-linear remainder `N(y, t) = f(y, t) − L·y`.
    fn nonlinear(&self, y: &DVector<f64>, t: f64) -> Option<DVector<f64>> {
        self.linear_part().map(|l| self.rhs(y, t) - l * y)
    }

    /// Analytic Jacobian `∂f/∂y`.
    fn jacobian(&self, _y: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form solution, when known.
    fn exact_solution(&self, _t: f64) -> Option<DVector<f64>> {
        None
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn linear_apply<S: Scalar>(l: &DMatrix<f64>, y: &[S]) -> Vec<S> {
    (0..l.nrows())
        .map(|i| {
            let mut acc = y[0].zero_like();
            for (j, yj) in y.iter().enumerate() {
                let c = l[(i, j)];
                if c != 0.0 {
                    acc = acc + yj.clone() * c;
                }
            }
            acc
        })
        .collect()
}

fn add_vecs<S: Scalar>(a: Vec<S>, b: Vec<S>) -> Vec<S> {
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Logistic growth with rate `−1` and carrying capacity `K`:
/// `ẏ = −y + y²/K`, `y(0) = 1`, `t ∈ [0, 10]`.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub capacity: f64,
    linear: DMatrix<f64>,
}

impl Logistic {
    fn nonlinear_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        vec![y[0].clone() * y[0].clone() * (1.0 / self.capacity)]
    }
}

pub fn logistic(capacity: f64) -> Result<Logistic> {
    if !(capacity > 0.0) || !capacity.is_finite() {
        return Err(invalid(format!(
            "carrying capacity must be positive, got {capacity}"
        )));
    }
    Ok(Logistic {
        capacity,
        linear: DMatrix::from_element(1, 1, -1.0),
    })
}

impl Ivp for Logistic {
    fn name(&self) -> String {
        "logistic".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn initial_value(&self) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    fn time_span(&self) -> (f64, f64) {
        (0.0, 10.0)
    }

    fn rhs(&self, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, -y[0] + y[0] * y[0] / self.capacity)
    }

    fn rhs_jet(&self, y: &[Jet], _t: &Jet) -> Option<Vec<Jet>> {
        Some(add_vecs(
            linear_apply(&self.linear, y),
            self.nonlinear_generic(y),
        ))
    }

    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        Some(&self.linear)
    }

    fn nonlinear(&self, y: &DVector<f64>, _t: f64) -> Option<DVector<f64>> {
        Some(DVector::from_vec(self.nonlinear_generic(&to_vec(y))))
    }

    fn jacobian(&self, y: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(
            1,
            1,
            -1.0 + 2.0 * y[0] / self.capacity,
        ))
    }

    fn exact_solution(&self, t: f64) -> Option<DVector<f64>> {
        let (k, y0) = (self.capacity, 1.0);
        let e = (-t).exp();
        Some(DVector::from_element(1, k * y0 * e / (k + y0 * (e - 1.0))))
    }
}

/// Scalar test equation `ẏ = λ·y`, `y(0) = 1`.
#[derive(Debug, Clone)]
pub struct LinearTest {
    pub lambda: f64,
    pub end: f64,
    linear: DMatrix<f64>,
}

pub fn linear_test(lambda: f64) -> LinearTest {
    linear_test_on(lambda, 1.0)
}

/// Test equation on `[0, end]`.
pub fn linear_test_on(lambda: f64, end: f64) -> LinearTest {
    LinearTest {
        lambda,
        end,
        linear: DMatrix::from_element(1, 1, lambda),
    }
}

impl Ivp for LinearTest {
    fn name(&self) -> String {
        "linear".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn initial_value(&self) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    fn time_span(&self) -> (f64, f64) {
        (0.0, self.end)
    }

    fn rhs(&self, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        y * self.lambda
    }

    fn rhs_jet(&self, y: &[Jet], _t: &Jet) -> Option<Vec<Jet>> {
        Some(linear_apply(&self.linear, y))
    }

    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        Some(&self.linear)
    }

    fn nonlinear(&self, _y: &DVector<f64>, _t: f64) -> Option<DVector<f64>> {
        Some(DVector::zeros(1))
    }

    fn jacobian(&self, _y: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        Some(self.linear.clone())
    }

    fn exact_solution(&self, t: f64) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, (self.lambda * t).exp()))
    }
}

fn laplacian(n: usize, neumann: bool) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = -2.0;
        if i > 0 {
            l[(i, i - 1)] = 1.0;
        }
        if i + 1 < n {
            l[(i, i + 1)] = 1.0;
        }
    }
    if neumann {
        l[(0, 0)] = -1.0;
        l[(n - 1, n - 1)] = -1.0;
    }
    l
}

fn check_grid(points: usize, diffusion: f64) -> Result<()> {
    if points < 3 {
        return Err(invalid(format!(
            "spatial grid needs at least 3 points, got {points}"
        )));
    }
    if !(diffusion > 0.0) || !diffusion.is_finite() {
        return Err(invalid(format!(
            "diffusion coefficient must be positive, got {diffusion}"
        )));
    }
    Ok(())
}

/// Method-of-lines Burgers' equation on `(0, 1)` with zero-Dirichlet boundaries.
///
/// States are the `n` points `xᵢ = i·Δx`, `i = 1..n`, `Δx = 1/n`.
#[derive(Debug, Clone)]
pub struct Burgers {
    pub points: usize,
    pub diffusion: f64,
    linear: DMatrix<f64>,
    y0: DVector<f64>,
}

pub fn burgers(points: usize, diffusion: f64) -> Result<Burgers> {
    check_grid(points, diffusion)?;
    let dx = 1.0 / points as f64;
    let linear = laplacian(points, false) * (diffusion / (dx * dx));
    let y0 = DVector::from_fn(points, |i, _| {
        let x = (i + 1) as f64 * dx;
        (3.0 * std::f64::consts::PI * x).sin().powi(3) * (1.0 - x).powf(1.5)
    });
    Ok(Burgers {
        points,
        diffusion,
        linear,
        y0,
    })
}

impl Burgers {
    fn dx(&self) -> f64 {
        1.0 / self.points as f64
    }

    fn nonlinear_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let n = y.len();
        let c = 1.0 / (4.0 * self.dx());
        let sq = |s: &S| s.clone() * s.clone();
        (0..n)
            .map(|i| {
                if i == 0 {
                    sq(&y[1]) * c
                } else if i == n - 1 {
                    sq(&y[n - 2]) * c
                } else {
                    (sq(&y[i + 1]) - sq(&y[i - 1])) * c
                }
            })
            .collect()
    }
}

impl Ivp for Burgers {
    fn name(&self) -> String {
        "burgers".into()
    }

    fn dim(&self) -> usize {
        self.points
    }

    fn initial_value(&self) -> DVector<f64> {
        self.y0.clone()
    }

    fn time_span(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn rhs(&self, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.linear * y + DVector::from_vec(self.nonlinear_generic(&to_vec(y)))
    }

    fn rhs_jet(&self, y: &[Jet], _t: &Jet) -> Option<Vec<Jet>> {
        Some(add_vecs(
            linear_apply(&self.linear, y),
            self.nonlinear_generic(y),
        ))
    }

    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        Some(&self.linear)
    }

    fn nonlinear(&self, y: &DVector<f64>, _t: f64) -> Option<DVector<f64>> {
        Some(DVector::from_vec(self.nonlinear_generic(&to_vec(y))))
    }

    fn jacobian(&self, y: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        let n = self.points;
        let c = 2.0 / (4.0 * self.dx());
        let mut j = self.linear.clone();
        j[(0, 1)] += c * y[1];
        j[(n - 1, n - 2)] += c * y[n - 2];
        for i in 1..n - 1 {
            j[(i, i + 1)] += c * y[i + 1];
            j[(i, i - 1)] -= c * y[i - 1];
        }
        Some(j)
    }
}

/// Reaction–diffusion model with logistic reaction `u(1 − u)` and zero-Neumann
/// boundaries on `(0, 1)`.
///
/// States are the `n` cell centres `xᵢ = (i − ½)·Δx`, `Δx = 1/n`.
#[derive(Debug, Clone)]
pub struct ReactionDiffusion {
    pub points: usize,
    pub diffusion: f64,
    linear: DMatrix<f64>,
    y0: DVector<f64>,
}

pub fn reaction_diffusion(points: usize, diffusion: f64) -> Result<ReactionDiffusion> {
    check_grid(points, diffusion)?;
    let dx = 1.0 / points as f64;
    let linear = laplacian(points, true) * (diffusion / (dx * dx));
    let y0 = DVector::from_fn(points, |i, _| {
        let x = (i as f64 + 0.5) * dx;
        1.0 / (1.0 + (30.0 * x - 10.0).exp())
    });
    Ok(ReactionDiffusion {
        points,
        diffusion,
        linear,
        y0,
    })
}

impl ReactionDiffusion {
    fn nonlinear_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        y.iter()
            .map(|u| u.clone() - u.clone() * u.clone())
            .collect()
    }
}

impl Ivp for ReactionDiffusion {
    fn name(&self) -> String {
        "reaction-diffusion".into()
    }

    fn dim(&self) -> usize {
        self.points
    }

    fn initial_value(&self) -> DVector<f64> {
        self.y0.clone()
    }

    fn time_span(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    fn rhs(&self, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.linear * y + y.map(|u| u * (1.0 - u))
    }

    fn rhs_jet(&self, y: &[Jet], _t: &Jet) -> Option<Vec<Jet>> {
        Some(add_vecs(
            linear_apply(&self.linear, y),
            self.nonlinear_generic(y),
        ))
    }

    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        Some(&self.linear)
    }

    fn nonlinear(&self, y: &DVector<f64>, _t: f64) -> Option<DVector<f64>> {
        Some(y.map(|u| u * (1.0 - u)))
    }

    fn jacobian(&self, y: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        let mut j = self.linear.clone();
        for i in 0..self.points {
            j[(i, i)] += 1.0 - 2.0 * y[i];
        }
        Some(j)
    }
}

type Field = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;

/// Problem given only through a numeric vector field.
///
/// Such problems cannot be expanded in Taylor jets, so solvers must use the
/// extended initialization, and `EK1` falls back to finite-difference Jacobians.
#[derive(Clone)]
pub struct CustomIvp {
    name: String,
    y0: DVector<f64>,
    span: (f64, f64),
    field: Arc<Field>,
    linear: Option<DMatrix<f64>>,
}

impl CustomIvp {
    pub fn new(
        name: impl Into<String>,
        y0: DVector<f64>,
        span: (f64, f64),
        field: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            y0,
            span,
            field: Arc::new(field),
            linear: None,
        }
    }

    pub fn with_linear_part(mut self, linear: DMatrix<f64>) -> Self {
        self.linear = Some(linear);
        self
    }
}

impl fmt::Debug for CustomIvp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIvp")
            .field("name", &self.name)
            .field("dim", &self.y0.len())
            .finish()
    }
}

impl Ivp for CustomIvp {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.y0.len()
    }

    fn initial_value(&self) -> DVector<f64> {
        self.y0.clone()
    }

    fn time_span(&self) -> (f64, f64) {
        self.span
    }

    fn rhs(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.field)(y, t)
    }

    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        self.linear.as_ref()
    }
}

/// Registered problems, addressable by name.
#[derive(Debug, Clone)]
pub enum Problem {
    Logistic(Logistic),
    Linear(LinearTest),
    Burgers(Burgers),
    ReactionDiffusion(ReactionDiffusion),
}

/// Name, parameters with their defaults, and a short description.
pub const REGISTRY: &[(&str, &str, &str)] = &[
    (
        "logistic",
        "K=100",
        "logistic decay y' = -y + y^2/K on [0, 10]",
    ),
    (
        "linear",
        "lambda=-1, T=1",
        "scalar test equation y' = lambda*y",
    ),
    (
        "burgers",
        "N=50, D=0.075 (N=250 with --paper-scale)",
        "Burgers' equation, finite differences, zero-Dirichlet boundaries, t in [0, 1]",
    ),
    (
        "reaction-diffusion",
        "N=25, D=0.25 (N=100 with --paper-scale)",
        "logistic reaction-diffusion, zero-Neumann boundaries, t in [0, 2]",
    ),
];

fn take(params: &mut BTreeMap<String, f64>, keys: &[&str], default: f64) -> f64 {
    for k in keys {
        if let Some(v) = params.remove(*k) {
            return v;
        }
    }
    default
}

fn take_count(params: &mut BTreeMap<String, f64>, default: usize) -> Result<usize> {
    let v = take(params, &["N", "n", "points"], default as f64);
    if v.fract() != 0.0 || v < 0.0 {
        return Err(invalid(format!(
            "grid size must be a non-negative integer, got {v}"
        )));
    }
    Ok(v as usize)
}

impl Problem {
    /// Build a registered problem from its name and `key=value` parameters.
    pub fn from_name(
        name: &str,
        params: &BTreeMap<String, f64>,
        paper_scale: bool,
    ) -> Result<Self> {
        let mut params = params.clone();
        let problem = match name {
            "logistic" => Problem::Logistic(logistic(take(&mut params, &["K", "k"], 100.0))?),
            "linear" => {
                let lambda = take(&mut params, &["lambda", "l"], -1.0);
                let end = take(&mut params, &["T", "t"], 1.0);
                if !(end > 0.0) {
                    return Err(invalid(format!("end time must be positive, got {end}")));
                }
                Problem::Linear(linear_test_on(lambda, end))
            }
            "burgers" => {
                let n = take_count(&mut params, if paper_scale { 250 } else { 50 })?;
                let d = take(&mut params, &["D", "d"], 0.075);
                Problem::Burgers(burgers(n, d)?)
            }
            "reaction-diffusion" | "reaction_diffusion" => {
                let n = take_count(&mut params, if paper_scale { 100 } else { 25 })?;
                let d = take(&mut params, &["D", "d"], 0.25);
                Problem::ReactionDiffusion(reaction_diffusion(n, d)?)
            }
            other => {
                return Err(Error::InvalidArgument(format!("unknown problem '{other}'")));
            }
        };
        if let Some(key) = params.keys().next() {
            return Err(invalid(format!(
                "unknown parameter '{key}' for problem '{name}'"
            )));
        }
        Ok(problem)
    }

    fn inner(&self) -> &dyn Ivp {
        match self {
            Problem::Logistic(p) => p,
            Problem::Linear(p) => p,
            Problem::Burgers(p) => p,
            Problem::ReactionDiffusion(p) => p,
        }
    }
}

impl Ivp for Problem {
    fn name(&self) -> String {
        self.inner().name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn initial_value(&self) -> DVector<f64> {
        self.inner().initial_value()
    }
    fn time_span(&self) -> (f64, f64) {
        self.inner().time_span()
    }
    fn rhs(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        self.inner().rhs(y, t)
    }
    fn rhs_jet(&self, y: &[Jet], t: &Jet) -> Option<Vec<Jet>> {
        self.inner().rhs_jet(y, t)
    }
    fn linear_part(&self) -> Option<&DMatrix<f64>> {
        self.inner().linear_part()
    }
    fn nonlinear(&self, y: &DVector<f64>, t: f64) -> Option<DVector<f64>> {
        self.inner().nonlinear(y, t)
    }
    fn jacobian(&self, y: &DVector<f64>, t: f64) -> Option<DMatrix<f64>> {
        self.inner().jacobian(y, t)
    }
    fn exact_solution(&self, t: f64) -> Option<DVector<f64>> {
        self.inner().exact_solution(t)
    }
}
