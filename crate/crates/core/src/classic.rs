//! Classic (non-probabilistic) exponential integrators for semi-linear problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matfun;
use crate::problems::Ivp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassicScheme {
    /// `y_{n+1} = φ₀(Lh)·y_n + h·φ₁(Lh)·N(y_n)`.
    ExponentialEuler,
    /// Exponential Euler predictor followed by a trapezoidal corrector,
    /// in predict-evaluate-correct mode.
    ExponentialTrapezoidalPec,
}

/// Fixed-step exponential integrator for `ẏ = L·y + N(y, t)`.
pub struct ClassicStepper<'a> {
    pub scheme: ClassicScheme,
    ivp: &'a dyn Ivp,
    linear: DMatrix<f64>,
    step: f64,
    /// `φ₀(Lh)`, `h·φ₁(Lh)`, `h·φ₂(Lh)`.
    phis: [DMatrix<f64>; 3],
}

/// Iterates of a classic stepper: `y_n` and the predictor values `ỹ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub predictors: Vec<DVector<f64>>,
    pub f_evals: usize,
}

impl<'a> ClassicStepper<'a> {
    pub fn new(scheme: ClassicScheme, ivp: &'a dyn Ivp, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive and finite, got {h}"
            )));
        }
        let linear = ivp.linear_part().cloned().ok_or_else(|| {
            Error::Configuration(format!(
                "exponential integrators need a semi-linear split, '{}' declares none",
                ivp.name()
            ))
        })?;
        let mut phis = matfun::phi_all(2, &(&linear * h))?;
        phis.truncate(3);
        let phi2 = phis.pop().expect("three phi functions") * h;
        let phi1 = phis.pop().expect("three phi functions") * h;
        let phi0 = phis.pop().expect("three phi functions");
        Ok(Self {
            scheme,
            ivp,
            linear,
            step: h,
            phis: [phi0, phi1, phi2],
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    fn nonlinear(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        self.ivp
            .nonlinear(y, t)
            .expect("the problem declares a linear part")
    }

    /// Advance `(y_n, ỹ_n)` at time `t` by one step.
    ///
    /// `n_pred` is `N(ỹ_n, t)`; the returned triple carries `N(ỹ_{n+1}, t + h)`
    /// so that consecutive steps evaluate the nonlinearity once per stage.
    pub fn classic_step_with(
        &self,
        t: f64,
        y: &DVector<f64>,
        n_pred: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let [phi0, phi1, phi2] = &self.phis;
        let t_next = t + self.step;
        let predictor = phi0 * y + phi1 * n_pred;
        let n_next = self.nonlinear(&predictor, t_next);
        let value = match self.scheme {
            ClassicScheme::ExponentialEuler => predictor.clone(),
            ClassicScheme::ExponentialTrapezoidalPec => &predictor + phi2 * (&n_next - n_pred),
        };
        (value, predictor, n_next)
    }

    /// Advance `(y_n, ỹ_n)` at time `t` by one step, returning `(y_{n+1}, ỹ_{n+1})`.
    pub fn classic_step(
        &self,
        t: f64,
        y: &DVector<f64>,
        predictor: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let n_pred = match self.scheme {
            ClassicScheme::ExponentialEuler => self.nonlinear(y, t),
            ClassicScheme::ExponentialTrapezoidalPec => self.nonlinear(predictor, t),
        };
        let (value, pred, _) = self.classic_step_with(t, y, &n_pred);
        (value, pred)
    }

    /// Take `steps` steps from the problem's initial value with `ỹ₀ = y₀`.
    pub fn integrate(&self, steps: usize) -> ClassicTrajectory {
        let t0 = self.ivp.time_span().0;
        let y0 = self.ivp.initial_value();
        let mut times = vec![t0];
        let mut values = vec![y0.clone()];
        let mut predictors = vec![y0.clone()];
        let mut n_pred = self.nonlinear(&y0, t0);
        let mut f_evals = 1;
        for n in 0..steps {
            let t = t0 + n as f64 * self.step;
            let y = values.last().expect("seeded");
            let (value, predictor, n_next) = match self.scheme {
                ClassicScheme::ExponentialEuler => {
                    let n_y = if n == 0 {
                        n_pred.clone()
                    } else {
                        self.nonlinear(y, t)
                    };
                    if n > 0 {
                        f_evals += 1;
                    }
                    let [phi0, phi1, _] = &self.phis;
                    let v = phi0 * y + phi1 * n_y;
                    (v.clone(), v, DVector::zeros(0))
                }
                ClassicScheme::ExponentialTrapezoidalPec => {
                    f_evals += 1;
                    self.classic_step_with(t, y, &n_pred)
                }
            };
            n_pred = n_next;
            times.push(t0 + (n + 1) as f64 * self.step);
            values.push(value);
            predictors.push(predictor);
        }
        ClassicTrajectory {
            times,
            values,
            predictors,
            f_evals,
        }
    }
}
