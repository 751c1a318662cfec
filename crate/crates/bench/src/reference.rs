//! High-accuracy reference trajectories from the classic exponential
//! trapezoidal stepper.

use std::collections::HashMap;
use std::sync::Mutex;

use anyhow::{bail, ensure, Result};
use expfilter::{ClassicScheme, ClassicStepper, Ivp};
use nalgebra::DVector;

/// Steps of the first reference attempt. A multiple of 1000 keeps decimal
/// step sizes such as 0.1 or 0.01 on the reference grid.
pub const INITIAL_STEPS: usize = 1000;
pub const MAX_HALVINGS: usize = 20;
/// Upper bound on stored grid points; beyond it every `stride`-th step is kept.
const MAX_STORED: usize = 1 << 14;

#[derive(Debug)]
pub struct ReferenceSolution {
    pub t0: f64,
    /// Spacing of the stored grid, a power-of-two multiple of `step`.
    pub spacing: f64,
    pub values: Vec<DVector<f64>>,
    /// `N(ỹ)` at stored points, needed to restart the two-stage stepper.
    nonlinear: Vec<DVector<f64>>,
    /// Step size of the accepted run.
    pub step: f64,
    pub steps: usize,
    /// Relative change of the final state under the last halving.
    pub estimate: f64,
    pub tag: String,
    restarts: Mutex<HashMap<u64, DVector<f64>>>,
}

fn relative_change(coarse: &DVector<f64>, fine: &DVector<f64>) -> f64 {
    let diff = (coarse - fine).norm();
    if diff == 0.0 {
        0.0
    } else {
        diff / fine.norm()
    }
}

/// Final state, stored values and stored `N(ỹ)`.
type Run = (DVector<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Final state of `steps` steps, plus the stored subsample when `stride` is given.
fn run(ivp: &dyn Ivp, steps: usize, stride: Option<usize>) -> Result<Run> {
    let (t0, t1) = ivp.time_span();
    let h = (t1 - t0) / steps as f64;
    let stepper = ClassicStepper::new(ClassicScheme::ExponentialTrapezoidalPec, ivp, h)?;
    let mut y = ivp.initial_value();
    let mut n = ivp
        .nonlinear(&y, t0)
        .expect("stepper construction checked the split");
    let mut values = vec![];
    let mut nonlinear = vec![];
    for k in 0..steps {
        if let Some(s) = stride {
            if k % s == 0 {
                values.push(y.clone());
                nonlinear.push(n.clone());
            }
        }
        let t = t0 + k as f64 * h;
        let (next, _, n_next) = stepper.classic_step_with(t, &y, &n);
        y = next;
        n = n_next;
    }
    ensure!(
        y.iter().all(|v| v.is_finite()),
        "reference run with {steps} steps produced non-finite values"
    );
    if stride.is_some() {
        values.push(y.clone());
        nonlinear.push(n);
    }
    Ok((y, values, nonlinear))
}

/// Halve the reference step from [`INITIAL_STEPS`] until two successive final
/// states agree to `tol` relative.
pub fn reference(ivp: &dyn Ivp, tol: f64) -> Result<ReferenceSolution> {
    ensure!(tol > 0.0, "reference tolerance must be positive, got {tol}");
    ensure!(
        ivp.linear_part().is_some(),
        "the reference stepper needs a semi-linear split"
    );
    let (t0, t1) = ivp.time_span();
    let mut steps = INITIAL_STEPS;
    let (mut previous, _, _) = run(ivp, steps, None)?;
    for _ in 0..MAX_HALVINGS {
        steps *= 2;
        let stride = (steps / MAX_STORED).max(1).next_power_of_two();
        // Only the run that may be accepted keeps its trajectory.
        let (last, values, nonlinear) = run(ivp, steps, Some(stride))?;
        let estimate = relative_change(&previous, &last);
        if estimate <= tol {
            let step = (t1 - t0) / steps as f64;
            return Ok(ReferenceSolution {
                t0,
                spacing: step * stride as f64,
                values,
                nonlinear,
                step,
                steps,
                estimate,
                tag: format!("exponential-trapezoidal-pec h={step:e}"),
                restarts: Mutex::new(HashMap::new()),
            });
        }
        previous = last;
    }
    bail!(
        "reference for '{}' did not reach tolerance {tol:e} within {MAX_HALVINGS} halvings",
        ivp.name()
    )
}

impl ReferenceSolution {
    pub fn final_value(&self) -> &DVector<f64> {
        self.values.last().expect("at least one stored point")
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.step * self.steps as f64
    }

    /// Reference state at `t`.
    ///
    /// Stored points are returned directly; elsewhere the stepper is restarted
    /// from the preceding stored point with a step that lands on `t`.
    pub fn at(&self, ivp: &dyn Ivp, t: f64) -> Result<DVector<f64>> {
        let end = self.end();
        ensure!(
            t >= self.t0 - 1e-12 * (end - self.t0).abs()
                && t <= end + 1e-12 * (end - self.t0).abs(),
            "t = {t} outside the reference span"
        );
        let x = (t - self.t0) / self.spacing;
        let nearest = x.round();
        if (x - nearest).abs() <= 1e-9 {
            return Ok(self.values[nearest as usize].clone());
        }
        if let Some(v) = self
            .restarts
            .lock()
            .expect("not poisoned")
            .get(&t.to_bits())
        {
            return Ok(v.clone());
        }
        let idx = x.floor() as usize;
        let start = self.t0 + idx as f64 * self.spacing;
        let remaining = t - start;
        let k = (remaining / self.step).ceil().max(1.0) as usize;
        let h = remaining / k as f64;
        let stepper = ClassicStepper::new(ClassicScheme::ExponentialTrapezoidalPec, ivp, h)?;
        let mut y = self.values[idx].clone();
        let mut n = self.nonlinear[idx].clone();
        for j in 0..k {
            let (next, _, n_next) = stepper.classic_step_with(start + j as f64 * h, &y, &n);
            y = next;
            n = n_next;
        }
        self.restarts
            .lock()
            .expect("not poisoned")
            .insert(t.to_bits(), y.clone());
        Ok(y)
    }
}
