use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use expfilter::problems::REGISTRY;
use expfilter::{amplification, solve, Error, Ivp, ProbabilisticSolution, Problem, WorkCounters};
use rayon::prelude::*;

use crate::method::{Method, MethodSettings};
use crate::record::{RunRecord, StabilityRecord};
use crate::reference::ReferenceSolution;

/// Timed repetitions per run; the median is reported.
pub const REPETITIONS: usize = 3;

/// Problem name with its parameters, as written to the CSV.
pub fn problem_label(problem: &Problem) -> String {
    match problem {
        Problem::Logistic(p) => format!("logistic(K={})", p.capacity),
        Problem::Linear(p) => format!("linear(lambda={};T={})", p.lambda, p.end),
        Problem::Burgers(p) => format!("burgers(N={};D={})", p.points, p.diffusion),
        Problem::ReactionDiffusion(p) => {
            format!("reaction-diffusion(N={};D={})", p.points, p.diffusion)
        }
    }
}

/// Human-readable listing of the registered problems.
pub fn problems_table() -> String {
    let mut out = String::new();
    for (name, params, about) in REGISTRY {
        out.push_str(&format!("{name:<20} {params:<40} {about}\n"));
    }
    out
}

/// Magnitude of the solution estimate beyond which a run counts as diverged.
pub fn divergence_bound(ivp: &dyn Ivp) -> f64 {
    1e3 * (1.0 + ivp.initial_value().amax())
}

/// Final-time RMSE and root-mean-square over the grid of per-point RMSEs.
pub fn error_metrics(
    ivp: &dyn Ivp,
    solution: &ProbabilisticSolution,
    reference: &ReferenceSolution,
) -> Result<(f64, f64)> {
    let d = ivp.dim() as f64;
    let states = solution.states();
    let mut sum = 0.0;
    let mut last = 0.0;
    for (state, &t) in states.iter().zip(&solution.grid) {
        let y_ref = reference.at(ivp, t)?;
        let err = (solution.layout.block(&state.mean, 0) - y_ref).norm_squared() / d;
        sum += err;
        last = err;
    }
    Ok((last.sqrt(), (sum / states.len() as f64).sqrt()))
}

fn median(mut times: Vec<Duration>) -> Duration {
    times.sort();
    times[times.len() / 2]
}

enum Outcome {
    Finished(Box<ProbabilisticSolution>),
    Diverged(WorkCounters),
}

fn attempt(ivp: &dyn Ivp, method: Method, settings: &MethodSettings, h: f64) -> Result<Outcome> {
    let mut cfg = method.config(settings, h);
    cfg.divergence_bound = Some(divergence_bound(ivp));
    match solve(ivp, &cfg) {
        Ok(sol) => Ok(Outcome::Finished(Box::new(sol))),
        Err(Error::Divergence { work, .. }) => Ok(Outcome::Diverged(work)),
        Err(Error::StepFailure { step, .. }) => Ok(Outcome::Diverged(WorkCounters {
            steps: step.saturating_sub(1),
            ..Default::default()
        })),
        Err(e) => Err(e.into()),
    }
}

/// Run one `(method, h)` pair against the reference.
pub fn run_once(
    ivp: &dyn Ivp,
    label: &str,
    reference: &ReferenceSolution,
    method: Method,
    settings: &MethodSettings,
    h: f64,
) -> Result<RunRecord> {
    let mut times = Vec::with_capacity(REPETITIONS);
    let mut outcome = None;
    for _ in 0..REPETITIONS {
        let start = Instant::now();
        let result = attempt(ivp, method, settings, h)?;
        times.push(start.elapsed());
        outcome = Some(result);
    }
    let wall_time_s = median(times).as_secs_f64();
    let base = RunRecord {
        problem: label.to_string(),
        method: method.tag().to_string(),
        q: settings.q,
        h,
        steps: 0,
        f_evals: 0,
        jac_evals: 0,
        expm_calls: 0,
        wall_time_s,
        rmse_final: f64::INFINITY,
        l2_traj: f64::INFINITY,
        sigma_hat: None,
        diverged: true,
    };
    let with_work = |w: WorkCounters| RunRecord {
        steps: w.steps,
        f_evals: w.f_evals,
        jac_evals: w.jac_evals,
        expm_calls: w.expm_calls,
        ..base.clone()
    };
    Ok(match outcome.expect("at least one repetition") {
        Outcome::Diverged(work) => with_work(work),
        Outcome::Finished(sol) => {
            let (rmse_final, l2_traj) = error_metrics(ivp, &sol, reference)?;
            RunRecord {
                rmse_final,
                l2_traj,
                sigma_hat: sol.sigma_hat,
                diverged: false,
                ..with_work(sol.stats)
            }
        }
    })
}

/// Every `(method, h)` pair, in input order, computed in parallel.
pub fn work_precision(
    ivp: &dyn Ivp,
    label: &str,
    reference: &ReferenceSolution,
    methods: &[Method],
    h_list: &[f64],
    settings: &MethodSettings,
) -> Result<Vec<RunRecord>> {
    ensure!(!methods.is_empty(), "no methods given");
    ensure!(!h_list.is_empty(), "no step sizes given");
    let jobs: Vec<(Method, f64)> = methods
        .iter()
        .flat_map(|&m| h_list.iter().map(move |&h| (m, h)))
        .collect();
    jobs.into_par_iter()
        .map(|(m, h)| run_once(ivp, label, reference, m, settings, h))
        .collect()
}

/// Amplification factors on a grid of non-positive `z`.
pub fn stability_sweep(
    methods: &[Method],
    settings: &MethodSettings,
    z_list: &[f64],
) -> Result<Vec<StabilityRecord>> {
    ensure!(
        z_list.iter().all(|&z| z <= 0.0),
        "stability sweeps are restricted to z <= 0"
    );
    let mut out = vec![];
    for &method in methods {
        let cfg = method.config(settings, 1.0);
        for &z in z_list {
            let r = amplification(&cfg, z)?;
            out.push(StabilityRecord {
                method: method.tag().to_string(),
                q: settings.q,
                z,
                amplification: r,
                abs_amplification: r.abs(),
                exp_z: z.exp(),
            });
        }
    }
    Ok(out)
}

/// `-10^k` for `k` from `lo` to `hi` with `per_decade` points per decade, plus zero.
pub fn log_z_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi - lo) * per_decade as f64).round() as usize;
    let mut z: Vec<f64> = (0..=n)
        .map(|k| -(10f64.powf(lo + k as f64 / per_decade as f64)))
        .collect();
    z.insert(0, 0.0);
    z
}
