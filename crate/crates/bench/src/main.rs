use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use expfilter::ssm::sample;
use expfilter::Ivp;
use expfilter_bench::config::{Options, DEFAULT_STEP};
use expfilter_bench::problems_table;
use expfilter_bench::{
    divergence_bound, error_metrics, log_z_grid, problem_label, reference, stability_sweep,
    work_precision, write_csv, write_runs, Method,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "expfilter",
    version,
    about = "Probabilistic exponential ODE solvers and their benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one method and print a summary.
    Solve(Options),
    /// Work-precision table of several methods and step sizes.
    Bench(Options),
    /// Amplification factors on the negative real axis.
    Stability(Options),
    /// Registered problems and their parameters.
    ListProblems,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_solve(opts: Options) -> Result<()> {
    let problem = opts.problem()?;
    let label = problem_label(&problem);
    let method = opts.methods_or(&[Method::EklIoup])[0];
    let settings = opts.settings();
    let h = opts.h.unwrap_or(DEFAULT_STEP);
    let mut cfg = method.config(&settings, h);
    cfg.divergence_bound = Some(divergence_bound(&problem));
    let start = std::time::Instant::now();
    let sol = expfilter::solve(&problem, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();

    let stats = sol.stats;
    eprintln!("problem      {label}");
    eprintln!("method       {method} q={} nodes={}", settings.q, sol.nodes);
    eprintln!("steps        {} (h = {h})", stats.steps);
    eprintln!(
        "work         f={} jac={} expm={}",
        stats.f_evals, stats.jac_evals, stats.expm_calls
    );
    eprintln!("wall time    {elapsed:.3} s");
    if let Some(s) = sol.sigma_hat {
        eprintln!("sigma_hat    {s:e}");
    }
    let y = sol.final_value();
    eprintln!("|y(T)|       {:e}", y.norm());
    if let Some(exact) = problem.exact_solution(problem.time_span().1) {
        eprintln!(
            "rmse (exact) {:e}",
            (&y - exact).norm() / (problem.dim() as f64).sqrt()
        );
    } else if opts.ref_tol.is_some() {
        let reference = reference(&problem, opts.ref_tol())?;
        let (rmse, l2) = error_metrics(&problem, &sol, &reference)?;
        eprintln!("rmse final   {rmse:e}");
        eprintln!("l2 traj      {l2:e}");
    }

    let Some(path) = opts.out.as_deref() else {
        return Ok(());
    };
    let samples = opts.samples.unwrap_or(0);
    let draws = if samples > 0 && !sol.kernels.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(0));
        let terminal = sol.filtered.last().expect("non-empty");
        (0..samples)
            .map(|_| sample(terminal, &sol.kernels, &mut rng))
            .collect::<Vec<_>>()
    } else {
        vec![]
    };
    let mut out = output(Some(path))?;
    write!(out, "t,component,mean,std")?;
    for j in 0..draws.len() {
        write!(out, ",sample_{j}")?;
    }
    writeln!(out)?;
    let d = problem.dim();
    for (n, (state, &t)) in sol.states().iter().zip(&sol.grid).enumerate() {
        let cov = state.cov();
        for i in 0..d {
            write!(
                out,
                "{t},{i},{},{}",
                state.mean[i],
                cov[(i, i)].max(0.0).sqrt()
            )?;
            for draw in &draws {
                write!(out, ",{}", draw[n][i])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn run_bench(opts: Options) -> Result<()> {
    let problem = opts.problem()?;
    let label = problem_label(&problem);
    let methods = opts.methods_or(&Method::ALL);
    let steps = opts.step_list();
    let tol = opts.ref_tol();
    let reference = reference(&problem, tol)?;
    eprintln!(
        "reference    {} ({} steps, self-consistency {:e})",
        reference.tag, reference.steps, reference.estimate
    );
    let records = work_precision(
        &problem,
        &label,
        &reference,
        &methods,
        &steps,
        &opts.settings(),
    )?;
    write_runs(&records, output(opts.out.as_deref())?)
}

fn run_stability(opts: Options) -> Result<()> {
    let methods = opts.methods_or(&Method::ALL);
    let z = if opts.z_list.is_empty() {
        log_z_grid(-2.0, 6.0, 4)
    } else {
        opts.z_list.clone()
    };
    let records = stability_sweep(&methods, &opts.settings(), &z)?;
    write_csv(&records, output(opts.out.as_deref())?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(o) => run_solve(o.resolve_file()?),
        Command::Bench(o) => run_bench(o.resolve_file()?),
        Command::Stability(o) => run_stability(o.resolve_file()?),
        Command::ListProblems => {
            print!("{}", problems_table());
            Ok(())
        }
    }
}
