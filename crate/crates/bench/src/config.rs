//! Run options shared by the command line and configuration files.
//!
//! A configuration file mirrors the flags (`problem = "burgers"`,
//! `param = ["N=50"]`, `h-list = [0.5, 0.25]`, ...). Values given on the
//! command line take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use expfilter::Problem;
use serde::Deserialize;

use crate::method::{Method, MethodSettings};

pub const DEFAULT_PROBLEM: &str = "logistic";
pub const DEFAULT_STEP: f64 = 0.1;
pub const DEFAULT_STEPS: [f64; 6] = [0.5, 0.25, 0.1, 0.05, 0.025, 0.01];
pub const DEFAULT_REF_TOL: f64 = 1e-8;

#[derive(Args, Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// TOML or JSON file with default values for these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Registered problem name, see `list-problems`.
    #[arg(long)]
    pub problem: Option<String>,

    /// Problem parameter as KEY=VALUE; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    #[serde(default)]
    pub param: Vec<String>,

    /// Method tag; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub method: Vec<Method>,

    /// Number of integrated derivatives in the prior.
    #[arg(long)]
    pub q: Option<usize>,

    /// Step size of a single run.
    #[arg(long)]
    pub h: Option<f64>,

    /// Comma-separated step sizes of a work-precision table.
    #[arg(long = "h-list", value_delimiter = ',')]
    #[serde(default, alias = "h_list")]
    pub h_list: Vec<f64>,

    /// Gauss-Legendre nodes for IOUP process noise (default max(q, 10)).
    #[arg(long)]
    pub nodes: Option<usize>,

    #[arg(long)]
    pub calibrate: Option<bool>,

    #[arg(long)]
    pub smooth: Option<bool>,

    /// Relative self-consistency tolerance of the reference solution.
    #[arg(long = "ref-tol")]
    #[serde(alias = "ref_tol")]
    pub ref_tol: Option<f64>,

    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Seed for posterior samples.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Use the larger spatial grids of the original experiments.
    #[arg(long = "paper-scale")]
    #[serde(alias = "paper_scale")]
    pub paper_scale: Option<bool>,

    /// Comma-separated z values of a stability sweep.
    #[arg(long = "z-list", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, alias = "z_list")]
    pub z_list: Vec<f64>,

    /// Posterior samples written next to the trajectory of `solve`.
    #[arg(long)]
    pub samples: Option<usize>,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn pick_list<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

impl Options {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(parsed)
    }

    /// Fill unset fields from `file`.
    pub fn or(self, file: Options) -> Options {
        Options {
            config: self.config,
            problem: pick(self.problem, file.problem),
            param: pick_list(self.param, file.param),
            method: pick_list(self.method, file.method),
            q: pick(self.q, file.q),
            h: pick(self.h, file.h),
            h_list: pick_list(self.h_list, file.h_list),
            nodes: pick(self.nodes, file.nodes),
            calibrate: pick(self.calibrate, file.calibrate),
            smooth: pick(self.smooth, file.smooth),
            ref_tol: pick(self.ref_tol, file.ref_tol),
            out: pick(self.out, file.out),
            seed: pick(self.seed, file.seed),
            paper_scale: pick(self.paper_scale, file.paper_scale),
            z_list: pick_list(self.z_list, file.z_list),
            samples: pick(self.samples, file.samples),
        }
    }

    /// Merge with the configuration file named by `--config`, if any.
    pub fn resolve_file(self) -> Result<Options> {
        match &self.config {
            Some(path) => {
                let file = Options::from_file(path)?;
                Ok(self.or(file))
            }
            None => Ok(self),
        }
    }

    pub fn params(&self) -> Result<BTreeMap<String, f64>> {
        parse_params(&self.param)
    }

    pub fn problem(&self) -> Result<Problem> {
        let name = self.problem.as_deref().unwrap_or(DEFAULT_PROBLEM);
        Ok(Problem::from_name(
            name,
            &self.params()?,
            self.paper_scale.unwrap_or(false),
        )?)
    }

    pub fn settings(&self) -> MethodSettings {
        let d = MethodSettings::default();
        MethodSettings {
            q: self.q.unwrap_or(d.q),
            nodes: self.nodes,
            calibrate: self.calibrate.unwrap_or(d.calibrate),
            smooth: self.smooth.unwrap_or(d.smooth),
        }
    }

    pub fn methods_or(&self, default: &[Method]) -> Vec<Method> {
        if self.method.is_empty() {
            default.to_vec()
        } else {
            self.method.clone()
        }
    }

    pub fn step_list(&self) -> Vec<f64> {
        if self.h_list.is_empty() {
            DEFAULT_STEPS.to_vec()
        } else {
            self.h_list.clone()
        }
    }

    pub fn ref_tol(&self) -> f64 {
        self.ref_tol.unwrap_or(DEFAULT_REF_TOL)
    }
}

pub fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in items {
        let Some((key, value)) = item.split_once('=') else {
            bail!("parameter '{item}' is not of the form KEY=VALUE");
        };
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("parameter '{key}' has a non-numeric value"))?;
        out.insert(key.trim().to_string(), value);
    }
    Ok(out)
}
