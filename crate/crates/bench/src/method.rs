use std::fmt;
use std::str::FromStr;

use expfilter::ssm::LinearizationStrategy;
use expfilter::SolverConfig;
use serde::{Deserialize, Serialize};

/// Solver variants exposed by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Ek0Iwp,
    Ek1Iwp,
    EklIwp,
    EklIoup,
    Ek1IoupRb,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ek0Iwp,
        Method::Ek1Iwp,
        Method::EklIwp,
        Method::EklIoup,
        Method::Ek1IoupRb,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Ek0Iwp => "ek0-iwp",
            Method::Ek1Iwp => "ek1-iwp",
            Method::EklIwp => "ekl-iwp",
            Method::EklIoup => "ekl-ioup",
            Method::Ek1IoupRb => "ek1-ioup-rb",
        }
    }

    pub fn uses_quadrature(self) -> bool {
        matches!(self, Method::EklIoup | Method::Ek1IoupRb)
    }

    /// Quadrature nodes used by the harness unless overridden.
    ///
    /// `q` nodes under-resolve `e^{Lτ}` once `‖Lh‖` exceeds one, so the
    /// harness uses at least ten.
    pub fn default_nodes(q: usize) -> usize {
        q.max(10)
    }

    pub fn config(self, settings: &MethodSettings, h: f64) -> SolverConfig {
        let q = settings.q;
        let mut cfg = match self {
            Method::Ek0Iwp => SolverConfig::iwp(q, h, LinearizationStrategy::Ek0),
            Method::Ek1Iwp => SolverConfig::iwp(q, h, LinearizationStrategy::Ek1),
            Method::EklIwp => SolverConfig::iwp(q, h, LinearizationStrategy::Ekl),
            Method::EklIoup => SolverConfig::exponential(q, h),
            Method::Ek1IoupRb => SolverConfig::rosenbrock(q, h),
        };
        if self.uses_quadrature() {
            cfg.nodes = Some(settings.nodes.unwrap_or_else(|| Self::default_nodes(q)));
        }
        cfg.calibrate = settings.calibrate;
        cfg.smooth = settings.smooth;
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.trim())
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
                format!("unknown method '{s}', expected one of {}", known.join(", "))
            })
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.tag().to_string()
    }
}

/// Settings shared by every method in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub q: usize,
    /// Quadrature nodes for IOUP priors; `None` picks [`Method::default_nodes`].
    pub nodes: Option<usize>,
    pub calibrate: bool,
    pub smooth: bool,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            q: 2,
            nodes: None,
            calibrate: true,
            smooth: true,
        }
    }
}
