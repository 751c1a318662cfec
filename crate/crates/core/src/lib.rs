//! Filtering-based probabilistic ODE solvers.
//!
//! An ODE filter models the solution `y(t)` and its first `q` derivatives as a
//! Gauss–Markov process and conditions it on the ODE at a grid of time points
//! with an extended Kalman filter and smoother. With an integrated
//! Ornstein–Uhlenbeck prior whose rate is the linear part of a semi-linear
//! problem, the filter becomes a probabilistic exponential integrator.
//!
//! ```
//! use expfilter::{problems::logistic, solve, SolverConfig};
//!
//! let ivp = logistic(100.0).unwrap();
//! let sol = solve(&ivp, &SolverConfig::exponential(2, 0.1)).unwrap();
//! let exact = 100.0 * (-10f64).exp() / (100.0 + (-10f64).exp() - 1.0);
//! assert!((sol.final_value()[0] - exact).abs() < 1e-6);
//! ```

// Range checks are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classic;
pub mod error;
pub mod jet;
pub mod matfun;
pub mod priors;
pub mod problems;
pub mod solver;
pub mod ssm;

pub use classic::{ClassicScheme, ClassicStepper, ClassicTrajectory};
pub use error::{Error, Result};
pub use matfun::{QuadratureRule, SqrtFactor};
pub use priors::{GaussMarkovPrior, PriorKind, StateLayout, TransitionModel};
pub use problems::{Ivp, Problem};
pub use solver::{
    amplification, dense_eval, init_state, rosenbrock_step, solve, steady_state_amplification,
    Grid, InitMode, PriorChoice, ProbabilisticSolution, SolverConfig, WorkCounters,
};
pub use ssm::{LinearizationStrategy, SqrtGaussian};
