//! Benchmark harness for the `expfilter` solvers: reference solutions,
//! work-precision tables, stability sweeps and their CSV format.

pub mod config;
pub mod harness;
pub mod method;
pub mod record;
pub mod reference;

pub use harness::{
    divergence_bound, error_metrics, log_z_grid, problem_label, problems_table, run_once,
    stability_sweep, work_precision,
};
pub use method::{Method, MethodSettings};
pub use record::{read_csv, write_csv, write_runs, RunRecord, StabilityRecord, CSV_HEADER};
pub use reference::{reference, ReferenceSolution};
