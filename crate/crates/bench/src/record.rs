use std::io::{Read, Write};

use anyhow::Result;
use serde::{Deserialize, Serialize};

/// Header of the work-precision CSV.
pub const CSV_HEADER: &str = "problem,method,q,h,steps,f_evals,jac_evals,expm_calls,wall_time_s,rmse_final,l2_traj,sigma_hat,diverged";

/// One solver run of a work-precision table.
///
/// Diverged runs carry `f64::INFINITY` errors, written as `inf`. `sigma_hat`
/// is empty when the run was not calibrated or did not finish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub method: String,
    pub q: usize,
    pub h: f64,
    pub steps: usize,
    pub f_evals: usize,
    pub jac_evals: usize,
    pub expm_calls: usize,
    pub wall_time_s: f64,
    pub rmse_final: f64,
    pub l2_traj: f64,
    pub sigma_hat: Option<f64>,
    pub diverged: bool,
}

/// Amplification factor of one method at one point of the negative real axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub method: String,
    pub q: usize,
    pub z: f64,
    pub amplification: f64,
    pub abs_amplification: f64,
    pub exp_z: f64,
}

pub fn write_csv<T: Serialize, W: Write>(records: &[T], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Write the work-precision table, with a header even when `records` is empty.
pub fn write_runs<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    if records.is_empty() {
        writeln!(out, "{CSV_HEADER}")?;
        return Ok(());
    }
    write_csv(records, out)
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = vec![];
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
