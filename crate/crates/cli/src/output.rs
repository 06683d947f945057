//! CSV and JSON artefacts.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use condensate_core::diagnostics::{BlowupFit, MonotonicityCheck};
use condensate_core::{ConvergenceReport, InitialDatum, MinimizerSpec, SolverConfig};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed formatting: 17 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header row followed by one line per record.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(fmt_num).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())
}

/// Label used in snapshot file names, e.g. `profile_0.025000.csv`.
pub fn time_label(t: f64) -> String {
    format!("{t:.6}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Nonconvergence,
    ConfigError,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub alpha: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileFit {
    pub time: f64,
    pub window: (f64, f64),
    #[serde(flatten)]
    pub fit: BlowupFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondensateSummary {
    pub onset: Option<f64>,
    pub offset: Option<f64>,
    pub max: f64,
    pub final_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub newton_iterations: usize,
    pub rearrangements: usize,
    pub max_residual: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub status: Status,
    pub error: Option<String>,
    pub preset: Option<String>,
    pub config: Option<SolverConfig>,
    pub init: Option<InitialDatum>,
    pub critical_mass: Option<f64>,
    pub h_infinity: Option<f64>,
    pub decay_fit: Option<DecayFit>,
    pub condensate: Option<CondensateSummary>,
    pub monotonicity: Option<MonotonicityCheck>,
    pub profile_fits: Vec<ProfileFit>,
    pub run: Option<RunSummary>,
    pub convergence: Vec<ConvergenceReport>,
    pub minimizer: Option<MinimizerSpec>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            status: Status::Ok,
            error: None,
            preset: None,
            config: None,
            init: None,
            critical_mass: None,
            h_infinity: None,
            decay_fit: None,
            condensate: None,
            monotonicity: None,
            profile_fits: Vec::new(),
            run: None,
            convergence: Vec::new(),
            minimizer: None,
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("report.json"), json + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &["a", "b"], vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
