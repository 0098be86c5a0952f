//! Report containers and CSV assembly.
//!
//! Schemas are fixed per mode:
//!
//! - construction modes (`uniform`, `compact`, `l1`):
//!   `target,kernel,mode,epsilon,r,k,delta,m,remainder_weight,l1,l2,linf,kl,wall_ms,pass`
//! - `lp`: `step,mu,step_size,lp_error` step rows, then one
//!   `bound,<K>,<C_p>,<alpha>` footer row per schedule entry
//! - `classes`: `metric,value,reference,pass`
//! - suite aggregate: `name,mode,rows,passes,failures,wall_ms`
//!
//! All numeric cells use the shortest round-trip decimal form. `wall_ms`
//! is the only column that varies between identical invocations.

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::Mode;
use crate::runner::CliError;

pub const CONSTRUCTION_HEADER: &str =
    "target,kernel,mode,epsilon,r,k,delta,m,remainder_weight,l1,l2,linf,kl,wall_ms,pass";
pub const GREEDY_HEADER: &str = "step,mu,step_size,lp_error";
pub const CLASSES_HEADER: &str = "metric,value,reference,pass";
pub const SUITE_HEADER: &str = "name,mode,rows,passes,failures,wall_ms";

/// One run's report: CSV body plus a JSON summary.
#[derive(Debug, Clone)]
pub struct ApproxReport {
    pub mode: Mode,
    pub csv_header: String,
    pub csv_rows: Vec<String>,
    pub summary: Value,
    pub passes: usize,
    pub failures: usize,
}

impl ApproxReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn csv_text(&self) -> String {
        let mut out = String::with_capacity(64 * (self.csv_rows.len() + 1));
        out.push_str(&self.csv_header);
        out.push('\n');
        for row in &self.csv_rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// A finished run with its output locations.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: Option<String>,
    pub report: ApproxReport,
    pub wall_ms: u128,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// A finished suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub runs: Vec<RunOutcome>,
    pub summary_csv: PathBuf,
    pub summary_json: PathBuf,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(RunOutcome::passed)
    }

    pub fn passes(&self) -> usize {
        self.runs.iter().map(|r| r.report.passes).sum()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().map(|r| r.report.failures).sum()
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn json_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Formats an optional float cell (empty when absent).
pub(crate) fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
