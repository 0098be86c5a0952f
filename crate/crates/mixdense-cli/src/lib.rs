//! Batch harness: configured runs of the construction/greedy pipelines
//! over the built-in catalog, CSV/JSON reports, and suite aggregation.
//!
//! Every run is driven by a config file on disk (no flags-only interface),
//! so results are reproducible from artifacts. Identical configs and seeds
//! produce identical numeric cells; only the `wall_ms` column varies
//! between invocations.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{Mode, RunConfig, SuiteConfig};
pub use report::{ApproxReport, RunOutcome, SuiteOutcome};
pub use runner::{run, run_suite, CliError};
