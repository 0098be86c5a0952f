use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mixdense_cli::runner::{catalog_listing, run, run_suite, CliError};
use mixdense_cli::RunConfig;

/// Finite mixture approximation experiments.
///
/// Exit codes: 0 all checks passed, 1 a numeric check failed or a pipeline
/// did not converge, 2 usage or configuration error.
#[derive(Parser)]
#[command(name = "mixdense", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run config (TOML) and write its CSV/JSON report.
    Run { config: PathBuf },
    /// Execute every run in a suite file and write a combined summary.
    Suite { path: PathBuf },
    /// List the built-in densities and their class flags.
    Catalog,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => RunConfig::from_file(&config).and_then(|c| run(&c)).map(
            |outcome| {
                eprintln!(
                    "{}: {} rows, {} passed, {} failed -> {}",
                    outcome.report.mode.as_str(),
                    outcome.report.csv_rows.len(),
                    outcome.report.passes,
                    outcome.report.failures,
                    outcome.csv_path.display()
                );
                outcome.passed()
            },
        ),
        Command::Suite { path } => run_suite(&path).map(|outcome| {
            for r in &outcome.runs {
                eprintln!(
                    "{}: {} passed, {} failed ({} ms)",
                    r.name.as_deref().unwrap_or("?"),
                    r.report.passes,
                    r.report.failures,
                    r.wall_ms
                );
            }
            eprintln!(
                "suite: {} passed, {} failed -> {}",
                outcome.passes(),
                outcome.failures(),
                outcome.summary_csv.display()
            );
            outcome.passed()
        }),
        Command::Catalog => {
            print!("{}", catalog_listing());
            return ExitCode::SUCCESS;
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
