//! Command-line experiment runner.
//!
//! `bdrne run <config.toml>` executes the configured study and writes
//! results.csv / results.json / plotdata into the output directory;
//! `bdrne verify <result-dir>` reloads an emitted results.json and
//! re-certifies every row's equilibrium gap.
//!
//! Exit codes: 0 full success, 2 any non-converged or non-certified row,
//! 1 configuration or I/O errors.

use bdrne::exp::{self, ExperimentConfig, ResultRow, StudyFilters};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bdrne", version, about = "Robust Nash equilibrium studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a configuration file.
    Run {
        /// Path to the TOML experiment configuration.
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solve only the named variants (repeatable), e.g. bdrne, bane,
        /// drne_empirical, empirical_ne, true_empirical, true_plugin.
        #[arg(long = "only-variant")]
        only_variant: Vec<String>,
        /// Solve only the given data sizes (repeatable).
        #[arg(long = "only-N", alias = "only-n")]
        only_n: Vec<u64>,
    },
    /// Re-certify the rows of an emitted result directory.
    Verify {
        /// Directory containing results.json.
        result_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(all_good) => {
            if all_good {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<bool, String> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            only_variant,
            only_n,
        } => run(config, out, only_variant, only_n),
        Command::Verify { result_dir } => verify(result_dir),
    }
}

fn run(
    config_path: PathBuf,
    out: Option<PathBuf>,
    only_variant: Vec<String>,
    only_n: Vec<u64>,
) -> Result<bool, String> {
    let config = exp::load_config(&config_path).map_err(|e| e.to_string())?;
    let filters = StudyFilters {
        variants: (!only_variant.is_empty()).then_some(only_variant),
        data_sizes: (!only_n.is_empty()).then_some(only_n),
    };
    let rows = exp::run_study_filtered(&config, &filters).map_err(|e| e.to_string())?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let written = exp::emit_results(&rows, &config, &out_dir).map_err(|e| e.to_string())?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    let mut all_converged = true;
    for row in &rows {
        if row.status != "converged" {
            eprintln!(
                "non-converged row: {} eps {} N {} -> {}",
                row.variant, row.eps, row.n, row.status
            );
            all_converged = false;
        }
    }
    println!("{} rows solved", rows.len());
    Ok(all_converged)
}

fn verify(result_dir: PathBuf) -> Result<bool, String> {
    let path = result_dir.join("results.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_value(manifest["config"].clone())
        .map_err(|e| format!("bad config manifest: {e}"))?;
    config.validate().map_err(|e| e.to_string())?;
    let rows: Vec<ResultRow> = serde_json::from_value(manifest["rows"].clone())
        .map_err(|e| format!("bad rows: {e}"))?;

    let certs = exp::recertify(&config, &rows).map_err(|e| e.to_string())?;
    let mut all_ok = true;
    for cert in &certs {
        let verdict = if cert.ok { "ok" } else { "FAIL" };
        println!(
            "row {:>3} {:<16} N {:>4}: {verdict} ({})",
            cert.index, cert.variant, cert.n, cert.note
        );
        all_ok &= cert.ok;
    }
    println!(
        "{} of {} rows certified",
        certs.iter().filter(|c| c.ok).count(),
        certs.len()
    );
    Ok(all_ok)
}
