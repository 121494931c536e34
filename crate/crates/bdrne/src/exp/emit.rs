//! Deterministic result emission: results.csv, results.json with the echoed
//! configuration manifest, and per-series plot data.
//!
//! Output bytes are a pure function of (config, rows): fixed column order,
//! six decimal places in the CSV, LF line endings, and canonical series
//! file names.

use crate::exp::config::ExperimentConfig;
use crate::exp::study::{ResultRow, StudyError};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    rows: &'a [ResultRow],
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), StudyError> {
    std::fs::write(path, contents.as_bytes()).map_err(io_err(path))
}

/// Writes the study outputs into `out_dir` and returns the created paths.
pub fn emit_results(
    rows: &[ResultRow],
    config: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, StudyError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    let formats = &config.output.formats;
    if formats.iter().any(|f| f == "csv") {
        let path = out_dir.join("results.csv");
        write_file(&path, &render_csv(rows, config.market.n))?;
        written.push(path);
    }
    if formats.iter().any(|f| f == "json") {
        let path = out_dir.join("results.json");
        let manifest = Manifest { config, rows };
        let mut text =
            serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible");
        text.push('\n');
        write_file(&path, &text)?;
        written.push(path);
    }
    if formats.iter().any(|f| f == "plotdata") {
        let plot_dir = out_dir.join("plotdata");
        std::fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;
        for (name, contents) in render_plotdata(rows, config) {
            let path = plot_dir.join(name);
            write_file(&path, &contents)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn render_csv(rows: &[ResultRow], n_firms: usize) -> String {
    let mut out = String::new();
    out.push_str("variant,eps,N");
    for j in 1..=n_firms {
        let _ = write!(out, ",c{j}");
    }
    for j in 1..=n_firms {
        let _ = write!(out, ",p{j}");
    }
    for j in 1..=n_firms {
        let _ = write!(out, ",v{j}");
    }
    out.push_str(",gap,iters,status,seed\n");
    for row in rows {
        let _ = write!(out, "{},{:.6},{}", row.variant, row.eps, row.n);
        for c in &row.costs {
            let _ = write!(out, ",{c:.6}");
        }
        for p in &row.prices {
            let _ = write!(out, ",{p:.6}");
        }
        for v in &row.values {
            let _ = write!(out, ",{v:.6}");
        }
        let _ = writeln!(
            out,
            ",{:.6},{},{},{}",
            row.gap, row.iterations, row.status, row.seed
        );
    }
    out
}

fn series_label(row: &ResultRow) -> String {
    match row.variant.as_str() {
        "bdrne" => format!("bdrne_eps{}", row.eps),
        "drne_empirical" => format!("drne_empirical_epshat{}", row.eps),
        other => other.to_string(),
    }
}

/// One series file per variant per firm, keyed by the sweep variable:
/// data-size rows plot price against N, cost rows against the swept cost.
fn render_plotdata(rows: &[ResultRow], config: &ExperimentConfig) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = Vec::new();
    let cost_firm = config.sweep.cost.as_ref().map(|c| c.firm).unwrap_or(1);

    let mut append = |name: String, header: &str, line: String| {
        if let Some((_, contents)) = files.iter_mut().find(|(n, _)| *n == name) {
            contents.push_str(&line);
        } else {
            files.push((name, format!("{header}\n{line}")));
        }
    };

    for row in rows {
        let label = series_label(row);
        match row.sweep.as_str() {
            "data_size" => {
                for (j, price) in row.prices.iter().enumerate() {
                    append(
                        format!("n_sweep__{label}__firm{}.csv", j + 1),
                        "N,price",
                        format!("{},{:.6}\n", row.n, price),
                    );
                }
            }
            "cost" => {
                for (j, price) in row.prices.iter().enumerate() {
                    append(
                        format!("cost_sweep__{label}__firm{}.csv", j + 1),
                        &format!("c{cost_firm},price"),
                        format!("{:.6},{:.6}\n", row.costs[cost_firm - 1], price),
                    );
                }
            }
            _ => {}
        }
    }
    files
}
