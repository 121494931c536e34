//! Experiment configuration: a strict TOML schema with explicit seeds.
//!
//! Unknown fields are rejected by name, and seeds are never defaulted — a
//! study without explicit entropy sources is a configuration error. Solver
//! tolerances default to the library-wide values and the resolved
//! configuration (defaults applied) is echoed into the output manifest.

use crate::mnl::DEFAULT_ANCHOR_QUANTILES;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config at {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MarketBlock {
    pub n: usize,
    pub characteristics: Vec<f64>,
    pub costs: Vec<f64>,
    #[serde(default = "default_true")]
    pub outside_option: bool,
    /// (low β quantile, high α quantile) for the concavity anchors.
    #[serde(default = "default_anchor_quantiles")]
    pub anchor_quantiles: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruthBlock {
    /// Known Gamma likelihood shape.
    pub shape: f64,
    /// True rate parameters per firm, one (θ_β, θ_α) row each.
    pub theta_star: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    /// Gamma shape hyperparameters a0, per firm per dimension.
    pub a0: Vec<Vec<f64>>,
    /// Gamma rate hyperparameters b0, per firm per dimension.
    pub b0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostSweepBlock {
    /// 1-based firm whose cost varies.
    pub firm: usize,
    pub values: Vec<f64>,
    /// Data size the cost sweep is solved at.
    pub data_size: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub eps: Vec<f64>,
    pub data_sizes: Vec<u64>,
    pub eps_hat: Vec<f64>,
    #[serde(default)]
    pub cost: Option<CostSweepBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub n_theta: usize,
    pub n_xi: usize,
    /// Squared-step-norm stopping tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Certification tolerance on the aggregate gap.
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    /// Sample size of the large-sample empirical reference equilibrium.
    #[serde(default = "default_true_reference_n")]
    pub true_reference_n: u64,
    /// ξ-cloud size of the plug-in-truth reference equilibrium.
    #[serde(default = "default_true_reference_n_xi")]
    pub true_reference_n_xi: usize,
    #[serde(default = "default_replications")]
    pub replications: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    pub data: u64,
    pub scenario: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketBlock,
    pub truth: TruthBlock,
    pub prior: PriorBlock,
    pub sweep: SweepBlock,
    pub solver: SolverBlock,
    pub seeds: SeedsBlock,
    pub output: OutputBlock,
}

fn default_true() -> bool {
    true
}
fn default_anchor_quantiles() -> (f64, f64) {
    DEFAULT_ANCHOR_QUANTILES
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    200
}
fn default_gap_tol() -> f64 {
    1e-4
}
fn default_true_reference_n() -> u64 {
    200
}
fn default_true_reference_n_xi() -> usize {
    20_000
}
fn default_replications() -> u64 {
    1
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into(), "plotdata".into()]
}

/// Loads and fully validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.market.n;
        if n == 0 {
            return Err(invalid("market.n", "must be at least 1"));
        }
        if self.market.characteristics.len() != n {
            return Err(invalid(
                "market.characteristics",
                format!("expected {n} entries"),
            ));
        }
        if self.market.costs.len() != n {
            return Err(invalid("market.costs", format!("expected {n} entries")));
        }
        if self.market.costs.iter().any(|c| *c <= 0.0 || !c.is_finite()) {
            return Err(invalid("market.costs", "entries must be positive"));
        }
        if self.market.characteristics.iter().any(|x| *x < 0.0) {
            return Err(invalid(
                "market.characteristics",
                "entries must be nonnegative",
            ));
        }
        let (qlo, qhi) = self.market.anchor_quantiles;
        let quantiles_ok = 0.0 < qlo && qlo < 1.0 && 0.0 < qhi && qhi < 1.0;
        if !quantiles_ok {
            return Err(invalid(
                "market.anchor_quantiles",
                "levels must lie strictly inside (0, 1)",
            ));
        }

        if self.truth.shape <= 0.0 || !self.truth.shape.is_finite() {
            return Err(invalid("truth.shape", "must be positive"));
        }
        if self.truth.theta_star.len() != n {
            return Err(invalid("truth.theta_star", format!("expected {n} rows")));
        }
        for (j, row) in self.truth.theta_star.iter().enumerate() {
            if row.len() != 2 || row.iter().any(|t| *t <= 0.0 || !t.is_finite()) {
                return Err(invalid(
                    &format!("truth.theta_star[{j}]"),
                    "expected a positive (θ_β, θ_α) pair",
                ));
            }
        }

        for (name, block) in [("prior.a0", &self.prior.a0), ("prior.b0", &self.prior.b0)] {
            if block.len() != n {
                return Err(invalid(name, format!("expected {n} rows")));
            }
            for (j, row) in block.iter().enumerate() {
                if row.len() != 2 || row.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                    return Err(invalid(
                        &format!("{name}[{j}]"),
                        "expected a positive pair, one entry per ξ dimension",
                    ));
                }
            }
        }

        if self.sweep.eps.is_empty() {
            return Err(invalid("sweep.eps", "must be nonempty"));
        }
        if self.sweep.eps.iter().any(|e| *e < 0.0) {
            return Err(invalid("sweep.eps", "radii must be nonnegative"));
        }
        if self.sweep.data_sizes.is_empty() {
            return Err(invalid("sweep.data_sizes", "must be nonempty"));
        }
        if self.sweep.data_sizes.contains(&0) {
            return Err(invalid("sweep.data_sizes", "sizes must be at least 1"));
        }
        if self.sweep.eps_hat.is_empty() {
            return Err(invalid("sweep.eps_hat", "must be nonempty"));
        }
        if self.sweep.eps_hat.iter().any(|e| *e < 0.0) {
            return Err(invalid("sweep.eps_hat", "radii must be nonnegative"));
        }
        if let Some(cost) = &self.sweep.cost {
            if cost.firm == 0 || cost.firm > n {
                return Err(invalid("sweep.cost.firm", format!("must be in 1..={n}")));
            }
            if cost.values.is_empty() {
                return Err(invalid("sweep.cost.values", "must be nonempty"));
            }
            if cost.values.iter().any(|c| *c <= 0.0 || !c.is_finite()) {
                return Err(invalid("sweep.cost.values", "costs must be positive"));
            }
            if cost.data_size == 0 {
                return Err(invalid("sweep.cost.data_size", "must be at least 1"));
            }
        }

        if self.solver.n_theta == 0 {
            return Err(invalid("solver.n_theta", "must be at least 1"));
        }
        if self.solver.n_xi == 0 {
            return Err(invalid("solver.n_xi", "must be at least 1"));
        }
        if self.solver.tol <= 0.0 || self.solver.tol.is_nan() {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be at least 1"));
        }
        if self.solver.gap_tol <= 0.0 || self.solver.gap_tol.is_nan() {
            return Err(invalid("solver.gap_tol", "must be positive"));
        }
        if self.solver.true_reference_n == 0 {
            return Err(invalid("solver.true_reference_n", "must be at least 1"));
        }
        if self.solver.true_reference_n_xi == 0 {
            return Err(invalid("solver.true_reference_n_xi", "must be at least 1"));
        }
        if self.solver.replications == 0 {
            return Err(invalid("solver.replications", "must be at least 1"));
        }

        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "must be nonempty"));
        }
        for format in &self.output.formats {
            if !matches!(format.as_str(), "csv" | "json" | "plotdata") {
                return Err(invalid(
                    "output.formats",
                    format!("unknown format {format:?}; expected csv, json or plotdata"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_path() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml")
    }

    #[test]
    fn bundled_table1_config_loads() {
        let config = load_config(table1_path()).unwrap();
        assert_eq!(config.market.n, 2);
        assert_eq!(config.market.characteristics, vec![6.0, 4.0]);
        assert_eq!(config.market.costs, vec![6.0, 5.0]);
        assert_eq!(
            config.truth.theta_star,
            vec![vec![50.0, 40.0], vec![50.0, 40.0]]
        );
        assert_eq!(config.sweep.eps, vec![0.01, 0.1, 0.5]);
        assert_eq!(config.sweep.data_sizes, vec![5, 20, 50]);
        assert!(config.market.outside_option);
        assert_eq!(config.solver.replications, 1);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = std::fs::read_to_string(table1_path()).unwrap();
        let broken = text.replace("data = ", "# data = ");
        let err = parse_config(&broken).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("data"), "unhelpful error: {message}");
    }

    #[test]
    fn unknown_fields_are_named() {
        let text = std::fs::read_to_string(table1_path()).unwrap();
        let broken = text.replace("[solver]", "[solver]\nwarp_speed = 9\n");
        let err = parse_config(&broken).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("warp_speed"), "unhelpful error: {message}");
    }

    #[test]
    fn validation_reports_field_paths() {
        let text = std::fs::read_to_string(table1_path()).unwrap();
        let broken = text.replace("costs = [6.0, 5.0]", "costs = [6.0, -5.0]");
        let err = parse_config(&broken).unwrap_err();
        assert!(err.to_string().contains("market.costs"));

        let broken = text.replace("eps = [0.01, 0.1, 0.5]", "eps = []");
        let err = parse_config(&broken).unwrap_err();
        assert!(err.to_string().contains("sweep.eps"));
    }
}
