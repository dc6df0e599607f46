//! Run configuration: command-line flags layered over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "RDSENS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Ipa,
    Lr,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Payoff for the one-dimensional model: `Z(t)` or `Z(t)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalArg {
    #[default]
    Z,
    Z2,
}

/// Every option of a run. Flags and config-file keys share these names.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// rbm1d, atlas_rbm, atlas_sde, or the path of a model file
    #[arg(long)]
    pub model: Option<String>,
    /// Parameter vector, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Euler step size
    #[arg(long)]
    pub delta: Option<f64>,
    /// Time horizon
    #[arg(long = "t")]
    #[serde(alias = "horizon")]
    pub t: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: $RDSENS_THREADS, else 1)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Finite-difference step
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Central instead of forward differences
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub central: Option<bool>,
    /// Parameter coordinates to report (0-based, comma separated)
    #[arg(long, value_delimiter = ',')]
    pub coords: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub functional: Option<FunctionalArg>,
    /// Number of stocks in the Atlas models
    #[arg(long)]
    pub dim: Option<usize>,
    /// Volatility of the Atlas models
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Diversity exponent of the Atlas models
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the first trial's trajectory as CSV
    #[arg(long)]
    pub dump_path: Option<PathBuf>,
    /// Report zero elapsed time so output is reproducible byte for byte
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_timing: Option<bool>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        RunConfig { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl RunConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `self` win over those in `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        layer!(self, base; model, alpha, method, delta, t, trials, seed, threads, epsilon, central, coords,
            functional, dim, sigma, p, output, format, dump_path, no_timing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Rbm1d,
    AtlasRbm,
    AtlasSde,
    File(PathBuf),
}

impl ModelChoice {
    pub fn parse(s: &str) -> Self {
        match s {
            "rbm1d" => ModelChoice::Rbm1d,
            "atlas_rbm" => ModelChoice::AtlasRbm,
            "atlas_sde" => ModelChoice::AtlasSde,
            path => ModelChoice::File(PathBuf::from(path)),
        }
    }

    pub fn is_atlas(&self) -> bool {
        matches!(self, ModelChoice::AtlasRbm | ModelChoice::AtlasSde)
    }
}

/// A run configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelChoice,
    pub alpha: Option<Vec<f64>>,
    pub method: MethodArg,
    pub delta: f64,
    pub t: f64,
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,
    pub epsilon: f64,
    pub central: bool,
    pub coords: Option<Vec<usize>>,
    pub functional: Option<FunctionalArg>,
    pub dim: usize,
    pub sigma: f64,
    pub p: f64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub dump_path: Option<PathBuf>,
    pub no_timing: bool,
}

pub fn default_atlas_sigma() -> f64 {
    3e-4f64.sqrt()
}

fn env_threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        _ => Ok(None),
    }
}

impl Resolved {
    /// Layers `flags` over the file named by `config` (if any), then the
    /// environment, then built-in defaults.
    pub fn new(flags: RunConfig, config: Option<&Path>) -> CliResult<Self> {
        let file = match config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let c = flags.over(file);
        let threads = match c.threads {
            Some(t) => t,
            None => env_threads()?.unwrap_or(1),
        };
        Ok(Resolved {
            model: ModelChoice::parse(c.model.as_deref().unwrap_or("rbm1d")),
            alpha: c.alpha,
            method: c.method.unwrap_or(MethodArg::Ipa),
            delta: c.delta.unwrap_or(1e-3),
            t: c.t.unwrap_or(1.0),
            trials: c.trials.unwrap_or(10_000),
            seed: c.seed.unwrap_or(0),
            threads,
            epsilon: c.epsilon.unwrap_or(1e-4),
            central: c.central.unwrap_or(false),
            coords: c.coords,
            functional: c.functional,
            dim: c.dim.unwrap_or(3),
            sigma: c.sigma.unwrap_or_else(default_atlas_sigma),
            p: c.p.unwrap_or(0.5),
            output: c.output,
            format: c.format.unwrap_or_default(),
            dump_path: c.dump_path,
            no_timing: c.no_timing.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: RunConfig = serde_json::from_str(r#"{"model": "atlas_rbm", "delta": 0.5, "horizon": 10, "threads": 2}"#).unwrap();
        let flags = RunConfig { delta: Some(0.25), ..Default::default() };
        let c = flags.over(file);
        assert_eq!(c.model.as_deref(), Some("atlas_rbm"));
        assert_eq!(c.delta, Some(0.25));
        assert_eq!(c.t, Some(10.0));
        assert_eq!(c.threads, Some(2));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"dleta": 0.1}"#).is_err());
    }

    #[test]
    fn model_names() {
        assert_eq!(ModelChoice::parse("rbm1d"), ModelChoice::Rbm1d);
        assert_eq!(ModelChoice::parse("m.json"), ModelChoice::File("m.json".into()));
    }
}
