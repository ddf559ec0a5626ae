//! Experiment configuration: a flat `key = value` file layered under
//! command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::Quantity;
use crate::stream::Detection;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{key}` (known keys: {})", KEYS.join(", "))]
    UnknownKey { key: String },
    #[error("key `{key}` given twice in the config file")]
    Duplicate { key: String },
    #[error("key `{key}`: cannot parse {value:?}: {reason}")]
    Malformed { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Analytics,
    Avalanche,
    Compare,
    #[serde(rename = "typeI_compare")]
    TypeICompare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Analytics => "analytics",
            Mode::Avalanche => "avalanche",
            Mode::Compare => "compare",
            Mode::TypeICompare => "typeI_compare",
        }
    }

    fn simulates(self) -> bool {
        self != Mode::Analytics
    }

    fn uses_avalanches(self) -> bool {
        matches!(self, Mode::Avalanche | Mode::TypeICompare)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "analytics" | "analytics-table" => Ok(Mode::Analytics),
            "avalanche" => Ok(Mode::Avalanche),
            "compare" => Ok(Mode::Compare),
            "typeI_compare" | "typeI-compare" => Ok(Mode::TypeICompare),
            _ => Err("expected simulate, analytics, avalanche, compare or typeI_compare".into()),
        }
    }
}

/// Everything a run needs. Optional fields resolve to defaults derived from
/// the others (see the accessors).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub mu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub eps: f64,
    pub lambda_grid: Vec<f64>,
    /// Durations for tail tables and comparisons.
    pub x_grid: Vec<f64>,
    /// Height threshold for the below-`y` tables; `mu / 2` when unset.
    pub y: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub tol_levels: f64,
    /// `10 dt` when unset.
    pub eps_acc: Option<f64>,
    /// `sqrt(dt)` when unset.
    pub dx: Option<f64>,
    pub detection: Detection,
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    /// Analytic quantities to tabulate; empty means all.
    pub quantities: Vec<String>,
    pub output_dir: PathBuf,
}

pub const KEYS: [&str; 17] = [
    "mode",
    "mu",
    "dt",
    "horizon",
    "eps",
    "lambda_grid",
    "x_grid",
    "y",
    "n_paths",
    "seed",
    "tol_levels",
    "eps_acc",
    "dx",
    "detection",
    "threads",
    "quantities",
    "output_dir",
];

/// Environment variable overriding `output_dir` (below explicit flags).
pub const OUTPUT_DIR_ENV: &str = "LOBSIM_OUTPUT_DIR";

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Simulate,
            mu: 1.0,
            dt: 1e-4,
            horizon: 100.0,
            eps: 0.05,
            lambda_grid: vec![0.1, 1.0, 10.0],
            x_grid: vec![0.05, 0.2, 0.5, 1.0, 2.0],
            y: None,
            n_paths: 10,
            seed: 1,
            tol_levels: 0.0,
            eps_acc: None,
            dx: None,
            detection: Detection::Bridge,
            threads: 0,
            quantities: Vec::new(),
            output_dir: PathBuf::from("lobsim_out"),
        }
    }
}

fn malformed(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Malformed { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| malformed(key, value, e))
}

fn opt_num(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

impl ExperimentConfig {
    pub fn eps_acc(&self) -> f64 {
        self.eps_acc.unwrap_or(10.0 * self.dt)
    }

    pub fn dx(&self) -> f64 {
        self.dx.unwrap_or(self.dt.sqrt())
    }

    pub fn y(&self) -> f64 {
        self.y.unwrap_or(0.5 * self.mu)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim().trim_matches('"');
        match key {
            "mode" => self.mode = value.parse().map_err(|e: String| malformed(key, value, e))?,
            "mu" => self.mu = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "lambda_grid" => self.lambda_grid = list(key, value)?,
            "x_grid" => self.x_grid = list(key, value)?,
            "y" => self.y = opt_num(key, value)?,
            "n_paths" => self.n_paths = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "tol_levels" => self.tol_levels = num(key, value)?,
            "eps_acc" => self.eps_acc = opt_num(key, value)?,
            "dx" => self.dx = opt_num(key, value)?,
            "detection" => {
                self.detection = match value {
                    "bridge" => Detection::Bridge,
                    "grid" => Detection::Grid,
                    _ => return Err(malformed(key, value, "expected bridge or grid")),
                }
            }
            "threads" => self.threads = if value == "auto" { 0 } else { num(key, value)? },
            "quantities" => {
                self.quantities = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Apply the contents of a config file.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(ConfigError::Duplicate { key: k.into() });
            }
            seen.push(k.to_string());
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let pos = |name: &str, v: f64| -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        pos("mu", self.mu)?;
        pos("dt", self.dt)?;
        pos("horizon", self.horizon)?;
        pos("eps", self.eps)?;
        pos("eps_acc", self.eps_acc())?;
        pos("dx", self.dx())?;
        if !(self.tol_levels >= 0.0 && self.tol_levels.is_finite()) {
            return bad(format!("tol_levels must be finite and >= 0, got {}", self.tol_levels));
        }
        let y = self.y();
        if !(y > 0.0 && y <= self.mu) {
            return bad(format!("y must lie in (0, mu = {}], got {y}", self.mu));
        }
        if self.lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad(format!("lambda_grid entries must be finite and > 0, got {:?}", self.lambda_grid));
        }
        if self.x_grid.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return bad(format!("x_grid entries must be finite and >= 0, got {:?}", self.x_grid));
        }
        if self.mode != Mode::Simulate && self.lambda_grid.is_empty() {
            return bad(format!("lambda_grid must not be empty in {} mode", self.mode));
        }
        for q in &self.quantities {
            if Quantity::parse(q).is_none() {
                let names: Vec<&str> = Quantity::ALL.iter().map(|q| q.name()).collect();
                return bad(format!("unknown quantity `{q}` (known: {})", names.join(", ")));
            }
        }
        if self.mode.simulates() {
            if self.n_paths == 0 {
                return bad(format!("n_paths must be >= 1 in {} mode", self.mode));
            }
            if self.horizon < self.dt {
                return bad(format!("horizon {} is shorter than one step dt = {}", self.horizon, self.dt));
            }
            if self.eps_acc() < self.dt {
                return bad(format!("eps_acc = {} is below the grid step dt = {}", self.eps_acc(), self.dt));
            }
            if self.mode != Mode::TypeICompare && self.mu < 10.0 * self.dt.sqrt() {
                return bad(format!(
                    "mu = {} is within 10 step sizes sqrt(dt) = {}; refine dt",
                    self.mu,
                    self.dt.sqrt()
                ));
            }
        }
        if self.mode.uses_avalanches() && self.eps < 100.0 * self.dt {
            return bad(format!(
                "eps = {} must be at least 100 dt = {} for avalanche detection; refine dt or widen eps",
                self.eps,
                100.0 * self.dt
            ));
        }
        Ok(())
    }
}

/// Build a configuration for `mode`: defaults, then the file (if any), then
/// `flags` in order. The result is validated.
pub fn parse_config(
    mode: Mode,
    file: Option<&Path>,
    flags: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = file {
        let text = std::fs::read_to_string(p)
            .map_err(|e| ConfigError::Io { path: p.display().to_string(), reason: e.to_string() })?;
        cfg.apply_str(&text)?;
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    cfg.mode = mode;
    cfg.validate()?;
    Ok(cfg)
}
