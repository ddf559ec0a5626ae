use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use crate::stats::{proportion_z, Estimate};

/// Largest |z| a compared statistic may show before the run is rejected.
pub const Z_REJECT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Compared against a closed form and accepted.
    Ok,
    /// Compared and |z| > Z_REJECT.
    Rejected,
    /// Too few observations to estimate.
    InsufficientData,
    /// Reported for information only.
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Statistic {
    pub name: String,
    pub empirical: Option<f64>,
    pub se: Option<f64>,
    pub closed_form: Option<f64>,
    pub z: Option<f64>,
    pub n: u64,
    pub status: Status,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Statistic {
    pub fn compared(name: impl Into<String>, est: Estimate, closed_form: f64) -> Statistic {
        Statistic::with_z(name, est, closed_form, est.z_against(closed_form))
    }

    /// A binomial proportion, scored with the standard error under the null.
    pub fn compared_proportion(name: impl Into<String>, est: Estimate, p0: f64) -> Statistic {
        Statistic::with_z(name, est, p0, proportion_z(&est, p0))
    }

    fn with_z(name: impl Into<String>, est: Estimate, closed_form: f64, z: f64) -> Statistic {
        let status = if z.abs() <= Z_REJECT { Status::Ok } else { Status::Rejected };
        Statistic {
            name: name.into(),
            empirical: finite(est.value),
            se: finite(est.se),
            closed_form: finite(closed_form),
            // an infinite z (zero SE, different value) is reported as absent
            // but still rejects
            z: finite(z),
            n: est.n,
            status,
        }
    }

    pub fn diagnostic(name: impl Into<String>, value: f64, n: u64) -> Statistic {
        Statistic {
            name: name.into(),
            empirical: finite(value),
            se: None,
            closed_form: None,
            z: None,
            n,
            status: Status::Diagnostic,
        }
    }

    pub fn insufficient(name: impl Into<String>, n: u64) -> Statistic {
        Statistic {
            name: name.into(),
            empirical: None,
            se: None,
            closed_form: None,
            z: None,
            n,
            status: Status::InsufficientData,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RngProvenance {
    pub generator: &'static str,
    pub seed: u64,
    pub paths: u64,
    pub streams: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub statistics: Vec<Statistic>,
    pub rng: RngProvenance,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Seconds since the Unix epoch at the end of the run.
    pub timestamp: u64,
    pub threads: usize,
}

impl RunReport {
    pub fn rejected(&self) -> bool {
        self.statistics.iter().any(|s| s.status == Status::Rejected)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numeric { context: String, source: crate::Error },
    #[error("writing {path}: {reason}")]
    Output { path: String, reason: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numeric { source: crate::Error::InvalidArgument(_), .. } => 1,
            RunError::Numeric { .. } | RunError::Output { .. } => 2,
        }
    }
}

/// Attach context to a library error.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, RunError>;
}

impl<T> Context<T> for crate::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, RunError> {
        self.map_err(|source| RunError::Numeric { context: what(), source })
    }
}
