//! Avalanches: maximal clusters of trades whose internal gaps are at most
//! `eps`, preceded and followed by a quiet period longer than `eps`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sde_core::{Path, PathKind};
use crate::stats::{Estimate, MeanVar};
use crate::stream::{Observer, Step};

/// Minimum number of complete avalanches for a Laplace estimate.
pub const MIN_RECORDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvalancheKind {
    Full,
    #[serde(rename = "typeI_only")]
    TypeIOnly,
}

impl AvalancheKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AvalancheKind::Full => "full",
            AvalancheKind::TypeIOnly => "typeI_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvalancheRecord {
    pub a: f64,
    pub b: f64,
    pub length: f64,
    pub n_trades: u64,
    pub kind: AvalancheKind,
    /// Less than `eps` of quiet time was observed after `b`.
    pub truncated: bool,
    /// First avalanche of the path.
    pub initial: bool,
}

/// Greedy online clustering of increasing trade times.
#[derive(Debug, Clone)]
pub struct Clusterer {
    eps: f64,
    slack: f64,
    kind: AvalancheKind,
    open: Option<(f64, f64, u64)>,
    last_t: f64,
    pub records: Vec<AvalancheRecord>,
}

impl Clusterer {
    pub fn new(eps: f64, kind: AvalancheKind) -> Clusterer {
        Clusterer { eps, slack: 1e-12 * eps, kind, open: None, last_t: f64::NEG_INFINITY, records: Vec::new() }
    }

    fn close(&mut self, truncated: bool) {
        if let Some((a, b, n)) = self.open.take() {
            let initial = self.records.is_empty();
            self.records.push(AvalancheRecord {
                a,
                b,
                length: b - a,
                n_trades: n,
                kind: self.kind,
                truncated,
                initial,
            });
        }
    }

    /// Add a trade at `t`; times must be strictly increasing.
    pub fn push(&mut self, t: f64) -> Result<()> {
        if !(t > self.last_t) {
            return invalid(format!("trade times must be strictly increasing ({} then {t})", self.last_t));
        }
        self.last_t = t;
        match &mut self.open {
            Some((_, b, n)) if t - *b <= self.eps + self.slack => {
                *b = t;
                *n += 1;
            }
            _ => {
                self.close(false);
                self.open = Some((t, t, 1));
            }
        }
        Ok(())
    }

    /// Close the last cluster at the end of observation.
    pub fn finish(&mut self, horizon: f64) {
        let truncated = self.open.is_some_and(|(_, b, _)| horizon - b <= self.eps + self.slack);
        self.close(truncated);
    }
}

/// Avalanches in a sorted list of trade times observed on `[0, horizon]`.
pub fn detect_avalanches(trading_times: &[f64], eps: f64, horizon: f64) -> Result<Vec<AvalancheRecord>> {
    detect_avalanches_as(trading_times, eps, horizon, AvalancheKind::Full)
}

pub fn detect_avalanches_as(
    trading_times: &[f64],
    eps: f64,
    horizon: f64,
    kind: AvalancheKind,
) -> Result<Vec<AvalancheRecord>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("eps must be finite and > 0, got {eps}"));
    }
    if trading_times.last().is_some_and(|&t| t > horizon) {
        return invalid("trade after the horizon");
    }
    let mut c = Clusterer::new(eps, kind);
    for &t in trading_times {
        c.push(t)?;
    }
    c.finish(horizon);
    Ok(c.records)
}

/// Streaming avalanche detection from a stepper's trade steps.
#[derive(Debug, Clone)]
pub struct AvalancheTracker {
    pub clusters: Clusterer,
}

impl AvalancheTracker {
    pub fn new(eps: f64, kind: AvalancheKind) -> AvalancheTracker {
        AvalancheTracker { clusters: Clusterer::new(eps, kind) }
    }

    pub fn into_records(self) -> Vec<AvalancheRecord> {
        self.clusters.records
    }
}

impl Observer for AvalancheTracker {
    fn observe(&mut self, s: &Step) {
        if s.zero {
            // step times are strictly increasing
            let _ = self.clusters.push(s.t);
        }
    }

    fn finish(&mut self, horizon: f64) {
        self.clusters.finish(horizon);
    }
}

/// Mean and standard error of `exp(-lambda * length)` over complete records.
pub fn mc_laplace_avalanche(records: &[AvalancheRecord], lambda: f64) -> Result<Estimate> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    let mut mv = MeanVar::new();
    for r in records.iter().filter(|r| !r.truncated) {
        mv.push((-lambda * r.length).exp());
    }
    if (mv.n as usize) < MIN_RECORDS {
        return Err(Error::InsufficientData { needed: MIN_RECORDS, got: mv.n as usize });
    }
    Ok(mv.into())
}

/// Grid times at which `w` is within `tol_levels * dx` of its running
/// maximum: trades if only Type I executions happened.
pub fn simulate_type_i_only_trades(w: &Path, tol_levels: f64, dx: f64) -> Result<Vec<f64>> {
    if w.kind != PathKind::Brownian {
        return invalid(format!("type-I-only trades need a brownian path, got {:?}", w.kind));
    }
    if !(tol_levels >= 0.0) || !(dx > 0.0) {
        return invalid(format!("need tol >= 0 and dx > 0, got tol {tol_levels}, dx {dx}"));
    }
    let band = tol_levels * dx;
    let mut max = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for (k, &v) in w.values.iter().enumerate() {
        max = max.max(v);
        if v >= max - band {
            out.push(w.time(k));
        }
    }
    Ok(out)
}

/// `a,b,length,n_trades,kind,truncated` rows.
pub fn write_avalanches_csv<W: Write>(out: W, records: &[AvalancheRecord]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["a", "b", "length", "n_trades", "kind", "truncated"])?;
    for r in records {
        wr.write_record([
            format!("{}", r.a),
            format!("{}", r.b),
            format!("{}", r.length),
            r.n_trades.to_string(),
            r.kind.as_str().to_string(),
            r.truncated.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
