//! Zero-excursions of the gap process and their length/height statistics.
//!
//! Per unit of local time at 0 the excursions form a Poisson process with
//! `n[H >= y] = 1/(2y)` for `y <= mu`. Ratios of counts from the same path
//! therefore estimate conditional laws under `n` without knowing the local
//! time, and `2y * #{H >= y}` estimates the local time itself.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sde_core::{aux_rng, bridge_max, reflected_bridge_hit_prob, Path, PathKind};
use crate::stats::{proportion, Estimate};
use crate::stream::{Observer, Step};

/// Minimum number of qualifying excursions for a conditional estimate.
pub const MIN_QUALIFYING: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub hits_mu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSample {
    pub excursions: Vec<Excursion>,
    /// The path ended inside an excursion, which is kept out of `excursions`.
    pub truncated_last: bool,
    /// Excursions shorter than two grid steps.
    pub discarded_short: u64,
    pub mu: f64,
    pub dt: f64,
    pub seed: u64,
    pub path_index: u64,
    /// Total observed time (summed over merged paths).
    pub span: f64,
    /// `H >= mu - top_tol` counts as reaching `mu`.
    pub top_tol: f64,
}

impl ExcursionSample {
    pub fn empty(mu: f64, dt: f64, seed: u64, path_index: u64, top_tol: f64) -> ExcursionSample {
        ExcursionSample {
            excursions: Vec::new(),
            truncated_last: false,
            discarded_short: 0,
            mu,
            dt,
            seed,
            path_index,
            span: 0.0,
            top_tol,
        }
    }

    /// Append another path's sample (associative; order is kept).
    pub fn absorb(&mut self, other: ExcursionSample) {
        self.excursions.extend(other.excursions);
        self.truncated_last |= other.truncated_last;
        self.discarded_short += other.discarded_short;
        self.span += other.span;
    }

    pub fn len(&self) -> usize {
        self.excursions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excursions.is_empty()
    }

    fn reaches(&self, e: &Excursion, y: f64) -> bool {
        if y >= self.mu - self.top_tol {
            e.hits_mu
        } else {
            e.h >= y
        }
    }

    pub fn count_height(&self, y: f64) -> u64 {
        self.excursions.iter().filter(|e| self.reaches(e, y)).count() as u64
    }

    /// `t_start,t_end,R,H,hits_mu` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["t_start", "t_end", "R", "H", "hits_mu"])?;
        for e in &self.excursions {
            wr.write_record([
                format!("{}", e.t_start),
                format!("{}", e.t_end),
                format!("{}", e.r),
                format!("{}", e.h),
                e.hits_mu.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionOptions {
    pub mu: f64,
    /// Zero band and top tolerance in grid levels.
    pub tol_levels: f64,
    pub dx: f64,
    /// Also split excursions where a Brownian bridge between two positive
    /// samples would have touched 0.
    pub bridge: bool,
}

impl ExcursionOptions {
    pub fn grid(mu: f64, dt: f64) -> ExcursionOptions {
        ExcursionOptions { mu, tol_levels: 0.0, dx: dt.sqrt(), bridge: false }
    }
}

#[derive(Debug, Clone)]
struct Builder {
    sample: ExcursionSample,
    start: Option<f64>,
    h: f64,
    top: bool,
}

impl Builder {
    fn close(&mut self, t_end: f64) {
        if let Some(t0) = self.start {
            let r = t_end - t0;
            if self.h > 0.0 {
                if r < 2.0 * self.sample.dt * (1.0 - 1e-9) {
                    self.sample.discarded_short += 1;
                } else {
                    let hits = self.top || self.h >= self.sample.mu - self.sample.top_tol;
                    let h = if self.top { self.sample.mu } else { self.h };
                    self.sample.excursions.push(Excursion { t_start: t0, t_end, r, h, hits_mu: hits });
                }
            }
        }
        self.start = Some(t_end);
        self.h = 0.0;
        self.top = false;
    }
}

/// Excursions of a reflected path away from 0.
///
/// A zero-visit is a sample within `tol_levels * dx` of 0; an excursion runs
/// between consecutive zero-visits with at least one sample above the band.
/// The stretch before the first zero-visit is not an excursion from 0 and is
/// ignored; the stretch after the last one is reported via `truncated_last`.
pub fn extract_excursions(x: &Path, opts: &ExcursionOptions) -> Result<ExcursionSample> {
    if x.kind != PathKind::Reflected {
        return invalid(format!("excursions need a reflected path, got {:?}", x.kind));
    }
    if !(opts.mu > 0.0 && opts.mu.is_finite()) || !(opts.dx > 0.0) || !(opts.tol_levels >= 0.0) {
        return invalid(format!(
            "need mu > 0, dx > 0, tol >= 0 (got mu {}, dx {}, tol {})",
            opts.mu, opts.dx, opts.tol_levels
        ));
    }
    // slack for rounding in `ask - w`, which can miss 0 or mu by an ulp
    let band = opts.tol_levels * opts.dx + 1e-12 * opts.mu;
    let v = &x.values;
    let dt = x.dt;
    let mut b = Builder {
        sample: ExcursionSample::empty(opts.mu, dt, x.seed, x.path_index, band),
        start: None,
        h: 0.0,
        top: false,
    };
    b.sample.span = x.horizon();
    let mut rng = aux_rng(x.seed, x.path_index);
    let reach = 20.0 * dt;
    for k in 0..v.len() {
        if v[k] <= band {
            b.close(x.time(k));
            continue;
        }
        if k > 0 && opts.bridge && v[k - 1] > band && b.start.is_some() {
            let (p, q) = (v[k - 1], v[k]);
            if p * q < reach && rng.gen::<f64>() < reflected_bridge_hit_prob(p, q, dt, 0.0) {
                b.close(x.time(k) - 0.5 * dt);
            } else {
                let (pt, qt) = (opts.mu - p, opts.mu - q);
                if pt * qt < reach && rng.gen::<f64>() < reflected_bridge_hit_prob(p, q, dt, opts.mu) {
                    b.top = true;
                } else if !b.top && b.h < opts.mu {
                    let hp = b.h.max(p).max(q);
                    if (hp - p) * (hp - q) < reach {
                        // bridge maximum conditioned to stay below mu
                        let q_mu = (-2.0 * pt * qt / dt).exp();
                        let u = q_mu + (1.0 - q_mu) * rng.gen::<f64>();
                        b.h = b.h.max(bridge_max(p, q, dt, u).min(opts.mu));
                    }
                }
            }
        }
        b.h = b.h.max(v[k]);
    }
    if b.start.is_some() && b.h > 0.0 {
        b.sample.truncated_last = true;
    }
    Ok(b.sample)
}

/// Streaming counterpart of [`extract_excursions`] fed by a
/// [`crate::stream::Stepper`]; trades are the steps where the gap touched 0.
#[derive(Debug, Clone)]
pub struct ExcursionTracker {
    b: Builder,
}

impl ExcursionTracker {
    pub fn new(mu: f64, dt: f64, seed: u64, path_index: u64) -> ExcursionTracker {
        let sample = ExcursionSample::empty(mu, dt, seed, path_index, 0.0);
        ExcursionTracker { b: Builder { sample, start: None, h: 0.0, top: false } }
    }

    pub fn into_sample(self) -> ExcursionSample {
        self.b.sample
    }

    pub fn sample(&self) -> &ExcursionSample {
        &self.b.sample
    }
}

impl Observer for ExcursionTracker {
    fn observe(&mut self, s: &Step) {
        if s.zero {
            self.b.close(s.t);
            self.b.h = s.x;
        } else if self.b.start.is_some() {
            self.b.h = self.b.h.max(s.x_max);
            self.b.top |= s.top;
        }
    }

    fn probe(&self) -> f64 {
        if self.b.start.is_some() && !self.b.top {
            self.b.h
        } else {
            f64::INFINITY
        }
    }

    fn finish(&mut self, horizon: f64) {
        self.b.sample.span = horizon;
        if self.b.start.is_some() && self.b.h > 0.0 {
            self.b.sample.truncated_last = true;
        }
    }
}

/// Among excursions with `H >= y`, the fraction with `R > x`; estimates
/// `n[R > x | H >= y]`.
pub fn conditional_tail_r(sample: &ExcursionSample, y: f64, x: f64) -> Result<Estimate> {
    if !(y > 0.0 && y <= sample.mu) {
        return invalid(format!("height threshold y = {y} must lie in (0, mu = {}]", sample.mu));
    }
    if !(x >= 0.0) {
        return invalid(format!("duration x = {x} must be >= 0"));
    }
    let sel: Vec<&Excursion> = sample.excursions.iter().filter(|e| sample.reaches(e, y)).collect();
    if sel.len() < MIN_QUALIFYING {
        return Err(Error::InsufficientData { needed: MIN_QUALIFYING, got: sel.len() });
    }
    if x == 0.0 {
        return Ok(Estimate { value: 1.0, se: 0.0, n: sel.len() as u64 });
    }
    let k = sel.iter().filter(|e| e.r > x).count() as u64;
    Ok(proportion(k, sel.len() as u64))
}

/// Local time at 0 over the sample's span, `2y * #{H >= y}`, with its
/// Poisson standard error.
pub fn estimate_local_time_unit(sample: &ExcursionSample, y: f64) -> Result<Estimate> {
    if !(y > 0.0 && y <= sample.mu) {
        return invalid(format!("calibration height y = {y} must lie in (0, mu = {}]", sample.mu));
    }
    let k = sample.count_height(y);
    if (k as usize) < MIN_QUALIFYING {
        return Err(Error::InsufficientData { needed: MIN_QUALIFYING, got: k as usize });
    }
    Ok(Estimate { value: 2.0 * y * k as f64, se: 2.0 * y * (k as f64).sqrt(), n: k })
}

/// Local time at 0 from occupation of `[0, eps)`: `(1/eps) * int 1{x < eps}`.
pub fn occupation_local_time(x: &Path, eps: f64) -> f64 {
    let n = x.values[1..].iter().filter(|&&v| v < eps).count();
    n as f64 * x.dt / eps
}

/// Local time at 0 from downcrossings: `2 (hi - lo) * #{passages from >= hi
/// down to <= lo}`.
pub fn downcrossing_local_time(x: &Path, lo: f64, hi: f64) -> f64 {
    let mut armed = false;
    let mut count = 0u64;
    for &v in &x.values {
        if v >= hi {
            armed = true;
        } else if armed && v <= lo {
            armed = false;
            count += 1;
        }
    }
    2.0 * (hi - lo) * count as f64
}
