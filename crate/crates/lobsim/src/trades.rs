//! Trading times, their Type I/II and a-d classification, and proper trades.
//!
//! A trade is a time at which the center price sits on the best ask. It is
//! Type I when the ask has not gone down since the previous trade (ties
//! included) and Type II otherwise; the very first trade is Type II. The
//! subtype records whether other trades accumulate at it:
//!
//! | subtype | before | after |
//! |---------|--------|-------|
//! | a       | yes    | yes   |
//! | b       | yes    | no    |
//! | c       | no     | yes   |
//! | d       | no     | no    |
//!
//! On a grid "accumulates" means another detected trade within `eps_acc`.
//! A Type II trade never has trades accumulating from the left (the ask
//! would have to fall through a level it just traded at), so left
//! accumulation is only credited to Type I trades.

use std::cmp::Ordering;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::book::VolumeField;
use crate::error::{invalid, Error, Result};
use crate::sde_core::{bridge_hit_prob, Path, PathKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ask,
    Bid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Major {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Minor {
    A,
    B,
    C,
    D,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Ask => "ask",
            Side::Bid => "bid",
        }
    }
}

impl Major {
    pub fn as_str(self) -> &'static str {
        match self {
            Major::I => "I",
            Major::II => "II",
        }
    }
}

impl Minor {
    pub fn as_str(self) -> &'static str {
        match self {
            Minor::A => "a",
            Minor::B => "b",
            Minor::C => "c",
            Minor::D => "d",
        }
    }

    fn from_flags(before: bool, after: bool) -> Minor {
        match (before, after) {
            (true, true) => Minor::A,
            (true, false) => Minor::B,
            (false, true) => Minor::C,
            (false, false) => Minor::D,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub t: f64,
    pub level: f64,
    pub side: Side,
    pub major: Major,
    pub minor: Minor,
    pub proper: bool,
}

impl TradeEvent {
    /// The same event seen through `w -> -w` (ask becomes bid).
    pub fn mirrored(self) -> TradeEvent {
        let side = match self.side {
            Side::Ask => Side::Bid,
            Side::Bid => Side::Ask,
        };
        TradeEvent { level: -self.level, side, ..self }
    }

    pub fn is_proper_class(&self) -> bool {
        self.major == Major::I && matches!(self.minor, Minor::A | Minor::B)
    }
}

fn check_pair(w: &Path, ask: &Path) -> Result<()> {
    if !w.same_grid(ask) {
        return invalid(format!(
            "center price and ask are on different grids ({} vs {} points, dt {} vs {})",
            w.len(),
            ask.len(),
            w.dt,
            ask.dt
        ));
    }
    Ok(())
}

/// Grid times where `ask - w <= tol_levels * dx`.
pub fn detect_trading_times(w: &Path, ask: &Path, tol_levels: f64, dx: f64) -> Result<Vec<f64>> {
    check_pair(w, ask)?;
    if !(tol_levels >= 0.0) || !(dx > 0.0) {
        return invalid(format!("need tol >= 0 and dx > 0, got tol {tol_levels}, dx {dx}"));
    }
    let band = tol_levels * dx;
    Ok((0..w.len()).filter(|&k| ask.values[k] - w.values[k] <= band).map(|k| w.time(k)).collect())
}

/// Grid detection plus steps whose interior contains a touch of the ask.
///
/// Only steps inside odd phases `[tau_{2n-1}, tau_{2n})` are tested: in an
/// even phase the ask sits strictly above the path except at the phase end.
/// A step starting at a trade touches again inside (zero is regular for the
/// gap); otherwise the ask is flat over the step and a Brownian bridge
/// between the samples touches it with the usual crossing probability.
/// Interior touches are stamped at the right end of the step.
pub fn detect_trading_times_bridged(
    w: &Path,
    ask: &Path,
    tau_idx: &[usize],
    tol_levels: f64,
    dx: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    check_pair(w, ask)?;
    if !(tol_levels >= 0.0) || !(dx > 0.0) {
        return invalid(format!("need tol >= 0 and dx > 0, got tol {tol_levels}, dx {dx}"));
    }
    let band = tol_levels * dx;
    let (v, a) = (&w.values, &ask.values);
    let hit = |k: usize| a[k] - v[k] <= band;
    let mut out = Vec::new();
    if hit(0) {
        out.push(0.0);
    }
    let cutoff = 20.0 * w.dt;
    for k in 1..w.len() {
        if hit(k) {
            out.push(w.time(k));
            continue;
        }
        // phase of the step start k - 1
        let phase = tau_idx.partition_point(|&s| s < k) - 1;
        if phase % 2 == 0 {
            continue;
        }
        if hit(k - 1) {
            out.push(w.time(k));
            continue;
        }
        let level = a[k - 1];
        if (level - v[k - 1]) * (level - v[k]) >= cutoff {
            continue;
        }
        if rng.gen::<f64>() < bridge_hit_prob(v[k - 1], v[k], w.dt, level) {
            out.push(w.time(k));
        }
    }
    Ok(out)
}

fn ask_before(ask: &Path, k: usize) -> f64 {
    if k == 0 {
        ask.values[0]
    } else {
        ask.values[k].min(ask.values[k - 1])
    }
}

/// Classify ask-side trading times.
///
/// The ask "at" a trade is the ask just before it, `min(alpha_{k-1},
/// alpha_k)`, which is the level the path traded through; at the start of a
/// rising phase this is the old ask rather than the overshooting sample.
pub fn classify_trades(trading_times: &[f64], ask: &Path, eps_acc: f64) -> Result<Vec<TradeEvent>> {
    if trading_times.is_empty() {
        return Ok(Vec::new());
    }
    if ask.kind != PathKind::BestAsk {
        return invalid(format!("classification needs a best-ask path, got {:?}", ask.kind));
    }
    if !(eps_acc >= ask.dt * (1.0 - 1e-9)) {
        return invalid(format!("eps_acc = {eps_acc} below the grid step {}", ask.dt));
    }
    let mut idx = Vec::with_capacity(trading_times.len());
    for &t in trading_times {
        match ask.index_of(t) {
            Some(k) => idx.push(k),
            None => return invalid(format!("trading time {t} is not on the grid")),
        }
    }
    if idx.windows(2).any(|p| p[1] <= p[0]) {
        return invalid("trading times must be strictly increasing");
    }
    let slack = 1e-9 * ask.dt;
    let mut out: Vec<TradeEvent> = Vec::with_capacity(idx.len());
    for (i, &k) in idx.iter().enumerate() {
        let here = ask_before(ask, k);
        let major = if i == 0 {
            Major::II
        } else {
            let prev = ask.values[idx[i - 1]];
            if prev.partial_cmp(&here) == Some(Ordering::Greater) {
                Major::II
            } else {
                Major::I
            }
        };
        let before = i > 0 && trading_times[i] - trading_times[i - 1] <= eps_acc + slack;
        let after = i + 1 < idx.len() && trading_times[i + 1] - trading_times[i] <= eps_acc + slack;
        let minor = Minor::from_flags(before && major == Major::I, after);
        let level = if major == Major::II { here } else { ask.values[k] };
        out.push(TradeEvent { t: trading_times[i], level, side: Side::Ask, major, minor, proper: false });
    }
    Ok(out)
}

/// Grid index at which the path arrived at the band of the grid level
/// nearest `x` for the visit still ongoing at `k` (`k` if not visiting).
pub fn arrival_index(w: &Path, k: usize, x: f64, dx: f64) -> usize {
    let v = &w.values;
    let x = (x / dx).round() * dx;
    let mut s = k;
    while s > 0 && crate::book::segment_visits(v[s - 1], v[s], x, dx) {
        s -= 1;
    }
    s
}

/// Grid index at which the volume before trade `e` is read: one step before
/// the path arrived at the pre-trade ask `min(ask[k-1], ask[k])`.
fn read_index(w: &Path, ask: &Path, e: &TradeEvent, dx: f64) -> Option<(usize, f64)> {
    let k = w.index_of(e.t)?;
    if k == 0 {
        return None;
    }
    let pre = ask.values[k - 1].min(ask.values[k]);
    let s = arrival_index(w, k, pre, dx);
    Some((s.checked_sub(1)?, pre))
}

/// Volume at the pre-trade ask just before the path reached it.
///
/// On the grid a level reads zero for as long as the path stays within
/// `dx/2` of it, so the reading is taken one step before the current visit
/// began.
pub fn volume_before_trade(w: &Path, ask: &Path, field: &VolumeField, e: &TradeEvent) -> Option<f64> {
    let (s, pre) = read_index(w, ask, e, field.dx)?;
    let sl = field.slice_of(s)?;
    Some(field.volume_at(sl, field.level_index(pre)))
}

/// Grid indices at which [`proper_trades`] reads the volume field.
pub fn proper_snapshot_indices(w: &Path, ask: &Path, events: &[TradeEvent], dx: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = events.iter().filter_map(|e| Some(read_index(w, ask, e, dx)?.0)).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn ask_only(events: &[TradeEvent]) -> Result<()> {
    if events.iter().any(|e| e.side != Side::Ask) {
        return invalid("pass bid trades mirrored, with the mirrored path and its field");
    }
    Ok(())
}

/// Mark as proper the (I,a)/(I,b) trades that found positive volume just
/// before execution. `field` must hold the snapshots listed by
/// [`proper_snapshot_indices`].
pub fn proper_trades(w: &Path, ask: &Path, field: &VolumeField, events: &[TradeEvent]) -> Result<Vec<TradeEvent>> {
    ask_only(events)?;
    Ok(events
        .iter()
        .map(|e| {
            let filled = volume_before_trade(w, ask, field, e).is_some_and(|q| q > 0.0);
            TradeEvent { proper: filled && e.is_proper_class(), ..*e }
        })
        .collect())
}

/// Fraction of trades where "positive volume before execution" disagrees
/// with membership in (I,a) or (I,b).
pub fn proper_mismatch_rate(w: &Path, ask: &Path, field: &VolumeField, events: &[TradeEvent]) -> Result<f64> {
    ask_only(events)?;
    if events.is_empty() {
        return Ok(0.0);
    }
    let bad = events
        .iter()
        .filter(|e| volume_before_trade(w, ask, field, e).is_some_and(|q| q > 0.0) != e.is_proper_class())
        .count();
    Ok(bad as f64 / events.len() as f64)
}

/// The trade at the first grid hit of level `x > mu`, detected with bridge
/// thinning (draws from the path's auxiliary stream) and classified with
/// accumulation window `eps_acc`.
pub fn first_hit_trade_check(w: &Path, x: f64, mu: f64, eps_acc: f64) -> Result<TradeEvent> {
    if !(mu > 0.0) || !(x > mu) {
        return invalid(format!("level x = {x} must exceed mu = {mu} > 0"));
    }
    let k = w
        .values
        .iter()
        .position(|&v| v >= x)
        .ok_or_else(|| Error::NotFound(format!("level {x} not reached before horizon {}", w.horizon())))?;
    let tau = crate::book::compute_tau_indices(w, mu, 0.0)?;
    let ask = crate::book::best_ask_from_indices(w, &tau, mu)?;
    let mut rng = crate::sde_core::aux_rng(w.seed, w.path_index);
    let times = detect_trading_times_bridged(w, &ask, &tau, 0.0, w.dt.sqrt(), &mut rng)?;
    let events = classify_trades(&times, &ask, eps_acc)?;
    let t = w.time(k);
    events
        .into_iter()
        .find(|e| (e.t - t).abs() < 1e-9 * w.dt.max(1.0))
        .ok_or_else(|| Error::NumericFailure(format!("first hit of {x} at t = {t} is not a detected trade")))
}

/// `t,level,side,major,minor,proper` rows.
pub fn write_events_csv<W: Write>(out: W, events: &[TradeEvent]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["t", "level", "side", "major", "minor", "proper"])?;
    for e in events {
        wr.write_record([
            format!("{}", e.t),
            format!("{}", e.level),
            e.side.as_str().to_string(),
            e.major.as_str().to_string(),
            e.minor.as_str().to_string(),
            e.proper.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
