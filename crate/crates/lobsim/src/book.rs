//! Best ask/bid construction and the order-volume field.
//!
//! With `w_*(s,t)` and `w^*(s,t)` the running minimum and maximum of `W` on
//! `[s,t]`, the stopping times are `tau_0 = 0` and alternately
//!
//! ```text
//! Gamma_s = inf{t >= s : W_t = w_*(s,t) + mu}    (from even n)
//! Psi_s   = inf{t >= s : W_t = w^*(s,t) - mu}    (from odd n)
//! ```
//!
//! and on `[tau_n, tau_{n+1})` the best ask is `w_*(tau_n, t) + mu` for even
//! `n` and `w^*(tau_n, t)` for odd `n`. On the grid a condition is met at the
//! first sample where it holds up to `hit_tol` (default 0, i.e. the first
//! sample at or past the level). With that default the grid ask coincides
//! with the clamp recursion of [`crate::sde_core::skorokhod_clamp`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sde_core::{Path, PathKind};
use crate::trades::{self, TradeEvent};

/// Offset/weight atoms plus an optional sampled density of placements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub atoms: Vec<(f64, f64)>,
    pub density: Option<SampledDensity>,
}

/// Density `g` sampled at offsets `k * spacing`, `k = -K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDensity {
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl SampledDensity {
    fn half_width(&self) -> usize {
        self.values.len() / 2
    }

    /// Linear interpolation, zero outside the sampled support.
    pub fn eval(&self, offset: f64) -> f64 {
        let k = self.half_width() as f64;
        let r = offset / self.spacing + k;
        if r < 0.0 || r > 2.0 * k {
            return 0.0;
        }
        let i = r.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        let f = r - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn support(&self) -> f64 {
        self.half_width() as f64 * self.spacing
    }
}

impl PlacementSpec {
    /// Unit atoms at `-mu` and `+mu`.
    pub fn dirac(mu: f64) -> Result<PlacementSpec> {
        let p = PlacementSpec { atoms: vec![(-mu, 1.0), (mu, 1.0)], density: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for &(o, wgt) in &self.atoms {
            if o == 0.0 || !o.is_finite() {
                return invalid(format!("atom offset must be finite and non-zero, got {o}"));
            }
            if !(wgt > 0.0 && wgt.is_finite()) {
                return invalid(format!("atom weight must be finite and > 0, got {wgt}"));
            }
        }
        if let Some(d) = &self.density {
            if !(d.spacing > 0.0) || d.values.len() % 2 == 0 {
                return invalid("density needs spacing > 0 and an odd number of samples centred at 0");
            }
            if d.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return invalid("density samples must be finite and >= 0");
            }
            if d.values[d.half_width()] != 0.0 {
                return invalid("density must vanish at offset 0");
            }
        }
        if self.atoms.is_empty() && self.density.is_none() {
            return invalid("placement has neither atoms nor density");
        }
        Ok(())
    }

    /// Smallest positive distance at which orders are placed.
    pub fn mu(&self) -> f64 {
        let mut m = self.atoms.iter().map(|a| a.0.abs()).fold(f64::INFINITY, f64::min);
        if let Some(d) = &self.density {
            let k = d.half_width();
            for (i, v) in d.values.iter().enumerate() {
                if *v > 0.0 {
                    m = m.min((i as f64 - k as f64).abs() * d.spacing);
                }
            }
        }
        m
    }

    fn max_offset(&self) -> f64 {
        let a = self.atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
        a.max(self.density.as_ref().map_or(0.0, |d| d.support()))
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        invalid(format!("mu must be finite and > 0, got {mu}"))
    }
}

/// Grid indices `tau_0 = 0 < tau_1 < ...` with hit tolerance `hit_tol`
/// (price units).
pub fn compute_tau_indices(w: &Path, mu: f64, hit_tol: f64) -> Result<Vec<usize>> {
    if w.kind != PathKind::Brownian {
        return invalid(format!("tau sequence needs a brownian path, got {:?}", w.kind));
    }
    check_mu(mu)?;
    if !(0.0..mu).contains(&hit_tol) {
        return invalid(format!("hit tolerance must lie in [0, mu), got {hit_tol}"));
    }
    let v = &w.values;
    let mut taus = vec![0usize];
    let mut even = true;
    let mut ext = v[0];
    for (k, &x) in v.iter().enumerate().skip(1) {
        if even {
            ext = ext.min(x);
            if x - ext >= mu - hit_tol {
                taus.push(k);
                even = false;
                ext = x;
            }
        } else {
            ext = ext.max(x);
            if ext - x >= mu - hit_tol {
                taus.push(k);
                even = true;
                ext = x;
            }
        }
    }
    Ok(taus)
}

/// The stopping times `tau_n` (as times) up to the horizon.
pub fn compute_tau_sequence(w: &Path, mu: f64) -> Result<Vec<f64>> {
    Ok(compute_tau_indices(w, mu, 0.0)?.into_iter().map(|k| w.time(k)).collect())
}

fn tau_to_indices(w: &Path, tau: &[f64]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(tau.len());
    for &t in tau {
        match w.index_of(t) {
            Some(k) => out.push(k),
            None => return invalid(format!("tau value {t} is not on the path grid")),
        }
    }
    if out.first() != Some(&0) {
        return invalid("tau sequence must start with tau_0 = 0");
    }
    if out.windows(2).any(|p| p[1] <= p[0]) {
        return invalid("tau sequence must be strictly increasing");
    }
    Ok(out)
}

/// Best ask from the tau grid indices.
pub fn best_ask_from_indices(w: &Path, tau: &[usize], mu: f64) -> Result<Path> {
    check_mu(mu)?;
    let v = &w.values;
    let mut ask = vec![0.0; v.len()];
    for (n, &start) in tau.iter().enumerate() {
        let end = tau.get(n + 1).copied().unwrap_or(v.len());
        let mut ext = v[start];
        for k in start..end {
            if n % 2 == 0 {
                ext = ext.min(v[k]);
                ask[k] = ext + mu;
            } else {
                ext = ext.max(v[k]);
                ask[k] = ext;
            }
        }
    }
    Path::new(w.dt, ask, w.seed, w.path_index, PathKind::BestAsk)
}

/// Best ask `alpha` of `w` given its tau sequence.
pub fn best_ask_path(w: &Path, tau: &[f64], mu: f64) -> Result<Path> {
    if w.kind != PathKind::Brownian {
        return invalid(format!("best ask needs a brownian path, got {:?}", w.kind));
    }
    let idx = tau_to_indices(w, tau)?;
    best_ask_from_indices(w, &idx, mu)
}

/// Best bid `beta(w) = -alpha(-w)`.
pub fn best_bid_path(w: &Path, mu: f64) -> Result<Path> {
    let neg = w.negated();
    let tau = compute_tau_indices(&neg, mu, 0.0)?;
    let a = best_ask_from_indices(&neg, &tau, mu)?;
    Path::new(w.dt, a.values.iter().map(|v| -v).collect(), w.seed, w.path_index, PathKind::BestBid)
}

/// `alpha - W` as a reflected-kind path.
pub fn ask_gap(w: &Path, ask: &Path) -> Result<Path> {
    if !w.same_grid(ask) {
        return invalid("ask and center price are on different grids");
    }
    let v = ask.values.iter().zip(&w.values).map(|(a, x)| a - x).collect();
    Path::new(w.dt, v, w.seed, w.path_index, PathKind::Reflected)
}

/// Stopping times, both sides of the book, and the classified trades.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeTimeline {
    pub tau: Vec<f64>,
    pub tau_idx: Vec<usize>,
    pub ask: Path,
    pub bid: Path,
    pub trades: Vec<TradeEvent>,
}

/// Knobs for [`TradeTimeline::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineOptions {
    pub mu: f64,
    /// Trade detection band in grid levels.
    pub tol_levels: f64,
    /// Price grid spacing.
    pub dx: f64,
    pub eps_acc: f64,
}

impl TimelineOptions {
    /// Defaults for a grid of step `dt`: `dx = sqrt(dt)`, `eps_acc = 10 dt`,
    /// exact zero detection.
    pub fn for_grid(mu: f64, dt: f64) -> TimelineOptions {
        TimelineOptions { mu, tol_levels: 0.0, dx: dt.sqrt(), eps_acc: 10.0 * dt }
    }
}

impl TradeTimeline {
    pub fn build(w: &Path, opts: &TimelineOptions) -> Result<TradeTimeline> {
        let tau_idx = compute_tau_indices(w, opts.mu, 0.0)?;
        let ask = best_ask_from_indices(w, &tau_idx, opts.mu)?;
        let bid = best_bid_path(w, opts.mu)?;
        let ask_times = trades::detect_trading_times(w, &ask, opts.tol_levels, opts.dx)?;
        let mut events = trades::classify_trades(&ask_times, &ask, opts.eps_acc)?;
        let neg = w.negated();
        let neg_ask = Path { values: bid.values.iter().map(|v| -v).collect(), kind: PathKind::BestAsk, ..bid.clone() };
        let bid_times = trades::detect_trading_times(&neg, &neg_ask, opts.tol_levels, opts.dx)?;
        let bid_events = trades::classify_trades(&bid_times, &neg_ask, opts.eps_acc)?;
        events.extend(bid_events.into_iter().map(TradeEvent::mirrored));
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.side.cmp(&b.side)));
        Ok(TradeTimeline { tau: tau_idx.iter().map(|&k| w.time(k)).collect(), tau_idx, ask, bid, trades: events })
    }

    /// `n,tau_n` rows.
    pub fn write_tau_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["n", "tau_n"])?;
        for (n, t) in self.tau.iter().enumerate() {
            wr.write_record([n.to_string(), format!("{t}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `t,ask,bid` rows, every `stride`-th grid point.
    pub fn write_quotes_csv<W: Write>(&self, out: W, stride: usize) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["t", "ask", "bid"])?;
        for k in (0..self.ask.len()).step_by(stride.max(1)) {
            wr.write_record([
                format!("{}", self.ask.time(k)),
                format!("{}", self.ask.values[k]),
                format!("{}", self.bid.values[k]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Range of level indices `j` whose band `(j dx - dx/2, j dx + dx/2)` meets
/// the segment between `a` and `b`.
fn visited_levels(a: f64, b: f64, dx: f64) -> (i64, i64) {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let jlo = (lo / dx - 0.5).floor() as i64 + 1;
    let jhi = (hi / dx + 0.5).ceil() as i64 - 1;
    (jlo, jhi)
}

pub(crate) fn segment_visits(a: f64, b: f64, x: f64, dx: f64) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    x > lo - 0.5 * dx && x < hi + 0.5 * dx
}

/// Last grid time `s <= t` at which `w` is within `dx/2` of `x`, where the
/// linear segment arriving at `s` counts (a continuous path cannot jump a
/// level between samples); 0 if there is none.
pub fn last_exit_time(w: &Path, t: f64, x: f64, dx: f64) -> Result<f64> {
    if !(dx > 0.0) {
        return invalid(format!("dx must be > 0, got {dx}"));
    }
    let Some(k) = w.index_of(t) else {
        return invalid(format!("time {t} is not on the path grid"));
    };
    let v = &w.values;
    for s in (1..=k).rev() {
        if segment_visits(v[s - 1], v[s], x, dx) {
            return Ok(w.time(s));
        }
    }
    Ok(0.0)
}

/// Sparse snapshots of the order volume `V(t, x)` on the level grid `j * dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeField {
    pub dt: f64,
    pub dx: f64,
    /// Grid indices of the snapshot times.
    pub times: Vec<usize>,
    /// Per snapshot: `(level index, volume)` for every level with positive volume.
    pub slices: Vec<Vec<(i64, f64)>>,
    pub placement: PlacementSpec,
}

impl VolumeField {
    pub fn level(&self, j: i64) -> f64 {
        j as f64 * self.dx
    }

    pub fn level_index(&self, x: f64) -> i64 {
        (x / self.dx).round() as i64
    }

    /// Volume at level index `j` in snapshot `s`.
    pub fn volume_at(&self, s: usize, j: i64) -> f64 {
        let row = &self.slices[s];
        match row.binary_search_by(|p| p.0.cmp(&j)) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    /// Snapshot position of grid index `k`, if recorded.
    pub fn slice_of(&self, k: usize) -> Option<usize> {
        self.times.binary_search(&k).ok()
    }

    /// Volume at grid time index `k` and price `x` (nearest level).
    pub fn volume(&self, k: usize, x: f64) -> Option<f64> {
        self.slice_of(k).map(|s| self.volume_at(s, self.level_index(x)))
    }

    /// Dense matrix over levels `jmin..=jmax` for snapshot `s`.
    pub fn dense_row(&self, s: usize, jmin: i64, jmax: i64) -> Vec<f64> {
        (jmin..=jmax).map(|j| self.volume_at(s, j)).collect()
    }

    /// `t,x,volume` rows, time-major, nonzero entries only.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["t", "x", "volume"])?;
        for (s, &k) in self.times.iter().enumerate() {
            for &(j, v) in &self.slices[s] {
                wr.write_record([format!("{}", k as f64 * self.dt), format!("{}", self.level(j)), format!("{v}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Volume field at every grid time.
pub fn volume_field(w: &Path, placement: &PlacementSpec, dx: f64) -> Result<VolumeField> {
    let all: Vec<usize> = (0..w.len()).collect();
    volume_field_at(w, placement, dx, &all)
}

/// Volume field at the grid indices `snapshots` (sorted, deduplicated).
///
/// Atoms contribute `weight * (L_t^{x-o} - L_sigma^{x-o})` with local time
/// estimated as occupation of a `dx` band divided by `dx`; the density part
/// adds `g(x - W_s) dt` for every `s` in `(sigma(t,x), t]`.
pub fn volume_field_at(w: &Path, placement: &PlacementSpec, dx: f64, snapshots: &[usize]) -> Result<VolumeField> {
    if !(dx > 0.0 && dx.is_finite()) {
        return invalid(format!("dx must be finite and > 0, got {dx}"));
    }
    placement.validate()?;
    if snapshots.windows(2).any(|p| p[1] <= p[0]) {
        return invalid("snapshot indices must be strictly increasing");
    }
    if snapshots.last().is_some_and(|&k| k >= w.len()) {
        return invalid("snapshot index beyond the path");
    }
    let v = &w.values;
    let (wmin, wmax) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let off = placement.max_offset();
    let jmin = ((wmin - off) / dx).floor() as i64 - 2;
    let jmax = ((wmax + off) / dx).ceil() as i64 + 2;
    let width = (jmax - jmin + 1) as usize;
    let idx = |j: i64| (j - jmin) as usize;

    let mut atom_occ: Vec<Vec<f64>> = vec![vec![0.0; width]; placement.atoms.len()];
    let mut dens_acc: Vec<f64> = if placement.density.is_some() { vec![0.0; width] } else { Vec::new() };
    let mut slices = Vec::with_capacity(snapshots.len());
    let mut next_snap = 0usize;

    for k in 0..v.len() {
        let x = v[k];
        if k > 0 {
            for (a, &(o, _)) in placement.atoms.iter().enumerate() {
                let j = ((x + o) / dx).round() as i64;
                atom_occ[a][idx(j)] += w.dt;
            }
            if let Some(d) = &placement.density {
                let s = d.support();
                let j0 = ((x - s) / dx).floor() as i64;
                let j1 = ((x + s) / dx).ceil() as i64;
                for j in j0.max(jmin)..=j1.min(jmax) {
                    dens_acc[idx(j)] += d.eval(j as f64 * dx - x) * w.dt;
                }
            }
        }
        let prev = if k > 0 { v[k - 1] } else { x };
        let (jl, jh) = visited_levels(prev, x, dx);
        for j in jl.max(jmin)..=jh.min(jmax) {
            for occ in atom_occ.iter_mut() {
                occ[idx(j)] = 0.0;
            }
            if !dens_acc.is_empty() {
                dens_acc[idx(j)] = 0.0;
            }
        }
        if next_snap < snapshots.len() && snapshots[next_snap] == k {
            let mut row = Vec::new();
            for j in jmin..=jmax {
                let mut vol = 0.0;
                for (a, &(_, wgt)) in placement.atoms.iter().enumerate() {
                    vol += wgt * atom_occ[a][idx(j)] / dx;
                }
                if !dens_acc.is_empty() {
                    vol += dens_acc[idx(j)];
                }
                if vol > 0.0 {
                    row.push((j, vol));
                }
            }
            slices.push(row);
            next_snap += 1;
        }
    }
    Ok(VolumeField { dt: w.dt, dx, times: snapshots.to_vec(), slices, placement: placement.clone() })
}
