//! Brownian paths on a uniform grid, folding into `[0, mu]`, and Brownian
//! bridge crossing laws.
//!
//! Randomness comes from ChaCha8 keyed by `(seed, stream)`. Path `i` of a
//! run uses stream `2i` for its Gaussian increments and stream `2i + 1` for
//! the auxiliary uniforms that drive sub-grid bridge decisions, so the path
//! itself does not depend on whether bridge corrections are switched on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tag describing what a [`Path`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Brownian,
    Reflected,
    BestAsk,
    BestBid,
}

/// Samples at times `0, dt, 2dt, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
    /// Index of the path within its run (RNG stream provenance).
    pub path_index: u64,
    pub kind: PathKind,
}

impl Path {
    pub fn new(dt: f64, values: Vec<f64>, seed: u64, path_index: u64, kind: PathKind) -> Result<Path> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("dt must be finite and > 0, got {dt}"));
        }
        if values.len() < 2 {
            return invalid(format!("a path needs at least 2 samples, got {}", values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {k} is not finite"));
        }
        Ok(Path { dt, values, seed, path_index, kind })
    }

    /// A hand-built Brownian-kind path, for scenarios and tests.
    pub fn synthetic(dt: f64, values: Vec<f64>) -> Result<Path> {
        Path::new(dt, values, 0, 0, PathKind::Brownian)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid index of time `t`, if `t` lies on the grid (to 1e-6 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let r = t / self.dt;
        let k = r.round();
        if (r - k).abs() <= 1e-6 && k >= 0.0 && (k as usize) < self.values.len() {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn negated(&self) -> Path {
        Path { values: self.values.iter().map(|v| -v).collect(), ..self.clone() }
    }

    pub(crate) fn same_grid(&self, other: &Path) -> bool {
        self.values.len() == other.values.len() && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Displacement `mu` and starting point `x0` of the folded process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub mu: f64,
    pub x0: f64,
}

impl FoldSpec {
    pub fn new(mu: f64, x0: f64) -> Result<FoldSpec> {
        if !(mu > 0.0 && mu.is_finite()) {
            return invalid(format!("mu must be finite and > 0, got {mu}"));
        }
        if !(0.0..=mu).contains(&x0) {
            return invalid(format!("x0 must lie in [0, mu={mu}], got {x0}"));
        }
        Ok(FoldSpec { mu, x0 })
    }

    /// Start at the upper boundary, as `alpha - W` does at time zero.
    pub fn at_top(mu: f64) -> Result<FoldSpec> {
        FoldSpec::new(mu, mu)
    }
}

/// Generator for the increments of path `path_index` of a run.
pub fn increment_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path_index);
    rng
}

/// Generator for the auxiliary uniforms of path `path_index` of a run.
pub fn aux_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path_index + 1);
    rng
}

/// Number of grid steps covering `horizon`.
pub fn n_steps(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("dt must be finite and > 0, got {dt}"));
    }
    if !(horizon >= dt && horizon.is_finite()) {
        return invalid(format!("horizon must be finite and >= dt, got {horizon}"));
    }
    Ok((horizon / dt).round() as usize)
}

/// One Gaussian increment with variance `dt`.
#[inline]
pub fn gaussian_step(rng: &mut ChaCha8Rng, sqrt_dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sqrt_dt
}

/// Brownian path from 0 on `[0, horizon]`, path index 0 of the run `seed`.
pub fn gen_bm_path(seed: u64, dt: f64, horizon: f64) -> Result<Path> {
    gen_bm_path_indexed(seed, 0, dt, horizon)
}

/// Brownian path number `path_index` of the run `seed`.
pub fn gen_bm_path_indexed(seed: u64, path_index: u64, dt: f64, horizon: f64) -> Result<Path> {
    let n = n_steps(dt, horizon)?;
    let mut rng = increment_rng(seed, path_index);
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        w += gaussian_step(&mut rng, sd);
        values.push(w);
    }
    Path::new(dt, values, seed, path_index, PathKind::Brownian)
}

/// Even, `2 mu`-periodic triangle map with `tri(u) = |u|` on `[-mu, mu]`,
/// i.e. the distance from `u` to the lattice `2 mu Z`.
#[inline]
pub fn tri(u: f64, mu: f64) -> f64 {
    let p = 2.0 * mu;
    (u - p * (u / p).round()).abs().min(mu)
}

/// Fold `x0 + W` into `[0, mu]`: Brownian motion doubly reflected at 0 and `mu`.
pub fn fold_to_drbm(path: &Path, spec: &FoldSpec) -> Result<Path> {
    if path.kind != PathKind::Brownian {
        return invalid(format!("fold_to_drbm needs a brownian path, got {:?}", path.kind));
    }
    let spec = FoldSpec::new(spec.mu, spec.x0)?;
    let values = path.values.iter().map(|w| tri(spec.x0 + w, spec.mu)).collect();
    Path::new(path.dt, values, path.seed, path.path_index, PathKind::Reflected)
}

/// Indices where `x0 + W` lies within `tol` of the lattice `2 mu Z`.
pub fn lattice_zero_indices(path: &Path, spec: &FoldSpec, tol: f64) -> Vec<usize> {
    let p = 2.0 * spec.mu;
    path.values
        .iter()
        .enumerate()
        .filter(|(_, &w)| {
            let u = spec.x0 + w;
            (u - p * (u / p).round()).abs() <= tol
        })
        .map(|(k, _)| k)
        .collect()
}

/// Indices where a reflected path lies within `tol` of zero.
pub fn zero_indices(path: &Path, tol: f64) -> Vec<usize> {
    path.values.iter().enumerate().filter(|(_, &x)| x <= tol).map(|(k, _)| k).collect()
}

/// Probability that a Brownian bridge from `a` to `b` over time `dt` touches
/// `level`: `exp(-2 (a - level)(b - level) / dt)` when both endpoints lie on
/// the same side, 1 otherwise.
pub fn bridge_hit_prob(a: f64, b: f64, dt: f64, level: f64) -> f64 {
    let p = (a - level) * (b - level);
    if p <= 0.0 {
        1.0
    } else {
        (-2.0 * p / dt).exp().clamp(0.0, 1.0)
    }
}

/// Probability that a Brownian bridge reflected at `level` (values on one
/// side only) touches `level`, given its reflected endpoints `a`, `b`.
///
/// The unreflected path ends at `b` or at its mirror image; weighting the two
/// by their Gaussian densities gives `2q / (1 + q)` with `q` the plain bridge
/// probability.
pub fn reflected_bridge_hit_prob(a: f64, b: f64, dt: f64, level: f64) -> f64 {
    let q = bridge_hit_prob(a, b, dt, level);
    if q >= 1.0 {
        1.0
    } else {
        2.0 * q / (1.0 + q)
    }
}

/// Maximum of a Brownian bridge from `a` to `b` over time `dt`, by inversion
/// of `P(M >= m) = exp(-2 (m - a)(m - b) / dt)` at the uniform `u`.
#[inline]
pub fn bridge_max(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    let d = b - a;
    let u = u.max(f64::MIN_POSITIVE);
    0.5 * (a + b + (d * d - 2.0 * dt * u.ln()).sqrt())
}

/// Minimum of a Brownian bridge from `a` to `b`, mirror of [`bridge_max`].
#[inline]
pub fn bridge_min(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    -bridge_max(-a, -b, dt, u)
}

/// Discrete two-sided Skorokhod recursion `X_{k+1} = clamp(X_k - dW_k, 0, mu)`
/// started at `x0`; the grid analogue of `alpha - W`.
pub fn skorokhod_clamp(w: &Path, spec: &FoldSpec) -> Result<Path> {
    if w.kind != PathKind::Brownian {
        return invalid(format!("skorokhod_clamp needs a brownian path, got {:?}", w.kind));
    }
    let spec = FoldSpec::new(spec.mu, spec.x0)?;
    let mut x = spec.x0;
    let mut out = Vec::with_capacity(w.len());
    out.push(x);
    for k in 1..w.len() {
        x = (x - (w.values[k] - w.values[k - 1])).clamp(0.0, spec.mu);
        out.push(x);
    }
    Path::new(w.dt, out, w.seed, w.path_index, PathKind::Reflected)
}
