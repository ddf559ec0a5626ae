//! Step-by-step simulation of the gap `X = alpha - W` without storing paths.
//!
//! Two modes share one interface:
//!
//! * [`Detection::Grid`] runs the stopping-time recursion on the sampled
//!   center price and reports exactly what the stored-path pipeline in
//!   [`crate::book`] and [`crate::trades`] reports (with zero tolerance).
//! * [`Detection::Bridge`] is exact in law for the continuous process: over a
//!   step the center price is a Brownian bridge, and the two-sided Skorokhod
//!   map only needs the bridge maximum (for the push at 0) and minimum (for
//!   the push at `mu`). Those are drawn by inversion, lazily, only when the
//!   corresponding barrier is within reach.
//!
//! With `mu = inf` the upper barrier is absent and the gap is the drawup
//! `max W - W` (trades only at running maxima).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sde_core::{aux_rng, bridge_max, bridge_min, gaussian_step, increment_rng, n_steps};

/// Exponent cutoff below which a barrier crossing inside a step is treated
/// as impossible: `exp(-2 * 20) < 5e-18`.
const REACH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    Grid,
    Bridge,
}

/// What happened during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Grid index at the end of the step.
    pub k: usize,
    pub t: f64,
    pub w: f64,
    pub x: f64,
    /// The gap touched 0 (a trade).
    pub zero: bool,
    /// The gap touched `mu`.
    pub top: bool,
    /// Increase of the regulator at 0 during the step.
    pub dl0: f64,
    /// Largest gap value seen during the step (exact whenever it could
    /// exceed the probe passed to [`Stepper::step`]).
    pub x_max: f64,
}

#[derive(Debug, Clone)]
pub struct Stepper {
    mu: f64,
    dt: f64,
    sqrt_dt: f64,
    mode: Detection,
    k: usize,
    w: f64,
    x: f64,
    // grid mode: phase parity and running extreme since the last stopping time
    odd: bool,
    ext: f64,
    inc: ChaCha8Rng,
    aux: ChaCha8Rng,
}

impl Stepper {
    /// Start at `x0`. Grid mode follows the book construction, so it needs
    /// `x0 = mu` (or `x0 = 0` when `mu` is infinite).
    pub fn new(seed: u64, path_index: u64, dt: f64, mu: f64, x0: f64, mode: Detection) -> Result<Stepper> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("dt must be finite and > 0, got {dt}"));
        }
        if !(mu > 0.0) {
            return invalid(format!("mu must be > 0, got {mu}"));
        }
        if mu.is_finite() && mu < 10.0 * dt.sqrt() {
            return invalid(format!("mu = {mu} is within 10 step sizes of zero; refine dt"));
        }
        if !(x0 >= 0.0 && x0 <= mu && x0.is_finite()) {
            return invalid(format!("start x0 = {x0} must lie in [0, mu]"));
        }
        let odd = if mode == Detection::Grid {
            if mu.is_finite() && x0 != mu {
                return invalid("grid mode starts at the top of the band (x0 = mu)");
            }
            if !mu.is_finite() && x0 != 0.0 {
                return invalid("grid mode without an upper barrier starts at x0 = 0");
            }
            !mu.is_finite()
        } else {
            false
        };
        Ok(Stepper {
            mu,
            dt,
            sqrt_dt: dt.sqrt(),
            mode,
            k: 0,
            w: 0.0,
            x: x0,
            odd,
            ext: 0.0,
            inc: increment_rng(seed, path_index),
            aux: aux_rng(seed, path_index),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The state at time 0 as a pseudo-step.
    pub fn initial(&self) -> Step {
        Step {
            k: 0,
            t: 0.0,
            w: self.w,
            x: self.x,
            zero: self.x == 0.0,
            top: self.x == self.mu,
            dl0: 0.0,
            x_max: self.x,
        }
    }

    /// Advance one step. `h_probe` is the gap level whose exceedance inside
    /// the step matters to the caller (use `f64::INFINITY` for none).
    #[inline]
    pub fn step(&mut self, h_probe: f64) -> Step {
        let d = gaussian_step(&mut self.inc, self.sqrt_dt);
        self.k += 1;
        match self.mode {
            Detection::Grid => self.grid_step(d),
            Detection::Bridge => self.bridge_step(d, h_probe),
        }
    }

    fn grid_step(&mut self, d: f64) -> Step {
        let x_prev = self.x;
        let ask_prev = self.w + self.x;
        self.w += d;
        let w = self.w;
        let mut top = false;
        if self.odd {
            self.ext = self.ext.max(w);
            if self.ext - w >= self.mu {
                self.odd = false;
                self.ext = w;
                top = true;
            }
        } else {
            self.ext = self.ext.min(w);
            if w - self.ext >= self.mu {
                self.odd = true;
                self.ext = w;
            }
        }
        let ask = if self.odd { self.ext } else { self.ext + self.mu };
        self.x = ask - w;
        let zero = self.x <= 0.0;
        Step {
            k: self.k,
            t: self.k as f64 * self.dt,
            w,
            x: self.x,
            zero,
            top,
            dl0: (ask - ask_prev).max(0.0),
            x_max: x_prev.max(self.x),
        }
    }

    fn bridge_step(&mut self, d: f64, h_probe: f64) -> Step {
        let dt = self.dt;
        let xk = self.x;
        let free = xk - d;
        let mut x_new = free;
        let mut zero = false;
        let mut dl0 = 0.0;
        let mut top = false;
        let mut x_max = xk.max(free);
        // push at 0 happens iff the bridge of W-increments climbs to xk
        if free <= 0.0 || xk * free < REACH * dt {
            let m = bridge_max(0.0, d, dt, self.aux.gen::<f64>());
            if m >= xk {
                zero = true;
                dl0 = m - xk;
                x_new = m - d;
                x_max = xk.max(x_new);
            }
        }
        if !zero {
            let c = self.mu - xk;
            let top_near = c.is_finite() && (free >= self.mu || c * (self.mu - free) < REACH * dt);
            // a step ending above the probe still needs its interior peak
            let probe_near =
                h_probe.is_finite() && (h_probe <= x_max || (h_probe - xk) * (h_probe - free) < REACH * dt);
            if top_near || probe_near {
                let m = bridge_min(0.0, d, dt, self.aux.gen::<f64>());
                let peak = xk - m;
                if peak >= self.mu {
                    top = true;
                    x_new = free - (peak - self.mu);
                    x_max = self.mu;
                } else {
                    x_max = peak;
                }
            }
        }
        self.x = x_new.clamp(0.0, self.mu);
        self.w += d;
        Step { k: self.k, t: self.k as f64 * dt, w: self.w, x: self.x, zero, top, dl0, x_max }
    }
}

/// Something fed with every step of a simulation.
pub trait Observer {
    fn observe(&mut self, s: &Step);

    /// Gap level whose exceedance within the next step this observer needs
    /// resolved exactly.
    fn probe(&self) -> f64 {
        f64::INFINITY
    }

    fn finish(&mut self, _horizon: f64) {}
}

/// Regulator-based local time at 0 of the gap, normalised as an occupation
/// density (`2 x` the regulator).
#[derive(Debug, Clone, Default)]
pub struct LocalTime {
    pub value: f64,
}

impl Observer for LocalTime {
    fn observe(&mut self, s: &Step) {
        self.value += 2.0 * s.dl0;
    }
}

/// Lengths of successive blocks of `target` units of local time, counted
/// from the first trade. By the strong Markov property at that trade they
/// are i.i.d. copies of the inverse local time at `target`.
#[derive(Debug, Clone)]
pub struct InverseLocalTime {
    pub target: f64,
    acc: f64,
    start: Option<f64>,
    pub lengths: Vec<f64>,
}

impl InverseLocalTime {
    pub fn new(target: f64) -> InverseLocalTime {
        InverseLocalTime { target, acc: 0.0, start: None, lengths: Vec::new() }
    }
}

impl Observer for InverseLocalTime {
    fn observe(&mut self, s: &Step) {
        let Some(start) = self.start.as_mut() else {
            if s.zero {
                self.start = Some(s.t);
            }
            return;
        };
        self.acc += 2.0 * s.dl0;
        while self.acc >= self.target {
            self.lengths.push(s.t - *start);
            *start = s.t;
            self.acc -= self.target;
        }
    }
}

/// Grid times of trades (steps during which the gap touched 0).
#[derive(Debug, Clone, Default)]
pub struct TradeLog {
    pub times: Vec<f64>,
}

impl Observer for TradeLog {
    fn observe(&mut self, s: &Step) {
        if s.zero {
            self.times.push(s.t);
        }
    }
}

macro_rules! observer_tuple {
    ($($name:ident $idx:tt),+) => {
        impl<$($name: Observer),+> Observer for ($($name,)+) {
            fn observe(&mut self, s: &Step) {
                $(self.$idx.observe(s);)+
            }
            fn probe(&self) -> f64 {
                let mut p = f64::INFINITY;
                $(p = p.min(self.$idx.probe());)+
                p
            }
            fn finish(&mut self, horizon: f64) {
                $(self.$idx.finish(horizon);)+
            }
        }
    };
}

observer_tuple!(A 0);
observer_tuple!(A 0, B 1);
observer_tuple!(A 0, B 1, C 2);
observer_tuple!(A 0, B 1, C 2, D 3);

impl<O: Observer + ?Sized> Observer for &mut O {
    fn observe(&mut self, s: &Step) {
        (**self).observe(s)
    }
    fn probe(&self) -> f64 {
        (**self).probe()
    }
    fn finish(&mut self, horizon: f64) {
        (**self).finish(horizon)
    }
}

/// Run `stepper` to `horizon`, feeding `obs`. Returns the number of steps.
pub fn run<O: Observer>(stepper: &mut Stepper, horizon: f64, obs: &mut O) -> Result<usize> {
    let n = n_steps(stepper.dt, horizon)?;
    obs.observe(&stepper.initial());
    for _ in 0..n {
        let s = stepper.step(obs.probe());
        obs.observe(&s);
    }
    obs.finish(n as f64 * stepper.dt);
    Ok(n)
}
