use lobsim::analytics;
use lobsim::book::{ask_gap, best_ask_from_indices, compute_tau_indices};
use lobsim::excursions::{
    conditional_tail_r, estimate_local_time_unit, extract_excursions, ExcursionOptions, ExcursionSample,
    ExcursionTracker,
};
use lobsim::sde_core::{gen_bm_path_indexed, Path};
use lobsim::stats::{nested_ratio, proportion_z};
use lobsim::stream::{run, Detection, Observer, Step, Stepper};
use lobsim::Error;

fn gap_path(seed: u64, p: u64, dt: f64, horizon: f64) -> Path {
    let w = gen_bm_path_indexed(seed, p, dt, horizon).unwrap();
    let tau = compute_tau_indices(&w, 1.0, 0.0).unwrap();
    let ask = best_ask_from_indices(&w, &tau, 1.0).unwrap();
    ask_gap(&w, &ask).unwrap()
}

fn stored_sample(seed: u64, paths: u64, dt: f64, horizon: f64) -> ExcursionSample {
    let opts = ExcursionOptions { bridge: true, ..ExcursionOptions::grid(1.0, dt) };
    let mut all = extract_excursions(&gap_path(seed, 0, dt, horizon), &opts).unwrap();
    for p in 1..paths {
        all.absorb(extract_excursions(&gap_path(seed, p, dt, horizon), &opts).unwrap());
    }
    all
}

#[test]
fn height_ratio_from_stored_paths() {
    let s = stored_sample(5, 10, 1e-4, 100.0);
    let est = nested_ratio(s.count_height(0.8), s.count_height(0.5));
    let z = proportion_z(&est, 0.5 / 0.8);
    assert!(z.abs() <= 3.0, "ratio {} over {} excursions, z {z}", est.value, est.n);
    for e in &s.excursions {
        assert!(e.h <= 1.0 + 1e-9 && e.r > 0.0);
        assert_eq!(e.hits_mu, e.h >= 1.0 - s.top_tol);
    }
}

#[test]
fn conditional_tail_at_half_height() {
    let dt = 1e-4;
    let sample = |p: u64| {
        let mut st = Stepper::new(9, p, dt, 1.0, 1.0, Detection::Bridge).unwrap();
        let mut tr = ExcursionTracker::new(1.0, dt, 9, p);
        run(&mut st, 100.0, &mut tr).unwrap();
        tr.into_sample()
    };
    let mut s = sample(0);
    for p in 1..30 {
        s.absorb(sample(p));
    }
    assert!(s.len() >= 100_000, "{} excursions", s.len());
    let (y, x) = (0.5, 0.2);
    let est = conditional_tail_r(&s, y, x).unwrap();
    let p0 = 2.0 * y * (analytics::tail_r(x, 1.0).unwrap().value - analytics::tail_r_below(x, y, 1.0).unwrap().value);
    let z = proportion_z(&est, p0);
    assert!(z.abs() <= 3.0, "{} vs {p0} (z {z})", est.value);
    assert_eq!(conditional_tail_r(&s, y, 0.0).unwrap().value, 1.0);
}

/// Downcrossings of `[0, eps]` by the gap, with the in-step maximum
/// resolved exactly at `eps`.
struct Downcrossings {
    eps: f64,
    armed: bool,
    count: u64,
}

impl Observer for Downcrossings {
    fn observe(&mut self, s: &Step) {
        if self.armed && s.zero {
            self.count += 1;
            self.armed = false;
        }
        if s.x_max >= self.eps {
            self.armed = true;
        }
    }

    fn probe(&self) -> f64 {
        if self.armed {
            f64::INFINITY
        } else {
            self.eps
        }
    }
}

#[test]
fn local_time_calibrations_agree() {
    let s = stored_sample(3, 20, 1e-4, 100.0);
    let quarter = estimate_local_time_unit(&s, 0.25).unwrap();
    let half = estimate_local_time_unit(&s, 0.5).unwrap();
    // the H >= 1/2 count is binomial within the H >= 1/4 count, so the
    // ratio has relative SE about 1 / sqrt(count(H >= 1/4))
    let ratio = quarter.value / half.value;
    let se = 1.0 / (quarter.n as f64).sqrt();
    assert!((ratio - 1.0).abs() <= 4.0 * se, "ratio {ratio}, se {se}");
}

#[test]
fn calibrated_local_time_matches_downcrossings() {
    let (dt, eps) = (1e-4, 0.05);
    let (mut calibrated, mut down) = (0.0, 0.0);
    for p in 0..20u64 {
        let mut st = Stepper::new(4, p, dt, 1.0, 1.0, Detection::Bridge).unwrap();
        let mut tr = ExcursionTracker::new(1.0, dt, 4, p);
        let mut dc = Downcrossings { eps, armed: false, count: 0 };
        run(&mut st, 100.0, &mut (&mut tr, &mut dc)).unwrap();
        calibrated += tr.into_sample().count_height(0.5) as f64;
        down += 2.0 * eps * dc.count as f64;
    }
    assert!((calibrated / down - 1.0).abs() < 0.05, "calibrated {calibrated} vs downcrossings {down}");
}

#[test]
fn too_few_excursions_is_reported() {
    let s = stored_sample(1, 1, 1e-3, 2.0);
    assert!(matches!(conditional_tail_r(&s, 1.0, 0.5), Err(Error::InsufficientData { .. })));
    assert!(matches!(estimate_local_time_unit(&s, 1.0), Err(Error::InsufficientData { .. })));
    assert!(conditional_tail_r(&s, 1.5, 0.5).is_err());
}
