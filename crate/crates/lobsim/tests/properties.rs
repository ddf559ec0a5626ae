use lobsim::analytics;
use lobsim::avalanche::{detect_avalanches, mc_laplace_avalanche};
use lobsim::book::{ask_gap, best_ask_from_indices, compute_tau_indices, TimelineOptions, TradeTimeline};
use lobsim::excursions::{extract_excursions, ExcursionOptions, ExcursionTracker};
use lobsim::sde_core::{
    bridge_hit_prob, fold_to_drbm, gen_bm_path, gen_bm_path_indexed, lattice_zero_indices, skorokhod_clamp, tri,
    zero_indices, FoldSpec, Path, PathKind,
};
use lobsim::stream::{run, Detection, Observer, Step, Stepper, TradeLog};
use lobsim::trades::{classify_trades, detect_trading_times, Major, Minor};
use proptest::prelude::*;

fn shifted(p: &Path, by: f64) -> Path {
    Path::new(p.dt, p.values.iter().map(|v| v + by).collect(), p.seed, p.path_index, PathKind::Brownian).unwrap()
}

#[derive(Default)]
struct Gaps(Vec<f64>);

impl Observer for Gaps {
    fn observe(&mut self, s: &Step) {
        self.0.push(s.x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fold_is_invariant_under_lattice_shifts(seed in 0u64..10_000, z in -3i32..=3, mu in 0.2f64..3.0) {
        let w = gen_bm_path(seed, 1e-3, 2.0).unwrap();
        let spec = FoldSpec::at_top(mu).unwrap();
        let a = fold_to_drbm(&w, &spec).unwrap();
        let b = fold_to_drbm(&shifted(&w, 2.0 * mu * z as f64), &spec).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + mu * z.abs() as f64));
            prop_assert!((0.0..=mu).contains(x));
        }
    }

    #[test]
    fn fold_zeros_are_lattice_visits(seed in 0u64..10_000, x0 in 0.0f64..=1.0, tol in 0.0f64..0.05) {
        let w = gen_bm_path(seed, 1e-3, 2.0).unwrap();
        let spec = FoldSpec::new(1.0, x0).unwrap();
        let folded = fold_to_drbm(&w, &spec).unwrap();
        prop_assert_eq!(zero_indices(&folded, tol), lattice_zero_indices(&w, &spec, tol));
    }

    #[test]
    fn tri_matches_reflection_formula(u in -20.0f64..20.0, mu in 0.1f64..5.0) {
        let v = tri(u, mu);
        prop_assert!((0.0..=mu).contains(&v));
        prop_assert!((v - tri(-u, mu)).abs() < 1e-12);
        prop_assert!((v - tri(u + 2.0 * mu, mu)).abs() < 1e-9);
    }

    #[test]
    fn bridge_hit_prob_is_symmetric_and_monotone(
        a in -1.0f64..1.0, b in -1.0f64..1.0, level in -1.0f64..1.0, dt in 1e-4f64..1.0, s in 1.0f64..3.0,
    ) {
        let p = bridge_hit_prob(a, b, dt, level);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, bridge_hit_prob(b, a, dt, level));
        // moving both endpoints away from the level can only lower the probability
        let q = bridge_hit_prob(level + s * (a - level), level + s * (b - level), dt, level);
        prop_assert!(q <= p + 1e-15);
    }

    #[test]
    fn gap_equals_clamp_recursion(seed in 0u64..10_000, mu in 0.3f64..2.0) {
        let dt = 1e-4;
        let w = gen_bm_path(seed, dt, 3.0).unwrap();
        let tau = compute_tau_indices(&w, mu, 0.0).unwrap();
        let ask = best_ask_from_indices(&w, &tau, mu).unwrap();
        let gap = ask_gap(&w, &ask).unwrap();
        let clamp = skorokhod_clamp(&w, &FoldSpec::at_top(mu).unwrap()).unwrap();
        for (g, c) in gap.values.iter().zip(&clamp.values) {
            prop_assert!((g - c).abs() <= 1e-9);
        }
        // tau alternates between the two edges of the band
        for (n, &k) in tau.iter().enumerate().skip(1) {
            let target = if n % 2 == 1 { 0.0 } else { mu };
            prop_assert!((gap.values[k] - target).abs() <= 1e-9);
        }
    }

    #[test]
    fn no_type_two_with_left_accumulation(seed in 0u64..10_000, eps_mult in 1.0f64..50.0) {
        let dt = 1e-4;
        let w = gen_bm_path(seed, dt, 3.0).unwrap();
        let tl = TradeTimeline::build(&w, &TimelineOptions { eps_acc: eps_mult * dt, ..TimelineOptions::for_grid(1.0, dt) })
            .unwrap();
        prop_assert!(!tl.trades.iter().any(|e| e.major == Major::II && matches!(e.minor, Minor::A | Minor::B)));
        prop_assert!(tl.trades.iter().all(|e| !e.proper || e.is_proper_class()));
    }

    #[test]
    fn stream_gap_stays_in_band(seed in 0u64..10_000, x0 in 0.0f64..=1.0) {
        let mut st = Stepper::new(seed, 0, 1e-4, 1.0, x0, Detection::Bridge).unwrap();
        let mut gaps = Gaps::default();
        run(&mut st, 2.0, &mut gaps).unwrap();
        prop_assert!(gaps.0.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn grid_stream_reproduces_stored_pipeline(seed in 0u64..10_000, path in 0u64..4, mu in 0.3f64..1.5) {
        let dt = 1e-4;
        let horizon = 5.0;
        let w = gen_bm_path_indexed(seed, path, dt, horizon).unwrap();
        let tau = compute_tau_indices(&w, mu, 0.0).unwrap();
        let ask = best_ask_from_indices(&w, &tau, mu).unwrap();
        let gap = ask_gap(&w, &ask).unwrap();
        let trades = detect_trading_times(&w, &ask, 0.0, dt.sqrt()).unwrap();
        let stored = extract_excursions(&gap, &ExcursionOptions::grid(mu, dt)).unwrap();

        let mut st = Stepper::new(seed, path, dt, mu, mu, Detection::Grid).unwrap();
        let mut log = TradeLog::default();
        let mut tr = ExcursionTracker::new(mu, dt, seed, path);
        let mut gaps = Gaps::default();
        run(&mut st, horizon, &mut (&mut log, &mut tr, &mut gaps)).unwrap();
        let streamed = tr.into_sample();

        // the initial state is reported too
        prop_assert_eq!(gaps.0.len(), gap.len());
        for (a, b) in gaps.0.iter().zip(&gap.values) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert_eq!(log.times.len(), trades.len());
        for (a, b) in log.times.iter().zip(&trades) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert_eq!(streamed.excursions.len(), stored.excursions.len());
        for (a, b) in streamed.excursions.iter().zip(&stored.excursions) {
            prop_assert!((a.t_start - b.t_start).abs() <= 1e-9 && (a.t_end - b.t_end).abs() <= 1e-9);
            prop_assert!((a.h - b.h).abs() <= 1e-9);
            prop_assert_eq!(a.hits_mu, b.hits_mu);
        }
    }

    #[test]
    fn trade_levels_follow_major_type(seed in 0u64..10_000) {
        let dt = 1e-4;
        let w = gen_bm_path(seed, dt, 3.0).unwrap();
        let tau = compute_tau_indices(&w, 1.0, 0.0).unwrap();
        let ask = best_ask_from_indices(&w, &tau, 1.0).unwrap();
        let t = detect_trading_times(&w, &ask, 0.0, dt.sqrt()).unwrap();
        let ev = classify_trades(&t, &ask, 10.0 * dt).unwrap();
        for pair in ev.windows(2) {
            match pair[1].major {
                Major::II => prop_assert!(pair[1].level <= pair[0].level + 1e-12),
                Major::I => prop_assert!(pair[1].level >= pair[0].level - 1e-12),
            }
        }
    }

    #[test]
    fn avalanches_are_separated(mut times in proptest::collection::vec(0.0f64..10.0, 0..200), eps in 0.01f64..0.5) {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let recs = detect_avalanches(&times, eps, 10.0).unwrap();
        for r in &recs {
            prop_assert!(r.b >= r.a && (r.length - (r.b - r.a)).abs() < 1e-12);
            prop_assert!(times.contains(&r.a) && times.contains(&r.b));
            let inside: Vec<f64> = times.iter().copied().filter(|&t| t >= r.a && t <= r.b).collect();
            prop_assert!(inside.windows(2).all(|w| w[1] - w[0] <= eps));
            prop_assert_eq!(inside.len() as u64, r.n_trades);
        }
        for w in recs.windows(2) {
            prop_assert!(w[1].a - w[0].b > eps);
        }
        prop_assert_eq!(recs.iter().map(|r| r.n_trades).sum::<u64>(), times.len() as u64);
    }

    #[test]
    fn laplace_estimate_decreases_in_lambda(lengths in proptest::collection::vec(0.01f64..0.9, 100..150)) {
        let mut t = 0.0;
        let mut times = Vec::new();
        for l in &lengths {
            times.push(t);
            times.push(t + l);
            t += l + 1.0;
        }
        let recs = detect_avalanches(&times, 0.99, t + 1.0).unwrap();
        let mut last = 1.0;
        for lam in [0.0, 0.1, 1.0, 10.0] {
            let e = mc_laplace_avalanche(&recs, lam).unwrap().value;
            prop_assert!(e <= last + 1e-15);
            last = e;
        }
    }

    #[test]
    fn tail_below_is_monotone(x in 0.01f64..5.0, dx in 0.0f64..1.0, y in 0.1f64..1.0, dy in 0.0f64..0.5) {
        let y2 = (y + dy).min(1.0);
        let base = analytics::tail_r_below(x, y, 1.0).unwrap().value;
        prop_assert!(base >= 0.0);
        prop_assert!(analytics::tail_r_below(x + dx, y, 1.0).unwrap().value <= base + 1e-12);
        prop_assert!(analytics::tail_r_below(x, y2, 1.0).unwrap().value >= base - 1e-12);
    }
}
