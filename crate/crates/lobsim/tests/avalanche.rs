use lobsim::analytics;
use lobsim::avalanche::{
    detect_avalanches_as, mc_laplace_avalanche, simulate_type_i_only_trades, AvalancheKind, AvalancheRecord,
    AvalancheTracker,
};
use lobsim::sde_core::gen_bm_path_indexed;
use lobsim::stream::{run, Detection, Stepper, TradeLog};

const EPS: f64 = 0.05;

fn streamed(seed: u64, paths: u64, dt: f64, mu: f64, horizon: f64, kind: AvalancheKind) -> Vec<AvalancheRecord> {
    let mut out = Vec::new();
    for p in 0..paths {
        let x0 = if mu.is_finite() { mu } else { 0.0 };
        let mut st = Stepper::new(seed, p, dt, mu, x0, Detection::Bridge).unwrap();
        let mut tr = AvalancheTracker::new(EPS, kind);
        run(&mut st, horizon, &mut tr).unwrap();
        out.extend(tr.into_records());
    }
    out
}

fn complete(recs: &[AvalancheRecord]) -> usize {
    recs.iter().filter(|r| !r.truncated).count()
}

#[test]
fn records_partition_simulated_trades() {
    for p in 0..5 {
        let mut st = Stepper::new(12, p, 1e-4, 1.0, 1.0, Detection::Bridge).unwrap();
        let mut log = TradeLog::default();
        let mut tr = AvalancheTracker::new(EPS, AvalancheKind::Full);
        run(&mut st, 20.0, &mut (&mut log, &mut tr)).unwrap();
        let recs = tr.into_records();
        assert!(recs.len() > 10);
        let times = &log.times;
        for r in &recs {
            assert!(times.binary_search_by(|t| t.total_cmp(&r.a)).is_ok(), "start {} is not a trade", r.a);
            assert!(times.binary_search_by(|t| t.total_cmp(&r.b)).is_ok(), "end {} is not a trade", r.b);
            let inside: Vec<f64> = times.iter().copied().filter(|&t| t >= r.a && t <= r.b).collect();
            assert_eq!(inside.len() as u64, r.n_trades);
            assert!(inside.windows(2).all(|w| w[1] - w[0] <= EPS));
        }
        for w in recs.windows(2) {
            assert!(w[1].a - w[0].b > EPS);
        }
        assert_eq!(recs.iter().map(|r| r.n_trades).sum::<u64>(), times.len() as u64);
    }
}

#[test]
fn avalanche_rate_is_stable_under_refinement() {
    let coarse = complete(&streamed(3, 40, 1e-4, 1.0, 100.0, AvalancheKind::Full));
    let fine = complete(&streamed(4, 40, 2.5e-5, 1.0, 100.0, AvalancheKind::Full));
    assert!(coarse > 1000);
    let rel = fine as f64 / coarse as f64 - 1.0;
    assert!(rel.abs() < 0.05, "{coarse} -> {fine} avalanches ({rel})");
}

#[test]
fn full_and_type_one_only_agree_for_large_mu() {
    // Avalanche lengths only see excursions shorter than eps, which feel the
    // upper barrier through terms like exp(-2 mu^2 / eps).
    let dw = analytics::dassios_wu_laplace(1.0, EPS).unwrap().value;
    for mu in [1.0, 2.0, 4.0] {
        let cf = analytics::avalanche_laplace(1.0, EPS, mu).unwrap().value;
        assert!((cf - dw).abs() < 1e-12, "mu {mu}: {cf} vs {dw}");
    }
    let gap = |mu: f64| {
        (analytics::avalanche_laplace(1.0, 1.0, mu).unwrap().value
            - analytics::dassios_wu_laplace(1.0, 1.0).unwrap().value)
            .abs()
    };
    let (d1, d2, d4) = (gap(1.0), gap(2.0), gap(4.0));
    assert!(d1 > d2 && d2 >= d4 && d4 < 1e-10, "{d1} {d2} {d4}");

    let only =
        mc_laplace_avalanche(&streamed(5, 20, 1e-4, f64::INFINITY, 50.0, AvalancheKind::TypeIOnly), 1.0).unwrap();
    for mu in [1.0, 2.0, 4.0] {
        let full = mc_laplace_avalanche(&streamed(5, 20, 1e-4, mu, 50.0, AvalancheKind::Full), 1.0).unwrap();
        let se = (full.se.powi(2) + only.se.powi(2)).sqrt();
        assert!((full.value - only.value).abs() <= 3.0 * se, "mu {mu}: {} vs {} (se {se})", full.value, only.value);
        assert!(full.z_against(dw).abs() <= 3.0, "mu {mu}: {} ± {}", full.value, full.se);
    }
}

#[test]
fn stored_type_one_only_pipeline_matches_closed_form() {
    let dt: f64 = 1e-4;
    let mut recs = Vec::new();
    for p in 0..100 {
        let w = gen_bm_path_indexed(8, p, dt, 100.0).unwrap();
        let t = simulate_type_i_only_trades(&w, 0.0, dt.sqrt()).unwrap();
        recs.extend(detect_avalanches_as(&t, EPS, 100.0, AvalancheKind::TypeIOnly).unwrap());
    }
    assert!(recs.iter().all(|r| r.kind == AvalancheKind::TypeIOnly));
    let est = mc_laplace_avalanche(&recs, 1.0).unwrap();
    let dw = analytics::dassios_wu_laplace(1.0, EPS).unwrap().value;
    assert!(est.z_against(dw).abs() <= 3.0, "{} ± {} over {} records vs {dw}", est.value, est.se, est.n);
}
