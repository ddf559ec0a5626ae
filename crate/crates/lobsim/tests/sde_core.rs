use lobsim::sde_core::{
    bridge_hit_prob, fold_to_drbm, gaussian_step, gen_bm_path, increment_rng, FoldSpec, Path, PathKind,
};
use lobsim::stats::ks_distance;

#[test]
fn generation_is_bit_reproducible() {
    let a = gen_bm_path(1, 1e-4, 1.0).unwrap();
    let b = gen_bm_path(1, 1e-4, 1.0).unwrap();
    assert_eq!(a.len(), 10_001);
    assert_eq!(a.values[0], 0.0);
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.values, gen_bm_path(2, 1e-4, 1.0).unwrap().values);
}

fn moments(p: &Path) -> (f64, f64, f64) {
    let inc: Vec<f64> = p.values.windows(2).map(|w| w[1] - w[0]).collect();
    let n = inc.len() as f64;
    let mean = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (n, mean, var)
}

#[test]
fn increments_have_the_right_moments() {
    let dt = 1e-4;
    // the sample variance of 1e4 increments has relative SE sqrt(2/n) = 1.4%
    let (n, mean, var) = moments(&gen_bm_path(1, dt, 1.0).unwrap());
    assert!(mean.abs() <= 4.0 * dt.sqrt() / n.sqrt(), "mean {mean}");
    assert!((var / dt - 1.0).abs() <= 3.0 * (2.0 / n).sqrt(), "variance ratio {}", var / dt);
    let (n, mean, var) = moments(&gen_bm_path(1, dt, 100.0).unwrap());
    assert!(mean.abs() <= 4.0 * dt.sqrt() / n.sqrt(), "mean {mean}");
    assert!((var / dt - 1.0).abs() <= 0.01, "variance ratio {}", var / dt);
}

#[test]
fn fold_examples() {
    let zero = Path::new(1e-3, vec![0.0; 5], 0, 0, PathKind::Brownian).unwrap();
    let f = fold_to_drbm(&zero, &FoldSpec::new(1.0, 0.5).unwrap()).unwrap();
    assert!(f.values.iter().all(|&v| v == 0.5));
    assert_eq!(f.kind, PathKind::Reflected);
    let up = Path::new(1e-3, vec![0.0, 1.0], 0, 0, PathKind::Brownian).unwrap();
    let f = fold_to_drbm(&up, &FoldSpec::at_top(1.0).unwrap()).unwrap();
    assert_eq!(f.values, vec![1.0, 0.0]);
    assert!(fold_to_drbm(&f, &FoldSpec::at_top(1.0).unwrap()).is_err());
}

#[test]
fn folded_law_at_t5_is_uniform() {
    // the slowest mode of the reflected motion on [0, 1] decays like e^{-pi^2 t / 2}
    let n = 10_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|seed| {
            let w = gen_bm_path(seed, 1e-2, 5.0).unwrap();
            *fold_to_drbm(&w, &FoldSpec::at_top(1.0).unwrap()).unwrap().values.last().unwrap()
        })
        .collect();
    let ks = ks_distance(&mut xs, |x| x.clamp(0.0, 1.0));
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn bridge_hit_prob_examples() {
    assert_eq!(bridge_hit_prob(0.0, 0.7, 0.1, 0.0), 1.0);
    assert_eq!(bridge_hit_prob(0.3, -0.2, 0.1, 0.0), 1.0);
    assert!((bridge_hit_prob(0.1, 0.1, 0.01, 0.0) - (-2f64).exp()).abs() < 1e-15);
}

#[test]
fn bridge_hit_prob_against_fine_bridges() {
    let (a, b, dt) = (0.1, 0.1, 0.01);
    let m = 10_000;
    let h = dt / m as f64;
    let reps = 20_000;
    let mut rng = increment_rng(77, 0);
    let mut hits = 0u32;
    let mut path = vec![0.0; m + 1];
    for _ in 0..reps {
        for k in 1..=m {
            path[k] = path[k - 1] + gaussian_step(&mut rng, h.sqrt());
        }
        let end = path[m];
        // pin the free path to b: bridge(s) = a + W(s) - (s/dt)(W(dt) - (b - a))
        let touched = (0..=m).any(|k| a + path[k] - (k as f64 / m as f64) * (end - (b - a)) <= 0.0);
        hits += touched as u32;
    }
    let freq = hits as f64 / reps as f64;
    let p = bridge_hit_prob(a, b, dt, 0.0);
    // a path monitored every h misses barrier touches; its effective barrier
    // sits about 0.5826 sqrt(h) further away
    let shift = 0.5826 * h.sqrt();
    let monitored = bridge_hit_prob(a + shift, b + shift, dt, 0.0);
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!(freq <= p + 3.0 * se && freq >= monitored - 3.0 * se, "freq {freq}, p {p}, monitored {monitored}");
}
