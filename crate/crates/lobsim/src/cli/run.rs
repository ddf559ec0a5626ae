//! Mode pipelines. Paths are simulated independently (in parallel) and
//! merged in path-index order, so outputs do not depend on the thread count.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path as FsPath;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode};
use super::report::{Context, RngProvenance, RunError, RunReport, Statistic};
use crate::analytics::{self, AnalyticQuery, Quantity};
use crate::avalanche::{mc_laplace_avalanche, write_avalanches_csv, AvalancheKind, AvalancheRecord, AvalancheTracker};
use crate::book::{ask_gap, volume_field_at, PlacementSpec, TimelineOptions, TradeTimeline, VolumeField};
use crate::excursions::{
    conditional_tail_r, estimate_local_time_unit, extract_excursions, ExcursionOptions, ExcursionSample,
    ExcursionTracker,
};
use crate::sde_core::{gen_bm_path_indexed, Path, PathKind};
use crate::stats::{nested_ratio, Estimate, MeanVar};
use crate::stream::{self, Detection, InverseLocalTime, LocalTime, Stepper};
use crate::trades::{self, Major, Minor, Side, TradeEvent};
use crate::Error;

const STREAMS: &str = "ChaCha8 stream 2i drives the increments of path i, stream 2i+1 its auxiliary uniforms";

/// Run the configured experiment, writing artifacts and `report.json` to
/// the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let started = Instant::now();
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Output { path: "thread pool".into(), reason: e.to_string() })?;
    let threads = pool.current_num_threads();
    let (statistics, artifacts) = pool.install(|| match cfg.mode {
        Mode::Analytics => analytics_table(cfg),
        Mode::Simulate => simulate(cfg),
        Mode::Avalanche => avalanche(cfg, false),
        Mode::TypeICompare => avalanche(cfg, true),
        Mode::Compare => compare(cfg),
    })?;
    let mut report = RunReport {
        config: cfg.clone(),
        statistics,
        rng: RngProvenance {
            generator: "ChaCha8Rng",
            seed: cfg.seed,
            paths: if cfg.mode == Mode::Analytics { 0 } else { cfg.n_paths },
            streams: STREAMS,
        },
        artifacts,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        threads,
    };
    report.artifacts.push("report.json".into());
    let path = out.join("report.json");
    let f = File::create(&path).map_err(|e| io_err(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)
        .map_err(|e| RunError::Output { path: path.display().to_string(), reason: e.to_string() })?;
    Ok(report)
}

fn io_err(p: &FsPath, e: impl std::fmt::Display) -> RunError {
    RunError::Output { path: p.display().to_string(), reason: e.to_string() }
}

fn write_csv(
    dir: &FsPath,
    name: &str,
    artifacts: &mut Vec<String>,
    f: impl FnOnce(BufWriter<File>) -> csv::Result<()>,
) -> Result<(), RunError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    f(BufWriter::new(file)).map_err(|e| io_err(&path, e))?;
    artifacts.push(name.to_string());
    Ok(())
}

/// A Monte Carlo estimate compared with a closed form, or marked as
/// insufficient when too few observations exist.
fn compare_or_insufficient(
    name: String,
    est: crate::Result<Estimate>,
    closed_form: impl FnOnce() -> crate::Result<f64>,
) -> Result<Statistic, RunError> {
    compare_with(name, est, closed_form, Statistic::compared)
}

fn compare_proportion(
    name: String,
    est: crate::Result<Estimate>,
    closed_form: impl FnOnce() -> crate::Result<f64>,
) -> Result<Statistic, RunError> {
    compare_with(name, est, closed_form, Statistic::compared_proportion)
}

fn compare_with(
    name: String,
    est: crate::Result<Estimate>,
    closed_form: impl FnOnce() -> crate::Result<f64>,
    make: fn(String, Estimate, f64) -> Statistic,
) -> Result<Statistic, RunError> {
    match est {
        Ok(e) => {
            let cf = closed_form().context(|| format!("closed form for {name}"))?;
            Ok(make(name, e, cf))
        }
        Err(Error::InsufficientData { got, .. }) => Ok(Statistic::insufficient(name, got as u64)),
        Err(e) => Err(RunError::Numeric { context: name, source: e }),
    }
}

fn per_path<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(u64) -> Result<T, RunError> + Sync + Send,
) -> Result<Vec<T>, RunError> {
    (0..cfg.n_paths).into_par_iter().map(f).collect()
}

// ---------------------------------------------------------------- analytics

fn analytics_table(cfg: &ExperimentConfig) -> Result<(Vec<Statistic>, Vec<String>), RunError> {
    let quantities: Vec<Quantity> = if cfg.quantities.is_empty() {
        Quantity::ALL.to_vec()
    } else {
        cfg.quantities.iter().filter_map(|q| Quantity::parse(q)).collect()
    };
    let y = cfg.y();
    let mut rows: Vec<(Quantity, f64, f64, analytics::Approx)> = Vec::new();
    for q in quantities {
        let free: Vec<f64> = if q.uses_lambda() {
            cfg.lambda_grid.clone()
        } else {
            cfg.x_grid.iter().copied().filter(|&x| x > 0.0).collect()
        };
        let second = if q.uses_eps() { cfg.eps } else { y };
        for v in free {
            let query = if q.uses_lambda() {
                AnalyticQuery { mu: cfg.mu, lambda: v, x: 0.0, y, eps: cfg.eps }
            } else {
                AnalyticQuery { mu: cfg.mu, lambda: 0.0, x: v, y, eps: cfg.eps }
            };
            let a = q.evaluate(&query).context(|| format!("{} at {v}", q.name()))?;
            rows.push((q, v, second, a));
        }
    }
    let mut artifacts = Vec::new();
    write_csv(&cfg.output_dir, "analytics.csv", &mut artifacts, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["quantity", "mu", "lambda_or_x", "y_or_eps", "value", "error_bound"])?;
        for (q, v, second, a) in &rows {
            wr.write_record([
                q.name().to_string(),
                format!("{}", cfg.mu),
                format!("{v}"),
                format!("{second}"),
                format!("{}", a.value),
                format!("{:e}", a.error_bound),
            ])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    let stats = rows
        .iter()
        .map(|(q, v, second, a)| Statistic {
            closed_form: Some(a.value),
            ..Statistic::diagnostic(format!("{}[{v},{second}]", q.name()), f64::NAN, 0)
        })
        .collect();
    Ok((stats, artifacts))
}

// ---------------------------------------------------------------- simulate

struct PathSummary {
    steps: u64,
    trades: Vec<TradeEvent>,
    mismatch: (u64, u64),
    sample: ExcursionSample,
}

fn mirrored_ask(bid: &Path) -> Path {
    Path { values: bid.values.iter().map(|v| -v).collect(), kind: PathKind::BestAsk, ..bid.clone() }
}

/// Snapshot indices shown in the volume export: five evenly spaced times
/// after the first trade.
fn display_snapshots(n: usize, tau1: Option<usize>) -> Vec<usize> {
    let Some(t1) = tau1 else { return Vec::new() };
    (1..=5).map(|i| t1 + (n - 1 - t1) * i / 6).collect()
}

/// Proper flags for one side's (ask-view) events, the volume field they were
/// read from, and the number of volume-vs-class disagreements.
fn mark_proper(
    w: &Path,
    ask: &Path,
    events: &[TradeEvent],
    mu: f64,
    dx: f64,
    extra: &[usize],
) -> crate::Result<(Vec<TradeEvent>, VolumeField, u64)> {
    let mut snaps = trades::proper_snapshot_indices(w, ask, events, dx);
    snaps.extend_from_slice(extra);
    snaps.sort_unstable();
    snaps.dedup();
    let field = volume_field_at(w, &PlacementSpec::dirac(mu)?, dx, &snaps)?;
    let marked = trades::proper_trades(w, ask, &field, events)?;
    let bad = events
        .iter()
        .filter(|e| trades::volume_before_trade(w, ask, &field, e).is_some_and(|q| q > 0.0) != e.is_proper_class())
        .count() as u64;
    Ok((marked, field, bad))
}

fn simulate_path(cfg: &ExperimentConfig, i: u64) -> Result<PathSummary, RunError> {
    let ctx = || format!("path {i}");
    let w = gen_bm_path_indexed(cfg.seed, i, cfg.dt, cfg.horizon).context(ctx)?;
    let opts = TimelineOptions { mu: cfg.mu, tol_levels: cfg.tol_levels, dx: cfg.dx(), eps_acc: cfg.eps_acc() };
    let tl = TradeTimeline::build(&w, &opts).context(ctx)?;
    let x = ask_gap(&w, &tl.ask).context(ctx)?;
    let xo = ExcursionOptions {
        mu: cfg.mu,
        tol_levels: cfg.tol_levels,
        dx: cfg.dx(),
        bridge: cfg.detection == Detection::Bridge,
    };
    let sample = extract_excursions(&x, &xo).context(ctx)?;

    let (ask_ev, bid_ev): (Vec<TradeEvent>, Vec<TradeEvent>) = tl.trades.iter().partition(|e| e.side == Side::Ask);
    let show = display_snapshots(w.len(), tl.tau_idx.get(1).copied());
    let (ask_marked, field, bad_a) = mark_proper(&w, &tl.ask, &ask_ev, cfg.mu, cfg.dx(), &show).context(ctx)?;
    let neg = w.negated();
    let neg_ask = mirrored_ask(&tl.bid);
    let bid_m: Vec<TradeEvent> = bid_ev.iter().map(|e| e.mirrored()).collect();
    let (bid_marked, _, bad_b) = mark_proper(&neg, &neg_ask, &bid_m, cfg.mu, cfg.dx(), &[]).context(ctx)?;
    let mut events: Vec<TradeEvent> = ask_marked;
    events.extend(bid_marked.into_iter().map(|e| e.mirrored()));
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.side.cmp(&b.side)));

    let dir = cfg.output_dir.join(format!("path_{i:04}"));
    let mut names = Vec::new();
    let stride = (w.len() / 10_000).max(1);
    write_csv(&dir, "tau.csv", &mut names, |f| tl.write_tau_csv(f))?;
    write_csv(&dir, "quotes.csv", &mut names, |f| tl.write_quotes_csv(f, stride))?;
    write_csv(&dir, "events.csv", &mut names, |f| trades::write_events_csv(f, &events))?;
    write_csv(&dir, "excursions.csv", &mut names, |f| sample.write_csv(f))?;
    let shown = VolumeField {
        times: show.clone(),
        slices: show.iter().filter_map(|&k| field.slice_of(k)).map(|s| field.slices[s].clone()).collect(),
        ..field.clone()
    };
    write_csv(&dir, "volume.csv", &mut names, |f| shown.write_csv(f))?;

    Ok(PathSummary {
        steps: (w.len() - 1) as u64,
        trades: events,
        mismatch: (bad_a + bad_b, (ask_ev.len() + bid_ev.len()) as u64),
        sample,
    })
}

fn simulate(cfg: &ExperimentConfig) -> Result<(Vec<Statistic>, Vec<String>), RunError> {
    let paths = per_path(cfg, |i| simulate_path(cfg, i))?;
    let mut artifacts: Vec<String> = (0..cfg.n_paths)
        .flat_map(|i| ["tau", "quotes", "events", "excursions", "volume"].map(|n| format!("path_{i:04}/{n}.csv")))
        .collect();
    artifacts.sort();
    let time = paths.iter().map(|p| p.steps).sum::<u64>() as f64 * cfg.dt;
    let all: Vec<&TradeEvent> = paths.iter().flat_map(|p| &p.trades).collect();
    let n = all.len() as u64;
    let count = |f: &dyn Fn(&TradeEvent) -> bool| all.iter().filter(|e| f(e)).count() as u64;
    let type_ii = count(&|e| e.major == Major::II);
    let isolated = count(&|e| e.minor == Minor::D);
    let iiab = count(&|e| e.major == Major::II && matches!(e.minor, Minor::A | Minor::B));
    let proper = count(&|e| e.proper);
    let (bad, tot) = paths.iter().fold((0, 0), |acc, p| (acc.0 + p.mismatch.0, acc.1 + p.mismatch.1));
    let mut sample = ExcursionSample::empty(cfg.mu, cfg.dt, cfg.seed, 0, 0.0);
    for p in paths {
        sample.absorb(p.sample);
    }
    let frac = |k: u64| if n > 0 { k as f64 / n as f64 } else { f64::NAN };
    let mut stats = vec![
        Statistic::diagnostic("trades_per_unit_time", n as f64 / time, n),
        Statistic::diagnostic("type_II_fraction", frac(type_ii), n),
        Statistic::diagnostic("isolated_fraction", frac(isolated), n),
        Statistic::diagnostic("proper_fraction", frac(proper), n),
        Statistic::diagnostic(
            "proper_volume_class_mismatch",
            if tot > 0 { bad as f64 / tot as f64 } else { f64::NAN },
            tot,
        ),
        Statistic::compared("type_II_ab_count", Estimate { value: iiab as f64, se: 0.0, n }, 0.0),
        Statistic::diagnostic("excursions", sample.len() as f64, sample.len() as u64),
    ];
    stats.push(height_ratio(&sample, 0.25 * cfg.mu, 0.5 * cfg.mu));
    Ok((stats, artifacts))
}

fn height_ratio(sample: &ExcursionSample, y1: f64, y2: f64) -> Statistic {
    let (a, b) = (sample.count_height(y2), sample.count_height(y1));
    let name = format!("height_ratio[{y2}/{y1}]");
    if b < crate::excursions::MIN_QUALIFYING as u64 {
        return Statistic::insufficient(name, b);
    }
    Statistic::compared_proportion(name, nested_ratio(a, b), y1 / y2)
}

// ---------------------------------------------------------------- avalanches

fn avalanche(cfg: &ExperimentConfig, type_i_only: bool) -> Result<(Vec<Statistic>, Vec<String>), RunError> {
    let (mu, x0, kind) = if type_i_only {
        (f64::INFINITY, 0.0, AvalancheKind::TypeIOnly)
    } else {
        (cfg.mu, cfg.mu, AvalancheKind::Full)
    };
    let per: Vec<Vec<AvalancheRecord>> = per_path(cfg, |i| {
        let mut st = Stepper::new(cfg.seed, i, cfg.dt, mu, x0, cfg.detection).context(|| format!("path {i}"))?;
        let mut tr = AvalancheTracker::new(cfg.eps, kind);
        stream::run(&mut st, cfg.horizon, &mut tr).context(|| format!("path {i}"))?;
        Ok(tr.into_records())
    })?;
    let records: Vec<AvalancheRecord> = per.into_iter().flatten().collect();
    let complete = records.iter().filter(|r| !r.truncated).count() as u64;
    let mut stats = vec![Statistic::diagnostic(
        "avalanches_per_unit_time",
        records.len() as f64 / (cfg.horizon * cfg.n_paths as f64),
        complete,
    )];
    let mut mean_len = MeanVar::new();
    records.iter().filter(|r| !r.truncated).for_each(|r| mean_len.push(r.length));
    stats.push(Statistic::diagnostic("mean_length", mean_len.mean, mean_len.n));
    for &lam in &cfg.lambda_grid {
        let name = format!("laplace[lambda={lam}]");
        let est = mc_laplace_avalanche(&records, lam);
        stats.push(if type_i_only {
            compare_or_insufficient(name, est, || analytics::dassios_wu_laplace(lam, cfg.eps).map(|a| a.value))?
        } else {
            compare_or_insufficient(name, est, || analytics::avalanche_laplace(lam, cfg.eps, cfg.mu).map(|a| a.value))?
        });
        if type_i_only {
            let a = analytics::dassios_wu_laplace(lam, cfg.eps).context(|| "closed form".into())?;
            let b = analytics::dassios_wu_laplace_quadrature(lam, cfg.eps).context(|| "quadrature".into())?;
            stats.push(Statistic::diagnostic(
                format!("closed_form_vs_quadrature[lambda={lam}]"),
                (a.value - b.value).abs(),
                0,
            ));
        }
    }
    let mut artifacts = Vec::new();
    let name = if type_i_only { "avalanches_typeI.csv" } else { "avalanches.csv" };
    write_csv(&cfg.output_dir, name, &mut artifacts, |f| write_avalanches_csv(f, &records))?;
    Ok((stats, artifacts))
}

// ---------------------------------------------------------------- compare

fn compare(cfg: &ExperimentConfig) -> Result<(Vec<Statistic>, Vec<String>), RunError> {
    let x0 = if cfg.detection == Detection::Bridge { 0.0 } else { cfg.mu };
    let per: Vec<(ExcursionSample, Vec<f64>, f64)> = per_path(cfg, |i| {
        let ctx = || format!("path {i}");
        let mut st = Stepper::new(cfg.seed, i, cfg.dt, cfg.mu, x0, cfg.detection).context(ctx)?;
        let mut obs =
            (ExcursionTracker::new(cfg.mu, cfg.dt, cfg.seed, i), InverseLocalTime::new(1.0), LocalTime::default());
        stream::run(&mut st, cfg.horizon, &mut obs).context(ctx)?;
        Ok((obs.0.into_sample(), obs.1.lengths, obs.2.value))
    })?;
    let mut sample = ExcursionSample::empty(cfg.mu, cfg.dt, cfg.seed, 0, 0.0);
    let mut blocks = Vec::new();
    let mut ell = 0.0;
    for (s, b, l) in per {
        sample.absorb(s);
        blocks.extend(b);
        ell += l;
    }
    let mu = cfg.mu;
    let y = cfg.y();
    let mut stats = vec![Statistic::diagnostic("excursions", sample.len() as f64, sample.len() as u64)];
    stats.push(height_ratio(&sample, 0.25 * mu, 0.5 * mu));
    for &x in &cfg.x_grid {
        let est = conditional_tail_r(&sample, mu, x);
        stats.push(compare_proportion(format!("tail_R_given_H=mu[x={x}]"), est, || {
            if x == 0.0 {
                return Ok(1.0);
            }
            analytics::cdf_r_given_type_ii(x, mu).map(|a| 1.0 - a.value)
        })?);
    }
    for &x in &cfg.x_grid {
        let est = conditional_tail_r(&sample, y, x);
        stats.push(compare_proportion(format!("tail_R_given_H>={y}[x={x}]"), est, || {
            if x == 0.0 {
                return Ok(1.0);
            }
            let all = analytics::tail_r(x, mu)?.value;
            let below = analytics::tail_r_below(x, y, mu)?.value;
            Ok(2.0 * y * (all - below))
        })?);
    }
    stats.push(compare_or_insufficient(
        format!("local_time_height_calibration[y={y}]"),
        estimate_local_time_unit(&sample, y),
        || Ok(ell),
    )?);
    for &lam in &cfg.lambda_grid {
        let mut mv = MeanVar::new();
        blocks.iter().for_each(|&l| mv.push((-lam * l).exp()));
        let est = if (mv.n as usize) < crate::excursions::MIN_QUALIFYING {
            Err(Error::InsufficientData { needed: crate::excursions::MIN_QUALIFYING, got: mv.n as usize })
        } else {
            Ok(mv.into())
        };
        stats.push(compare_or_insufficient(format!("inverse_local_time_laplace[lambda={lam}]"), est, || {
            analytics::laplace_r(lam, mu).map(|a| (-a.value).exp())
        })?);
    }
    let mut artifacts = Vec::new();
    write_csv(&cfg.output_dir, "excursions.csv", &mut artifacts, |f| sample.write_csv(f))?;
    write_csv(&cfg.output_dir, "inverse_local_time.csv", &mut artifacts, |f| {
        let mut wr = csv::Writer::from_writer(f);
        wr.write_record(["block", "length"])?;
        for (i, l) in blocks.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{l}")])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok((stats, artifacts))
}
