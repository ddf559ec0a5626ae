use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lobsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("LOBSIM_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir` except the report, keyed by relative path.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "report.json" {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn analytics_table_has_the_hyperbolic_value() {
    let tmp = TempDir::new().unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--lambda-grid", "0.5", "--output-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("out/analytics.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("laplace_R,")).expect("laplace_R row");
    let value: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((value - 0.3807970780).abs() < 1e-10, "{row}");
}

#[test]
fn empty_config_file_gives_defaults() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("empty.cfg"), "").unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--config", "empty.cfg", "--output-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = &report(&tmp.path().join("out"))["config"];
    assert_eq!(c["mu"], 1.0);
    assert_eq!(c["dt"], 1e-4);
    assert_eq!(c["horizon"], 100.0);
    assert_eq!(c["eps"], 0.05);
}

#[test]
fn flag_overrides_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "mu = 2\nseed = 9\noutput_dir = from_file\n").unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--config", "run.cfg", "--mu", "1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = &report(&tmp.path().join("from_file"))["config"];
    assert_eq!(c["mu"], 1.5);
    assert_eq!(c["seed"], 9);
}

#[test]
fn bad_input_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--dt", "1e-4x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`dt`"), "{}", stderr(&o));

    fs::write(tmp.path().join("bad.cfg"), "horizon = ten\n").unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`horizon`"), "{}", stderr(&o));

    fs::write(tmp.path().join("unknown.cfg"), "sigma = 1\n").unwrap();
    let o = lobsim(tmp.path(), &["analytics-table", "--config", "unknown.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`sigma`"), "{}", stderr(&o));

    let o = lobsim(tmp.path(), &["compare", "--n-paths", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_paths"), "{}", stderr(&o));
    assert!(!tmp.path().join("lobsim_out").exists());
}

#[test]
fn outputs_are_deterministic_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let runs = [
        ("simulate", "a", "1"),
        ("simulate", "b", "1"),
        ("simulate", "c", "3"),
        ("avalanche", "d", "1"),
        ("avalanche", "e", "3"),
    ];
    for (mode, dir, threads) in runs {
        let (dt, horizon) = if mode == "simulate" { ("1e-3", "2") } else { ("1e-4", "20") };
        let o = lobsim(
            tmp.path(),
            &[
                mode,
                "--dt",
                dt,
                "--horizon",
                horizon,
                "--n-paths",
                "4",
                "--seed",
                "17",
                "--threads",
                threads,
                "--output-dir",
                dir,
            ],
        );
        assert!(o.status.success(), "{mode} {dir}: {}", stderr(&o));
    }
    let a = artifacts(&tmp.path().join("a"));
    assert!(a.len() >= 20);
    assert_eq!(a, artifacts(&tmp.path().join("b")));
    assert_eq!(a, artifacts(&tmp.path().join("c")));
    let d = artifacts(&tmp.path().join("d"));
    assert!(!d.is_empty());
    assert_eq!(d, artifacts(&tmp.path().join("e")));
    // statistics in the report match too, apart from timing fields
    assert_eq!(report(&tmp.path().join("d"))["statistics"], report(&tmp.path().join("e"))["statistics"]);
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "output_dir = from_file\n").unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["analytics-table", "--config", "run.cfg"];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_lobsim"))
            .args(&args)
            .current_dir(tmp.path())
            .env("LOBSIM_OUTPUT_DIR", "from_env")
            .output()
            .unwrap()
    };
    assert!(run(&[]).status.success());
    assert!(tmp.path().join("from_env/analytics.csv").exists());
    assert!(!tmp.path().join("from_file").exists());
    assert!(run(&["--output-dir", "from_flag"]).status.success());
    assert!(tmp.path().join("from_flag/analytics.csv").exists());
}
