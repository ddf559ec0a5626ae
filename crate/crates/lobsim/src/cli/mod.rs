//! Command-line experiment runner.
//!
//! Each subcommand selects a mode; every configuration key can come from a
//! flat `key = value` file (`--config`) and be overridden by a flag of the
//! same name. `LOBSIM_OUTPUT_DIR` overrides the file's `output_dir` but not
//! an explicit `--output-dir`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric or output
//! failure, 3 a compared statistic with |z| > 4.

mod config;
mod report;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, ConfigError, ExperimentConfig, Mode, KEYS, OUTPUT_DIR_ENV};
pub use report::{RngProvenance, RunError, RunReport, Statistic, Status, Z_REJECT};
pub use run::run;

#[derive(Debug, Parser)]
#[command(name = "lobsim", version, about = "Latent limit order book Monte Carlo laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate stored paths and export the book, trades, excursions and volume.
    Simulate(Flags),
    /// Tabulate closed-form laws.
    #[command(name = "analytics-table")]
    AnalyticsTable(Flags),
    /// Avalanche Laplace transform, Monte Carlo against the closed form.
    Avalanche(Flags),
    /// Excursion laws, Monte Carlo against closed forms.
    Compare(Flags),
    /// Avalanches of running-maximum trades against the Dassios-Wu formula.
    #[command(name = "typeI-compare")]
    TypeICompare(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// Comma-separated.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Comma-separated.
    #[arg(long)]
    x_grid: Option<String>,
    #[arg(long)]
    y: Option<String>,
    #[arg(long)]
    n_paths: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    tol_levels: Option<String>,
    #[arg(long)]
    eps_acc: Option<String>,
    #[arg(long)]
    dx: Option<String>,
    /// `bridge` or `grid`.
    #[arg(long)]
    detection: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Comma-separated analytic quantity names.
    #[arg(long)]
    quantities: Option<String>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        let all = [
            ("mu", &self.mu),
            ("dt", &self.dt),
            ("horizon", &self.horizon),
            ("eps", &self.eps),
            ("lambda_grid", &self.lambda_grid),
            ("x_grid", &self.x_grid),
            ("y", &self.y),
            ("n_paths", &self.n_paths),
            ("seed", &self.seed),
            ("tol_levels", &self.tol_levels),
            ("eps_acc", &self.eps_acc),
            ("dx", &self.dx),
            ("detection", &self.detection),
            ("threads", &self.threads),
            ("quantities", &self.quantities),
            ("output_dir", &self.output_dir),
        ];
        all.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    }
}

fn print_report(r: &RunReport) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    println!("mode {} | {} paths | {:.2}s on {} threads", r.config.mode, r.rng.paths, r.wall_clock_seconds, r.threads);
    println!("{:<44} {:>12} {:>10} {:>12} {:>8} status", "statistic", "empirical", "se", "closed_form", "z");
    for s in &r.statistics {
        println!(
            "{:<44} {:>12} {:>10} {:>12} {:>8} {:?}",
            s.name,
            fmt(s.empirical),
            fmt(s.se),
            fmt(s.closed_form),
            s.z.map_or_else(|| "-".to_string(), |z| format!("{z:.2}")),
            s.status
        );
    }
    println!("artifacts in {}", r.config.output_dir.display());
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (mode, flags) = match &cli.command {
        Command::Simulate(f) => (Mode::Simulate, f),
        Command::AnalyticsTable(f) => (Mode::Analytics, f),
        Command::Avalanche(f) => (Mode::Avalanche, f),
        Command::Compare(f) => (Mode::Compare, f),
        Command::TypeICompare(f) => (Mode::TypeICompare, f),
    };
    let cfg = match parse_config(mode, flags.config.as_deref(), &flags.pairs()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run(&cfg) {
        Ok(report) => {
            print_report(&report);
            if report.rejected() {
                eprintln!("statistical rejection: some |z| > {Z_REJECT}");
                3
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
