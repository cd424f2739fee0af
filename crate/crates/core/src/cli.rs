//! The `astra` command line.
//!
//! Exit codes: 0 success, 1 invariant breach during a run, 2 usage or
//! configuration error. Parameters resolve as flags, then the `--config`
//! JSON file, then defaults.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{estimate_mean_norm, gamma_sum_tail, GammaTail, MeanNormEstimate};
use crate::error::{Error, Result};
use crate::expconcave::RadiusScaling;
use crate::experiments::{astra_sweep, concentration_sweep, AstraSweepConfig, ConcentrationSweep, DeltaRule};
use crate::market_data::{load_caps_with, run_backtest, synth_caps, BacktestConfig, LoadOptions, SynthConfig};
use crate::sequences::{check_assumptions, hyperharmonic_weights, pareto_target};
use crate::wfsim::{simulate_batch, WFConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BREACH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "astra", version, about = "Short-horizon relative arbitrage laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate Wright-Fisher market weights and export a trajectory.
    Simulate(SimulateArgs),
    /// Run the cosine-portfolio sweep over a dimension grid.
    Astra(AstraArgs),
    /// Dirichlet concentration and gamma-sum tail campaign.
    Concentration(ConcentrationArgs),
    /// Rolling-period backtest on a market-cap CSV.
    Backtest(BacktestArgs),
    /// Check a hyperharmonic sequence against the growth assumptions.
    Diagnostics(DiagnosticsArgs),
    /// Write a Wright-Fisher generated market-cap CSV.
    SynthCaps(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed; drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// JSON file with parameters for this subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "astra-out")]
    pub out_dir: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Paths used for the terminal-moment summary.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Coordinates written to the trajectory CSV.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub n: usize,
    pub alpha: f64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub rate: f64,
    pub paths: usize,
    pub top_k: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            n: 100,
            alpha: 0.75,
            horizon: 0.1,
            dt: None,
            rate: 1.0,
            paths: 1,
            top_k: 10,
        }
    }
}

#[derive(Debug, Args)]
pub struct AstraArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    /// Horizon `(log n)^(-p)`; default `p = 1/4`.
    #[arg(long)]
    pub delta_exponent: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Allow dimensions above 2000.
    #[arg(long)]
    pub allow_large_n: bool,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub r_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Number of unit gamma variates in the tail check.
    #[arg(long)]
    pub gamma_n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSettings {
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    pub r_grid: Vec<f64>,
    pub count: usize,
    pub gamma_n: usize,
    pub u_grid: Vec<f64>,
}

impl Default for ConcentrationSettings {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_grid: vec![500, 2000],
            r_grid: vec![0.3, 0.5, 1.0],
            count: 10_000,
            gamma_n: 1000,
            u_grid: vec![1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Market-cap CSV with header `date,asset_1,...`.
    #[arg(long)]
    pub caps: PathBuf,
    #[arg(long)]
    pub period_length: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_enum)]
    pub radius_scaling: Option<RadiusScaling>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Forward-fill short gaps instead of rejecting missing cells.
    #[arg(long)]
    pub fill_gaps: bool,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub alpha: f64,
    pub n_grid: Vec<usize>,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            n_grid: vec![1_000, 10_000, 100_000],
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub daily_tau: Option<f64>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn breach(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_BREACH,
        message: e.to_string(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Astra(a) => cmd_astra(a),
        Command::Concentration(a) => cmd_concentration(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Diagnostics(a) => cmd_diagnostics(a),
        Command::SynthCaps(a) => cmd_synth(a),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> std::result::Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve_seed(common: &CommonArgs) -> u64 {
    common.seed.unwrap_or_else(|| {
        let s = rand::rng().random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn pool(threads: usize) -> std::result::Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(usage)
}

/// Output files under `out_dir`, refusing to clobber without `--force`.
fn outputs(common: &CommonArgs, names: &[&str]) -> std::result::Result<Vec<PathBuf>, Failure> {
    let paths: Vec<PathBuf> = names.iter().map(|n| common.out_dir.join(n)).collect();
    if !common.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(usage(Error::WouldOverwrite(p.clone())));
        }
    }
    fs::create_dir_all(&common.out_dir).map_err(|e| usage(format!("{}: {e}", common.out_dir.display())))?;
    Ok(paths)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(breach)?;
    text.push('\n');
    fs::write(path, text).map_err(breach)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    settings: SimulateSettings,
    seed: u64,
    dt: f64,
    steps: usize,
    r_n: f64,
    /// `qv_sum / tau` on path 0, close to `1 - R_n` when `R_n` is small.
    qv_rate: f64,
    one_minus_r_n: f64,
    max_radius: f64,
    /// Largest `|z|` of terminal coordinate means against `nu` over the batch.
    terminal_max_abs_z: Option<f64>,
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let mut s: SimulateSettings = load_config(a.common.config.as_deref())?;
    set(&mut s.n, a.n);
    set(&mut s.alpha, a.alpha);
    set(&mut s.horizon, a.horizon);
    if a.dt.is_some() {
        s.dt = a.dt;
    }
    set(&mut s.rate, a.rate);
    set(&mut s.paths, a.paths);
    set(&mut s.top_k, a.top_k);
    let seed = resolve_seed(&a.common);

    let nu = pareto_target(s.alpha, s.n).map_err(usage)?;
    let mut cfg = WFConfig::new(nu.clone(), s.horizon).with_rate(s.rate).with_seed(seed);
    if let Some(dt) = s.dt {
        cfg = cfg.with_dt(dt);
    }
    cfg.validate().map_err(usage)?;
    if s.paths == 0 {
        return Err(usage("paths must be positive"));
    }
    let files = outputs(&a.common, &["trajectory.csv", "simulate_summary.json"])?;

    let pool = pool(a.common.threads)?;
    let paths = pool.install(|| simulate_batch(&cfg, s.paths)).map_err(breach)?;
    let first = &paths[0];
    let file = fs::File::create(&files[0]).map_err(breach)?;
    first.write_csv(file, s.top_k).map_err(breach)?;

    let r_n = nu.sq_norm();
    let tau = cfg.dtau() * cfg.steps() as f64;
    let terminal_max_abs_z = (s.paths >= 2).then(|| {
        let m = s.paths as f64;
        (0..s.n)
            .map(|i| {
                let mean = paths.iter().map(|p| p.points.last().unwrap()[i]).sum::<f64>() / m;
                let sd = (nu[i] * (1.0 - nu[i]) / (s.n as f64 + 1.0) / m).sqrt();
                ((mean - nu[i]) / sd).abs()
            })
            .fold(0.0, f64::max)
    });
    let summary = SimulateSummary {
        seed,
        dt: cfg.grid_dt(),
        steps: cfg.steps(),
        r_n,
        qv_rate: if tau > 0.0 {
            first.qv_sum.last().unwrap() / tau
        } else {
            0.0
        },
        one_minus_r_n: 1.0 - r_n,
        max_radius: first.max_radius(&nu),
        terminal_max_abs_z,
        settings: s,
    };
    write_json(&files[1], &summary)?;
    if paths
        .iter()
        .flat_map(|p| &p.points)
        .any(|p| (p.iter().sum::<f64>() - 1.0).abs() > 1e-12)
    {
        return Err(breach("simulated point left the simplex"));
    }
    Ok(())
}

fn cmd_astra(a: AstraArgs) -> CmdResult {
    let mut cfg: AstraSweepConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.alpha, a.alpha);
    set(&mut cfg.n_grid, a.n_grid);
    set(&mut cfg.paths_per_n, a.paths);
    set(&mut cfg.epsilon, a.epsilon);
    set(&mut cfg.b1, a.b1);
    set(&mut cfg.b2, a.b2);
    if let Some(e) = a.delta_exponent {
        cfg.delta_rule = DeltaRule::LogPower { exponent: e };
    }
    if a.dt.is_some() {
        cfg.dt = a.dt;
    }
    set(&mut cfg.time_change_rate, a.rate);
    cfg.seed = resolve_seed(&a.common);
    cfg.validate().map_err(usage)?;
    if !a.allow_large_n && cfg.n_grid.iter().any(|n| *n > 2000) {
        return Err(usage("n above 2000 needs --allow-large-n"));
    }
    let files = outputs(&a.common, &["astra_report.json"])?;
    let report = pool(a.common.threads)?.install(|| astra_sweep(&cfg)).map_err(breach)?;
    write_json(&files[0], &report)?;
    for r in &report.records {
        println!(
            "n={:<5} median log V={:>10.4} floor violations={} q_hat={:.4} negative-weight paths={}",
            r.n, r.median_log_v, r.floor_violations, r.q_hat, r.negative_weight_events
        );
    }
    let bad: usize = report
        .records
        .iter()
        .map(|r| r.floor_violations + r.drift_certificate_failures + r.invariant_breaches)
        .sum();
    if bad > 0 {
        return Err(breach(format!("{bad} path-level invariant failures, see report")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ConcentrationOutput {
    settings: ConcentrationSettings,
    seed: u64,
    mean_norm: Vec<MeanNormEstimate>,
    tails: ConcentrationSweep,
    gamma_tails: Vec<GammaTail>,
}

fn cmd_concentration(a: ConcentrationArgs) -> CmdResult {
    let mut s: ConcentrationSettings = load_config(a.common.config.as_deref())?;
    set(&mut s.alpha, a.alpha);
    set(&mut s.n_grid, a.n_grid);
    set(&mut s.r_grid, a.r_grid);
    set(&mut s.count, a.count);
    set(&mut s.gamma_n, a.gamma_n);
    set(&mut s.u_grid, a.u_grid);
    let seed = resolve_seed(&a.common);
    if s.count < 10_000 {
        return Err(usage(format!("count {} below 10000", s.count)));
    }
    if !(0.0..=1.0).contains(&s.alpha) || s.n_grid.iter().any(|n| *n < 2) || s.n_grid.is_empty() {
        return Err(usage("need alpha in [0, 1] and a grid of n >= 2"));
    }
    if s.r_grid.is_empty() || s.r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(usage("r values must be positive"));
    }
    if s.u_grid.iter().any(|u| !(*u >= 0.0 && (s.gamma_n as f64) > u * u)) {
        return Err(usage("every u needs u >= 0 and gamma_n > u^2"));
    }
    let files = outputs(&a.common, &["concentration_report.json"])?;
    let out = pool(a.common.threads)?
        .install(|| -> Result<ConcentrationOutput> {
            let mean_norm = s
                .n_grid
                .iter()
                .map(|&n| estimate_mean_norm(s.alpha, n, s.count, seed))
                .collect::<Result<Vec<_>>>()?;
            let tails = concentration_sweep(s.alpha, &s.n_grid, &s.r_grid, s.count, seed)?;
            let gamma_tails = s
                .u_grid
                .iter()
                .map(|&u| gamma_sum_tail(s.gamma_n, u, s.count, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(ConcentrationOutput {
                settings: s.clone(),
                seed,
                mean_norm,
                tails,
                gamma_tails,
            })
        })
        .map_err(breach)?;
    write_json(&files[0], &out)?;
    for g in &out.gamma_tails {
        println!(
            "u={} empirical={:.5} bound={:.5} passes={}",
            g.u, g.empirical, g.bound, g.passes
        );
    }
    if out.gamma_tails.iter().any(|g| !g.passes) {
        return Err(breach("gamma-sum tail exceeded its bound"));
    }
    Ok(())
}

fn cmd_backtest(a: BacktestArgs) -> CmdResult {
    let mut cfg: BacktestConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.period_length, a.period_length);
    set(&mut cfg.c, a.c);
    set(&mut cfg.radius_scaling, a.radius_scaling);
    set(&mut cfg.epsilon, a.epsilon);
    if a.top_k.is_some() {
        cfg.top_k = a.top_k;
    }
    cfg.validate().map_err(usage)?;
    let table = load_caps_with(&a.caps, LoadOptions { fill_gaps: a.fill_gaps }).map_err(usage)?;
    let files = outputs(&a.common, &["backtest.csv", "backtest_summary.json"])?;
    let report = run_backtest(&table, &cfg).map_err(|e| match e {
        Error::Precondition(_) | Error::InvalidParameter { .. } => usage(e),
        e => breach(e),
    })?;
    let file = fs::File::create(&files[0]).map_err(breach)?;
    report.write_csv(file).map_err(breach)?;
    write_json(&files[1], &report.summary)?;
    let m = &report.summary.market;
    if m.end_log_v.abs() > 1e-12 || report.rows.iter().any(|r| r.log_v_market.abs() > 1e-12) {
        return Err(breach("market curve is not identically zero"));
    }
    Ok(())
}

fn cmd_diagnostics(a: DiagnosticsArgs) -> CmdResult {
    let mut s: DiagnosticsSettings = load_config(a.common.config.as_deref())?;
    set(&mut s.alpha, a.alpha);
    set(&mut s.n_grid, a.n_grid);
    let max_n = s.n_grid.iter().copied().max().ok_or_else(|| usage("empty n grid"))?;
    let seq = hyperharmonic_weights(s.alpha, max_n).map_err(usage)?;
    let diag = check_assumptions(&seq, &s.n_grid).map_err(usage)?;
    let files = outputs(&a.common, &["diagnostics.json"])?;
    write_json(&files[0], &diag)?;
    println!(
        "regular variation: {}, inequality: {}, index limit: {}, critical: {}",
        diag.regular_variation_ok, diag.inequality_ok, diag.index_limit_ok, diag.critical
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let mut cfg: SynthConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.n, a.n);
    set(&mut cfg.alpha, a.alpha);
    set(&mut cfg.days, a.days);
    if a.daily_tau.is_some() {
        cfg.daily_tau = a.daily_tau;
    }
    cfg.seed = resolve_seed(&a.common);
    let table = synth_caps(&cfg).map_err(usage)?;
    let files = outputs(&a.common, &["caps.csv"])?;
    let file = fs::File::create(&files[0]).map_err(breach)?;
    table.write_csv(file).map_err(breach)?;
    Ok(())
}
