//! Desk-scale experiment campaigns with JSON reports.
//!
//! Every report is a deterministic function of its configuration: work is
//! spread over rayon with one random stream per `(grid point, path)` and
//! results are reduced in index order.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{self, moments, ConcentrationReport, DirichletParams};
use crate::error::{Error, Result};
use crate::expconcave::{CosineGenerator, Generator};
use crate::numeric::median;
use crate::portfolio::{CosinePolicy, Policy};
use crate::sequences::pareto_target;
use crate::valuation::{calibrate, FernholzAccumulator, WealthAccumulator};
use crate::wfsim::{self, escape_summary, WFConfig};

pub const ASTRA_SCHEMA: &str = "astra-report/1";
pub const CONCENTRATION_SCHEMA: &str = "concentration-report/1";
pub const STATIONARITY_SCHEMA: &str = "stationarity-report/1";

/// Horizon rule `delta_n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeltaRule {
    /// `(log n)^(-1/4)`.
    #[default]
    LogQuarter,
    /// `(log n)^(-exponent)` with `exponent` in `(0, 1/2)`.
    LogPower { exponent: f64 },
}

impl DeltaRule {
    pub fn exponent(&self) -> f64 {
        match self {
            Self::LogQuarter => 0.25,
            Self::LogPower { exponent } => *exponent,
        }
    }

    pub fn horizon(&self, n: usize) -> f64 {
        (n as f64).ln().powf(-self.exponent())
    }

    /// Both `delta_n -> 0` and `delta_n sqrt(log n) -> infinity` hold exactly
    /// when the exponent lies in `(0, 1/2)`.
    pub fn validate(&self) -> Result<()> {
        let e = self.exponent();
        if !(e > 0.0 && e < 0.5) {
            return Err(Error::param("delta_rule", format!("exponent {e} not in (0, 1/2)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AstraSweepConfig {
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    pub paths_per_n: usize,
    pub epsilon: f64,
    pub b1: f64,
    pub b2: f64,
    pub delta_rule: DeltaRule,
    pub seed: u64,
    /// Step size; `None` uses the simulator default for each `n`.
    pub dt: Option<f64>,
    pub time_change_rate: f64,
}

impl Default for AstraSweepConfig {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            n_grid: vec![50, 200, 800],
            paths_per_n: 200,
            epsilon: 0.5,
            b1: 1.1,
            b2: 1.4,
            delta_rule: DeltaRule::LogQuarter,
            seed: 0,
            dt: None,
            time_change_rate: 1.0,
        }
    }
}

impl AstraSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1.0 < self.b1 && self.b1 < self.b2 && self.b2 < std::f64::consts::FRAC_PI_2) {
            return Err(Error::param(
                "b1",
                format!("need 1 < b1 < b2 < pi/2, got b1={}, b2={}", self.b1, self.b2),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("{} not in (0, 1)", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("{} not in [0, 1]", self.alpha)));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|n| *n < 3) {
            return Err(Error::param("n_grid", "needs entries n >= 3"));
        }
        if self.paths_per_n == 0 {
            return Err(Error::param("paths_per_n", "must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::param("dt", format!("{dt} must be positive")));
            }
        }
        if !(self.time_change_rate > 0.0 && self.time_change_rate <= 1.0) {
            return Err(Error::param(
                "time_change_rate",
                format!("{} not in (0, 1]", self.time_change_rate),
            ));
        }
        self.delta_rule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AstraRecord {
    pub n: usize,
    pub delta_n: f64,
    pub dt: f64,
    pub c: f64,
    pub r_n: f64,
    pub paths: usize,
    pub median_log_v: f64,
    pub mean_log_v: f64,
    /// Fraction of paths with `log V(delta_n) > 0`.
    pub positive_fraction: f64,
    pub min_v: f64,
    /// Paths with `min V < 1 - epsilon - slack`, including invariant breaches.
    pub floor_violations: usize,
    pub q_hat: f64,
    pub q_se: f64,
    pub conditioned_paths: usize,
    /// Paths whose policy switched to the market before `delta_n`.
    pub exited_paths: usize,
    /// Paths that held a negative weight at some step.
    pub negative_weight_events: usize,
    /// `n R_n / sqrt(log n)`.
    pub g_ref: f64,
    pub drift_certificate_failures: usize,
    pub theta_monotone_failures: usize,
    pub invariant_breaches: usize,
    pub breach_messages: Vec<String>,
    /// Wall-clock seconds; excluded from the JSON so reports are reproducible.
    #[serde(skip)]
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AstraReport {
    pub schema_version: String,
    pub config: AstraSweepConfig,
    pub records: Vec<AstraRecord>,
}

/// Outcome of one valued path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub log_v: f64,
    pub min_v: f64,
    pub max_step: f64,
    pub floor_ok: bool,
    pub escape: Option<bool>,
    pub exited: bool,
    pub negative_steps: usize,
    /// `None` when the path starts outside the exit ball.
    pub drift_ok: Option<bool>,
    pub theta_monotone: bool,
    pub breach: Option<String>,
}

/// Parameters of the cosine strategy at one dimension.
#[derive(Debug, Clone)]
pub struct AstraSetup {
    pub wf: WFConfig,
    pub generator: CosineGenerator,
    pub c: f64,
}

impl AstraSweepConfig {
    /// The calibrated strategy and simulator for dimension `n`.
    pub fn setup(&self, n: usize) -> Result<AstraSetup> {
        let nu = pareto_target(self.alpha, n)?;
        let c = calibrate(self.epsilon, self.b2)?;
        let generator = CosineGenerator::sqrt_n(nu.clone(), c)?;
        let mut wf = WFConfig::new(nu, self.delta_rule.horizon(n))
            .with_rate(self.time_change_rate)
            .with_seed(self.seed);
        if let Some(dt) = self.dt {
            wf = wf.with_dt(dt);
        }
        wf.validate()?;
        Ok(AstraSetup { wf, generator, c })
    }
}

fn path_index(grid_index: usize, path: usize) -> u64 {
    ((grid_index as u64) << 32) | path as u64
}

/// Simulates and values one path of the sweep.
pub fn astra_path(cfg: &AstraSweepConfig, setup: &AstraSetup, index: u64) -> PathOutcome {
    let n = setup.generator.dim();
    let nu = setup.generator.center().clone();
    let mut policy = CosinePolicy::new(setup.generator.clone(), cfg.b2).expect("calibrated b2 lies inside the domain");
    let mut wealth = WealthAccumulator::new(n);
    let mut fernholz: Option<FernholzAccumulator> = None;
    let mut started = false;
    let mut start_radius = 0.0;
    let mut escaped = false;
    let dtau = setup.wf.dtau();

    let res = wfsim::walk_path(&setup.wf, index, |_, prev, next| {
        if !started {
            started = true;
            start_radius = setup.generator.radius(prev);
            if start_radius < cfg.b2 {
                fernholz = Some(FernholzAccumulator::new(setup.generator.clone(), cfg.b2, prev, dtau)?);
            }
            escaped = start_radius > cfg.b2;
        }
        wealth.step(&mut policy, prev, next)?;
        if let Some(f) = fernholz.as_mut() {
            f.step(prev, next)?;
        }
        if !escaped {
            let r = (n as f64 * crate::numeric::sq_dist(next, &nu)).sqrt();
            escaped = r > cfg.b2;
        }
        Ok(())
    });

    let breach = match &res {
        Ok(start) if !started => {
            start_radius = setup.generator.radius(start);
            escaped = start_radius > cfg.b2;
            None
        }
        Ok(_) => None,
        Err(e) => Some(e.to_string()),
    };
    let escape = (start_radius <= cfg.b1).then_some(escaped);
    let drift_ok = fernholz.as_ref().map(|f| {
        let k2 = f.generator().multiplier().powi(2);
        f.theta() >= 0.5 * k2 * f.realized_sq() - 1e-6 * f.theta().abs()
    });
    let min_v = if breach.is_some() { 0.0 } else { wealth.min_v() };
    let floor_ok = breach.is_none() && min_v >= 1.0 - cfg.epsilon - 2.0 * wealth.max_step();
    PathOutcome {
        log_v: wealth.log_v(),
        min_v,
        max_step: wealth.max_step(),
        floor_ok,
        escape,
        exited: policy.exited(),
        negative_steps: wealth.negative_steps(),
        drift_ok,
        theta_monotone: fernholz.as_ref().is_none_or(|f| f.theta_monotone()),
        breach,
    }
}

fn summarize(cfg: &AstraSweepConfig, setup: &AstraSetup, outcomes: &[PathOutcome], runtime: f64) -> AstraRecord {
    let n = setup.generator.dim();
    let r_n = setup.generator.center().sq_norm();
    let logs: Vec<f64> = outcomes.iter().map(|o| o.log_v).collect();
    let esc = escape_summary(outcomes.iter().map(|o| o.escape), cfg.b1).ok();
    let breach_messages: Vec<String> = outcomes.iter().filter_map(|o| o.breach.clone()).take(5).collect();
    AstraRecord {
        n,
        delta_n: setup.wf.horizon,
        dt: setup.wf.grid_dt(),
        c: setup.c,
        r_n,
        paths: outcomes.len(),
        median_log_v: median(&logs),
        mean_log_v: logs.iter().sum::<f64>() / logs.len() as f64,
        positive_fraction: logs.iter().filter(|v| **v > 0.0).count() as f64 / logs.len() as f64,
        min_v: outcomes.iter().map(|o| o.min_v).fold(f64::INFINITY, f64::min),
        floor_violations: outcomes.iter().filter(|o| !o.floor_ok).count(),
        q_hat: esc.map_or(f64::NAN, |e| e.q_hat),
        q_se: esc.map_or(f64::NAN, |e| e.se),
        conditioned_paths: esc.map_or(0, |e| e.conditioned),
        exited_paths: outcomes.iter().filter(|o| o.exited).count(),
        negative_weight_events: outcomes.iter().filter(|o| o.negative_steps > 0).count(),
        g_ref: n as f64 * r_n / (n as f64).ln().sqrt(),
        drift_certificate_failures: outcomes.iter().filter(|o| o.drift_ok == Some(false)).count(),
        theta_monotone_failures: outcomes.iter().filter(|o| !o.theta_monotone).count(),
        invariant_breaches: outcomes.iter().filter(|o| o.breach.is_some()).count(),
        breach_messages,
        runtime,
    }
}

/// Per-path outcomes for grid point `grid_index` of `cfg`.
pub fn astra_outcomes(cfg: &AstraSweepConfig, grid_index: usize) -> Result<(AstraSetup, Vec<PathOutcome>)> {
    cfg.validate()?;
    let n = *cfg
        .n_grid
        .get(grid_index)
        .ok_or_else(|| Error::param("grid_index", "out of range"))?;
    let setup = cfg.setup(n)?;
    let outcomes = (0..cfg.paths_per_n)
        .into_par_iter()
        .map(|p| astra_path(cfg, &setup, path_index(grid_index, p)))
        .collect();
    Ok((setup, outcomes))
}

pub fn astra_sweep(cfg: &AstraSweepConfig) -> Result<AstraReport> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.n_grid.len());
    for gi in 0..cfg.n_grid.len() {
        let t0 = Instant::now();
        let (setup, outcomes) = astra_outcomes(cfg, gi)?;
        let rec = summarize(cfg, &setup, &outcomes, t0.elapsed().as_secs_f64());
        log::info!(
            "astra n={} median log V={:.4} floor violations={} q_hat={:.4} ({:.1}s)",
            rec.n,
            rec.median_log_v,
            rec.floor_violations,
            rec.q_hat,
            rec.runtime
        );
        records.push(rec);
    }
    Ok(AstraReport {
        schema_version: ASTRA_SCHEMA.into(),
        config: cfg.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSweep {
    pub schema_version: String,
    pub alpha: f64,
    pub seed: u64,
    pub reports: Vec<ConcentrationReport>,
    /// Largest `p_upper r^2 / R_n` over every `(n, r)` cell.
    pub ratio_max: f64,
    /// `p_upper` nonincreasing in `n` at every `r`.
    pub tails_decrease_in_n: bool,
    /// `p_upper` nonincreasing in `r` at every `n`.
    pub tails_decrease_in_r: bool,
}

pub fn concentration_sweep(
    alpha: f64,
    n_grid: &[usize],
    r_grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<ConcentrationSweep> {
    if n_grid.is_empty() {
        return Err(Error::param("n_grid", "must not be empty"));
    }
    let reports = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| dirichlet::tail_report(alpha, n, r_grid, count, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let ratio_max = reports.iter().map(|r| r.c3_fit).fold(0.0, f64::max);
    let tails_decrease_in_n = (0..r_grid.len()).all(|j| {
        reports
            .windows(2)
            .all(|w| w[1].tails[j].p_upper <= w[0].tails[j].p_upper)
    });
    let tails_decrease_in_r = reports.iter().all(|rep| {
        rep.tails
            .windows(2)
            .all(|w| w[0].r >= w[1].r || w[1].p_upper <= w[0].p_upper)
    });
    Ok(ConcentrationSweep {
        schema_version: CONCENTRATION_SCHEMA.into(),
        alpha,
        seed,
        reports,
        ratio_max,
        tails_decrease_in_n,
        tails_decrease_in_r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityRow {
    pub t: f64,
    /// Largest `|z|` of the coordinate means against `nu_i`.
    pub max_abs_z_mean: f64,
    /// Largest `|z|` of the coordinate variances against `nu_i (1 - nu_i) / (n + 1)`.
    pub max_abs_z_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub schema_version: String,
    pub alpha: f64,
    pub n: usize,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub rows: Vec<StationarityRow>,
    pub max_abs_z: f64,
}

/// Marginal moments of stationary WF paths at `checkpoints` against the
/// Dirichlet moments. Checkpoints are rounded to the step grid.
pub fn stationarity_sweep(
    alpha: f64,
    n: usize,
    checkpoints: &[f64],
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<StationarityReport> {
    if paths < 2 {
        return Err(Error::param("paths", "need at least 2"));
    }
    if checkpoints.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::param("checkpoints", "times must be nonnegative"));
    }
    let nu = pareto_target(alpha, n)?;
    let horizon = checkpoints.iter().copied().fold(0.0, f64::max);
    let wf = WFConfig::new(nu.clone(), horizon).with_dt(dt).with_seed(seed);
    wf.validate()?;
    let marks: Vec<usize> = checkpoints.iter().map(|t| (t / dt).round() as usize).collect();

    let snaps: Vec<Vec<Vec<f64>>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![Vec::new(); marks.len()];
            let start = wfsim::walk_path(&wf, i, |k, _, next| {
                for (slot, m) in out.iter_mut().zip(&marks) {
                    if *m == k + 1 {
                        *slot = next.to_vec();
                    }
                }
                Ok(())
            })?;
            for (slot, m) in out.iter_mut().zip(&marks) {
                if *m == 0 {
                    *slot = start.to_vec();
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let m = moments(&DirichletParams::from_target(&nu));
    let count = paths as f64;
    let rows: Vec<StationarityRow> = marks
        .iter()
        .enumerate()
        .map(|(j, &mark)| {
            let mut zm = 0.0f64;
            let mut zv = 0.0f64;
            for i in 0..n {
                let xs: Vec<f64> = snaps.iter().map(|s| s[j][i]).collect();
                let mean = xs.iter().sum::<f64>() / count;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
                let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / count;
                let target_var = m.variance[i];
                zm = zm.max(((mean - m.mean[i]) / (target_var / count).sqrt()).abs());
                let se_var = ((m4 - var * var).max(0.0) / count).sqrt();
                if se_var > 0.0 {
                    zv = zv.max(((var - target_var) / se_var).abs());
                }
            }
            StationarityRow {
                t: mark as f64 * dt,
                max_abs_z_mean: zm,
                max_abs_z_var: zv,
            }
        })
        .collect();
    let max_abs_z = rows
        .iter()
        .map(|r| r.max_abs_z_mean.max(r.max_abs_z_var))
        .fold(0.0, f64::max);
    Ok(StationarityReport {
        schema_version: STATIONARITY_SCHEMA.into(),
        alpha,
        n,
        paths,
        dt,
        seed,
        rows,
        max_abs_z,
    })
}
