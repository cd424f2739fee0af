//! Market-cap tables, weight diagnostics and the rolling-period backtest.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expconcave::{CosineGenerator, RadiusScaling};
use crate::numeric::ols;
use crate::portfolio::{CosinePolicy, DiversityWeighted, EqualWeighted, Market, Policy};
use crate::rng::stream;
use crate::sequences::pareto_target;
use crate::simplex::SimplexPoint;
use crate::valuation::WealthAccumulator;
use crate::wfsim::em_step_with_noise;

pub const BACKTEST_SCHEMA: &str = "backtest-summary/1";

/// Dates by assets matrix of positive capitalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapTable {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    /// Row-major, one row per date.
    pub caps: Vec<Vec<f64>>,
    /// Gap-filling actions taken during ingestion.
    pub ingest_notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Forward-fill runs of at most two missing cells and drop assets with
    /// longer (or leading) gaps. Off by default: missing cells are errors.
    pub fill_gaps: bool,
}

/// Longest run of missing cells that gap filling will repair.
pub const MAX_FILL: usize = 2;

impl CapTable {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, caps: Vec<Vec<f64>>) -> Result<Self> {
        if assets.len() < 2 {
            return Err(Error::Dimension {
                min: 2,
                got: assets.len(),
            });
        }
        if dates.len() != caps.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: caps.len(),
            });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::param("dates", format!("{} does not follow {}", w[1], w[0])));
            }
        }
        for (d, row) in dates.iter().zip(&caps) {
            if row.len() != assets.len() {
                return Err(Error::DimensionMismatch {
                    expected: assets.len(),
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::param(
                    "caps",
                    format!("cap {} for {} on {d} is not positive", row[j], assets[j]),
                ));
            }
        }
        Ok(Self {
            dates,
            assets,
            caps,
            ingest_notes: Vec::new(),
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.caps) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_caps(path: &Path) -> Result<CapTable> {
    load_caps_with(path, LoadOptions::default())
}

pub fn load_caps_with(path: &Path, opts: LoadOptions) -> Result<CapTable> {
    let file = std::fs::File::open(path)?;
    read_caps(file, path, opts)
}

/// Parses the `date,asset_1,...` format; `path` only labels errors.
pub fn read_caps<R: Read>(reader: R, path: &Path, opts: LoadOptions) -> Result<CapTable> {
    let perr = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(perr(1, "missing header".into())),
    };
    if header.get(0).map(str::trim) != Some("date") || header.len() < 3 {
        return Err(perr(1, "header must be `date,asset_1,asset_2,...`".into()));
    }
    let assets: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for a in &assets {
        if a.is_empty() || !seen.insert(a.clone()) {
            return Err(perr(1, format!("empty or duplicate asset id `{a}`")));
        }
    }
    let width = assets.len() + 1;
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(perr(line, format!("expected {width} fields, found {}", rec.len())));
        }
        let ds = rec.get(0).unwrap_or("").trim();
        let date =
            NaiveDate::parse_from_str(ds, "%Y-%m-%d").map_err(|e| perr(line, format!("bad date `{ds}`: {e}")))?;
        if let Some(last) = dates.last() {
            if date == *last {
                return Err(perr(line, format!("duplicate date {date}")));
            }
            if date < *last {
                return Err(perr(line, format!("date {date} precedes {last}")));
            }
        }
        let mut row = Vec::with_capacity(assets.len());
        for (j, s) in rec.iter().skip(1).enumerate() {
            let s = s.trim();
            if s.is_empty() {
                if !opts.fill_gaps {
                    return Err(perr(line, format!("missing cap for {} on {date}", assets[j])));
                }
                row.push(None);
                continue;
            }
            let v: f64 = s
                .parse()
                .map_err(|_| perr(line, format!("cap `{s}` for {} on {date} is not a number", assets[j])))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(perr(
                    line,
                    format!("cap {s} for {} on {date} is not positive", assets[j]),
                ));
            }
            row.push(Some(v));
        }
        dates.push(date);
        cells.push(row);
    }
    if dates.is_empty() {
        return Err(perr(2, "no data rows".into()));
    }
    let (assets, caps, notes) = fill_gaps(assets, &cells);
    let mut table = CapTable::new(dates, assets, caps)?;
    table.ingest_notes = notes;
    Ok(table)
}

fn fill_gaps(assets: Vec<String>, cells: &[Vec<Option<f64>>]) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
    let mut notes = Vec::new();
    let mut keep = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, name) in assets.iter().enumerate() {
        let mut col = Vec::with_capacity(cells.len());
        let mut run = 0usize;
        let mut filled = 0usize;
        let mut ok = true;
        for row in cells {
            match row[j] {
                Some(v) => {
                    run = 0;
                    col.push(v);
                }
                None => {
                    run += 1;
                    match col.last() {
                        Some(&prev) if run <= MAX_FILL => {
                            filled += 1;
                            col.push(prev);
                        }
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
        }
        if !ok {
            notes.push(format!(
                "dropped {name}: gap longer than {MAX_FILL} days or leading gap"
            ));
            continue;
        }
        if filled > 0 {
            notes.push(format!("forward-filled {filled} cells for {name}"));
        }
        keep.push(name.clone());
        columns.push(col);
    }
    let caps = (0..cells.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    (keep, caps, notes)
}

/// Market weights `X_i / sum_j X_j` per date.
pub fn to_weights(table: &CapTable) -> Vec<SimplexPoint> {
    table
        .caps
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            SimplexPoint::from_vec_unchecked(row.iter().map(|c| c / total).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalDistribution {
    /// `(log rank, log weight)` for the ranked weights.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope over the top `top_k` ranks.
    pub slope: f64,
    /// `-slope`.
    pub alpha_hat: f64,
}

/// Ranked capital distribution curve and its Pareto slope over `top_k` ranks.
pub fn capital_distribution(weights: &[f64], top_k: usize) -> Result<CapitalDistribution> {
    if !(2..=weights.len()).contains(&top_k) {
        return Err(Error::param("top_k", format!("{top_k} not in [2, {}]", weights.len())));
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, w)| (((i + 1) as f64).ln(), w.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = points[..top_k].iter().copied().unzip();
    let (slope, _) = ols(&x, &y);
    Ok(CapitalDistribution {
        points,
        slope,
        alpha_hat: -slope,
    })
}

/// Shannon entropy `-sum mu_i log mu_i` (natural log).
pub fn entropy(weights: &[f64]) -> f64 {
    -weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

pub fn entropy_series(weights: &[SimplexPoint]) -> Vec<f64> {
    weights.iter().map(|w| entropy(w)).collect()
}

/// `sqrt(n) ||mu(t) - mu(0)||` per date.
pub fn scaled_distance_series(weights: &[SimplexPoint]) -> Vec<f64> {
    let Some(first) = weights.first() else {
        return Vec::new();
    };
    weights.iter().map(|w| w.scaled_distance(first)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub period_length: usize,
    pub c: f64,
    pub radius_scaling: RadiusScaling,
    /// Sets the exit radius through `cos(c' b2) = 1 - epsilon`, where `c'`
    /// multiplies the scaled radius.
    pub epsilon: f64,
    pub diversity_exponent: f64,
    /// Ranks used in the Pareto slope fit; `None` means 70% of the assets.
    pub top_k: Option<usize>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            period_length: 10,
            c: 3.0,
            radius_scaling: RadiusScaling::Raw,
            epsilon: 0.5,
            diversity_exponent: 0.5,
            top_k: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period_length < 2 {
            return Err(Error::param("period_length", "must be at least 2"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("c", format!("{} must be positive", self.c)));
        }
        if self.radius_scaling == RadiusScaling::SqrtN && self.c > 1.0 {
            return Err(Error::param("c", "sqrt_n scaling needs c <= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("{} not in (0, 1)", self.epsilon)));
        }
        DiversityWeighted::new(self.diversity_exponent)?;
        Ok(())
    }

    pub fn top_k_for(&self, n: usize) -> usize {
        self.top_k.unwrap_or(((n as f64) * 0.7).ceil() as usize).clamp(2, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub date: NaiveDate,
    pub log_v_cosine: f64,
    pub log_v_equal: f64,
    pub log_v_diversity: f64,
    pub log_v_market: f64,
    pub entropy: f64,
    pub scaled_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub steps: usize,
    pub pareto_slope: f64,
    pub exit_radius: f64,
    pub exited: bool,
    /// Change in cosine `log V` over the period.
    pub cosine_log_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub end_log_v: f64,
    pub min_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub schema_version: String,
    pub config: BacktestConfig,
    pub n: usize,
    pub dates: usize,
    pub top_k: usize,
    pub cosine: PortfolioSummary,
    pub equal: PortfolioSummary,
    pub diversity: PortfolioSummary,
    pub market: PortfolioSummary,
    /// Days on which the cosine portfolio held a negative weight.
    pub negative_weight_days: usize,
    pub periods: Vec<PeriodSummary>,
    pub skipped_periods: Vec<String>,
    pub ingest_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub rows: Vec<BacktestRow>,
    pub summary: BacktestSummary,
}

pub const BACKTEST_COLUMNS: [&str; 7] = [
    "date",
    "log_v_cosine",
    "log_v_equal",
    "log_v_diversity",
    "log_v_market",
    "entropy",
    "scaled_distance",
];

impl BacktestReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(BACKTEST_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.date.format("%Y-%m-%d").to_string(),
                r.log_v_cosine.to_string(),
                r.log_v_equal.to_string(),
                r.log_v_diversity.to_string(),
                r.log_v_market.to_string(),
                r.entropy.to_string(),
                r.scaled_distance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summary_of(acc: &WealthAccumulator) -> PortfolioSummary {
    PortfolioSummary {
        end_log_v: acc.log_v(),
        min_v: acc.min_v(),
    }
}

/// Daily-rebalanced backtest over consecutive periods of `period_length`
/// trading days. Each period restarts the cosine portfolio centered at the
/// period's first weights; values chain across periods.
pub fn run_backtest(table: &CapTable, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate()?;
    let t_len = table.n_dates();
    if t_len < 2 * config.period_length {
        return Err(Error::Precondition(format!(
            "{t_len} dates, need at least {}",
            2 * config.period_length
        )));
    }
    let weights = to_weights(table);
    let n = table.n_assets();
    let entropy = entropy_series(&weights);
    let distance = scaled_distance_series(&weights);
    let top_k = config.top_k_for(n);

    let mut cos_acc = WealthAccumulator::new(n);
    let mut eq_acc = WealthAccumulator::new(n);
    let mut div_acc = WealthAccumulator::new(n);
    let mut mkt_acc = WealthAccumulator::new(n);
    let mut diversity = DiversityWeighted::new(config.diversity_exponent)?;

    let mut log_cos = vec![0.0; t_len];
    let mut log_eq = vec![0.0; t_len];
    let mut log_div = vec![0.0; t_len];
    let mut log_mkt = vec![0.0; t_len];
    let mut periods = Vec::new();
    let mut skipped = Vec::new();

    let mut start = 0usize;
    while start + 1 < t_len {
        let end = (start + config.period_length).min(t_len - 1);
        if end - start < 1 {
            let msg = format!("period starting {} has fewer than 2 days", table.dates[start]);
            log::warn!("{msg}");
            skipped.push(msg);
            break;
        }
        let x0 = weights[start].clone();
        let gen = CosineGenerator::new(x0.clone(), config.c, config.radius_scaling)?;
        let exit_radius = (1.0 - config.epsilon).acos() / gen.radius_multiplier();
        let mut policy = CosinePolicy::new(gen, exit_radius)?;
        let before = cos_acc.log_v();
        for k in start..end {
            let (p, q) = (&weights[k], &weights[k + 1]);
            log_cos[k + 1] = cos_acc.step(&mut policy, p, q)?;
            log_eq[k + 1] = eq_acc.step(&mut EqualWeighted, p, q)?;
            log_div[k + 1] = div_acc.step(&mut diversity, p, q)?;
            log_mkt[k + 1] = mkt_acc.step(&mut Market, p, q)?;
        }
        periods.push(PeriodSummary {
            start: table.dates[start],
            end: table.dates[end],
            steps: end - start,
            pareto_slope: capital_distribution(&x0, top_k)?.alpha_hat,
            exit_radius,
            exited: policy.exited(),
            cosine_log_return: cos_acc.log_v() - before,
        });
        start = end;
    }

    let rows = (0..t_len)
        .map(|k| BacktestRow {
            date: table.dates[k],
            log_v_cosine: log_cos[k],
            log_v_equal: log_eq[k],
            log_v_diversity: log_div[k],
            log_v_market: log_mkt[k],
            entropy: entropy[k],
            scaled_distance: distance[k],
        })
        .collect();
    let summary = BacktestSummary {
        schema_version: BACKTEST_SCHEMA.into(),
        config: config.clone(),
        n,
        dates: t_len,
        top_k,
        cosine: summary_of(&cos_acc),
        equal: summary_of(&eq_acc),
        diversity: summary_of(&div_acc),
        market: summary_of(&mkt_acc),
        negative_weight_days: cos_acc.negative_steps(),
        periods,
        skipped_periods: skipped,
        ingest_notes: table.ingest_notes.clone(),
    };
    Ok(BacktestReport { rows, summary })
}

/// Parameters of a Wright-Fisher generated cap table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub alpha: f64,
    pub days: usize,
    /// Diffusion time per day; `None` gives `0.1 / (n days)`, which keeps the
    /// scaled distance from the first day of order `0.3`.
    pub daily_tau: Option<f64>,
    /// Euler steps per day.
    pub substeps: usize,
    /// Daily log-volatility of the total market capitalization.
    pub total_vol: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            alpha: 0.95,
            days: 130,
            daily_tau: None,
            substeps: 10,
            total_vol: 0.01,
            start: NaiveDate::from_ymd_opt(2024, 1, 2).expect("valid date"),
            seed: 0,
        }
    }
}

fn next_weekday(d: NaiveDate) -> NaiveDate {
    let mut d = d + Duration::days(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    d
}

/// Cap table whose weights follow a Wright-Fisher path started at the
/// Pareto target, one trading day per weekday.
pub fn synth_caps(cfg: &SynthConfig) -> Result<CapTable> {
    if cfg.days < 2 {
        return Err(Error::param("days", "must be at least 2"));
    }
    if cfg.substeps == 0 {
        return Err(Error::param("substeps", "must be positive"));
    }
    let nu = pareto_target(cfg.alpha, cfg.n)?;
    let tau = cfg.daily_tau.unwrap_or(0.1 / (cfg.n as f64 * cfg.days as f64));
    if !(tau > 0.0 && tau * cfg.n as f64 <= 0.5) {
        return Err(Error::param("daily_tau", format!("{tau} outside (0, 0.5 / n]")));
    }
    let mut rng = stream(cfg.seed, 0);
    let width = cfg.n.to_string().len();
    let assets: Vec<String> = (1..=cfg.n).map(|i| format!("A{i:0width$}")).collect();
    let mut dates = Vec::with_capacity(cfg.days);
    let mut caps = Vec::with_capacity(cfg.days);
    let mut date = cfg.start;
    let mut total = 1e12;
    let mut cur = nu.to_vec();
    let mut next = vec![0.0; cfg.n];
    let mut xi = vec![0.0; cfg.n];
    for day in 0..cfg.days {
        if day > 0 {
            let h = tau / cfg.substeps as f64;
            for _ in 0..cfg.substeps {
                xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                em_step_with_noise(&cur, &nu, h, &xi, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            let z: f64 = rng.sample(StandardNormal);
            total *= (cfg.total_vol * z).exp();
            date = next_weekday(date);
        }
        dates.push(date);
        caps.push(cur.iter().map(|w| w * total).collect());
    }
    CapTable::new(dates, assets, caps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub seeds: Vec<u64>,
    pub cosine_end_log_v: Vec<f64>,
    pub positive_fraction: f64,
    pub median_end_log_v: f64,
}

/// Backtests synthetic tables for every seed, in parallel across seeds.
pub fn backtest_campaign(synth: &SynthConfig, config: &BacktestConfig, seeds: &[u64]) -> Result<CampaignSummary> {
    let ends: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let table = synth_caps(&SynthConfig { seed, ..synth.clone() })?;
            Ok(run_backtest(&table, config)?.summary.cosine.end_log_v)
        })
        .collect::<Result<_>>()?;
    let positive = ends.iter().filter(|v| **v > 0.0).count() as f64 / ends.len().max(1) as f64;
    Ok(CampaignSummary {
        seeds: seeds.to_vec(),
        median_end_log_v: crate::numeric::median(&ends),
        cosine_end_log_v: ends,
        positive_fraction: positive,
    })
}
