//! Regularly varying weight sequences.
//!
//! A [`WeightSequence`] is a non-increasing positive sequence `a_1 >= a_2 >= ...`
//! with partial sums `H_n` and the inequality measure
//! `R_n = sum a_i^2 / H_n^2`. The hyperharmonic family `a_i = i^-alpha`
//! is the running example: its partial sums are regularly varying with
//! index `1 - alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::simplex::SimplexPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequence {
    values: Vec<f64>,
}

impl WeightSequence {
    /// Validates a non-increasing sequence with entries in `(0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Dimension {
                min: 2,
                got: values.len(),
            });
        }
        for (i, a) in values.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0 && *a <= 1.0) {
                return Err(Error::InvalidSequence(format!("a_{} = {a} is outside (0, 1]", i + 1)));
            }
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidSequence(format!("not non-increasing at index {}", i + 2)));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `n` terms.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n < 2 || n > self.len() {
            return Err(Error::param(
                "n",
                format!("prefix length {n} outside [2, {}]", self.len()),
            ));
        }
        Ok(Self {
            values: self.values[..n].to_vec(),
        })
    }

    /// Running partial sums `H_1, ..., H_n`, compensated.
    pub fn partial_sums(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::new();
        self.values
            .iter()
            .map(|a| {
                acc.add(*a);
                acc.value()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqStats {
    pub n: usize,
    pub h_n: f64,
    pub sq_norm: f64,
    pub r_n: f64,
    pub rho_hat: f64,
}

/// `a_i = i^-alpha` for `i = 1..=n`.
pub fn hyperharmonic_weights(alpha: f64, n: usize) -> Result<WeightSequence> {
    if n < 2 {
        return Err(Error::Dimension { min: 2, got: n });
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::param("alpha", format!("{alpha} must be >= 0")));
    }
    let values = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
    WeightSequence::new(values)
}

pub fn stats(seq: &WeightSequence) -> SeqStats {
    let a = seq.values();
    let n = a.len();
    let h_n = compensated_sum(a.iter().copied());
    let sq_norm = compensated_sum(a.iter().map(|x| x * x));
    SeqStats {
        n,
        h_n,
        sq_norm,
        r_n: sq_norm / (h_n * h_n),
        rho_hat: n as f64 * a[n - 1] / h_n,
    }
}

/// `nu_i = i^-alpha / H_n`, the Pareto (Zipf) target weights.
pub fn pareto_target(alpha: f64, n: usize) -> Result<SimplexPoint> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("{alpha} outside [0, 1]")));
    }
    let seq = hyperharmonic_weights(alpha, n)?;
    SimplexPoint::normalize(seq.values)
}

/// `n (1 - H_{n-1} / H_n) = n a_n / H_n`.
pub fn rv_index_estimate(seq: &WeightSequence) -> Result<f64> {
    if seq.len() < 3 {
        return Err(Error::Dimension { min: 3, got: seq.len() });
    }
    Ok(stats(seq).rho_hat)
}

/// Normalized Karamata form of the partial sums:
/// `H_j = c_j * j^rho * exp(sum_{i<=j} (eps_i - rho) / i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KaramataReport {
    /// Normalizing sequence `c_j`.
    pub c_n: Vec<f64>,
    /// `eps_j = j a_j / H_j`.
    pub eps_n: Vec<f64>,
    pub rho: f64,
    /// `sum_{i<=j} (eps_i - rho) / i`.
    pub exponent: Vec<f64>,
}

impl KaramataReport {
    /// Rebuilds `H_j` from the representation.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.c_n
            .iter()
            .zip(&self.exponent)
            .enumerate()
            .map(|(k, (c, e))| c * ((k + 1) as f64).powf(self.rho) * e.exp())
            .collect()
    }
}

/// Mean of the last 10% (at least one) of the values.
fn tail_average(values: &[f64]) -> f64 {
    let m = (values.len() / 10).max(1);
    let tail = &values[values.len() - m..];
    tail.iter().sum::<f64>() / m as f64
}

pub fn karamata_decompose(seq: &WeightSequence) -> Result<KaramataReport> {
    if seq.len() < 3 {
        return Err(Error::Dimension { min: 3, got: seq.len() });
    }
    let h = seq.partial_sums();
    let eps_n: Vec<f64> = seq
        .values()
        .iter()
        .zip(&h)
        .enumerate()
        .map(|(k, (a, hj))| (k + 1) as f64 * a / hj)
        .collect();
    let rho = tail_average(&eps_n);
    let mut acc = CompensatedSum::new();
    let exponent: Vec<f64> = eps_n
        .iter()
        .enumerate()
        .map(|(k, e)| {
            acc.add((e - rho) / (k + 1) as f64);
            acc.value()
        })
        .collect();
    let c_n = h
        .iter()
        .zip(&exponent)
        .enumerate()
        .map(|(k, (hj, ex))| (hj.ln() - rho * ((k + 1) as f64).ln() - ex).exp())
        .collect();
    Ok(KaramataReport {
        c_n,
        eps_n,
        rho,
        exponent,
    })
}

/// Pass thresholds for [`check_assumptions`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionThresholds {
    /// Largest admissible index for the partial sums, plus slack.
    pub rho_max: f64,
    /// `nR_n / log n` at the last grid point must be at least this fraction
    /// of its value at the first grid point.
    pub nrn_floor_ratio: f64,
    /// Allowed gap between `n a_n / H_n` and the tail-averaged index.
    pub rho_gap: f64,
    /// Index estimates below this are treated as the slowly varying case.
    pub critical_rho: f64,
    /// Allowed relative error in `eps_n log n ~ 1`.
    pub zygmund_tol: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        Self {
            rho_max: 0.55,
            nrn_floor_ratio: 0.8,
            rho_gap: 0.05,
            critical_rho: 0.15,
            zygmund_tol: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub h_n: f64,
    pub r_n: f64,
    pub n_r_n_over_log_n: f64,
    pub rho_hat: f64,
    pub zygmund_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionDiagnostics {
    pub rows: Vec<DiagnosticRow>,
    /// Partial sums diverge with index in `[0, 1/2]`.
    pub regular_variation_ok: bool,
    /// `R_n` decreases along the grid and `nR_n / log n` stays bounded below.
    pub inequality_ok: bool,
    /// `n a_n / H_n` agrees with the tail-averaged index.
    pub index_limit_ok: bool,
    pub critical: bool,
    /// Zygmund condition; vacuously true outside the critical case.
    pub zygmund_ok: bool,
    pub all_ok: bool,
}

pub fn check_assumptions(seq: &WeightSequence, n_grid: &[usize]) -> Result<AssumptionDiagnostics> {
    check_assumptions_with(seq, n_grid, AssumptionThresholds::default())
}

pub fn check_assumptions_with(
    seq: &WeightSequence,
    n_grid: &[usize],
    th: AssumptionThresholds,
) -> Result<AssumptionDiagnostics> {
    if n_grid.is_empty() {
        return Err(Error::param("n_grid", "empty grid"));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("n_grid", "grid must be strictly increasing"));
    }
    let n_max = *n_grid.last().unwrap();
    if n_grid[0] < 3 || n_max > seq.len() {
        return Err(Error::param("n_grid", format!("grid must lie in [3, {}]", seq.len())));
    }
    let h = seq.partial_sums();
    let a = seq.values();
    let mut sq = CompensatedSum::new();
    let mut sq_prefix = Vec::with_capacity(n_max);
    for x in &a[..n_max] {
        sq.add(x * x);
        sq_prefix.push(sq.value());
    }
    let eps: Vec<f64> = (0..n_max).map(|k| (k + 1) as f64 * a[k] / h[k]).collect();

    let mut rows = Vec::with_capacity(n_grid.len());
    let mut eps_last = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let h_n = h[n - 1];
        let r_n = sq_prefix[n - 1] / (h_n * h_n);
        let log_n = (n as f64).ln();
        let rho_hat = tail_average(&eps[..n]);
        let eps_n = eps[n - 1];
        eps_last.push(eps_n);
        rows.push(DiagnosticRow {
            n,
            h_n,
            r_n,
            n_r_n_over_log_n: n as f64 * r_n / log_n,
            rho_hat,
            zygmund_ok: (eps_n * log_n - 1.0).abs() <= th.zygmund_tol,
        });
    }

    let last = rows.last().unwrap();
    let first = &rows[0];
    let regular_variation_ok = last.rho_hat <= th.rho_max && last.h_n > first.h_n;
    let r_decreasing = rows.windows(2).all(|w| w[1].r_n < w[0].r_n);
    let inequality_ok = r_decreasing && last.n_r_n_over_log_n >= th.nrn_floor_ratio * first.n_r_n_over_log_n;
    let index_limit_ok = (eps_last.last().unwrap() - last.rho_hat).abs() <= th.rho_gap;
    let critical = last.rho_hat < th.critical_rho;
    let zygmund_ok = !critical || last.zygmund_ok;
    Ok(AssumptionDiagnostics {
        all_ok: regular_variation_ok && inequality_ok && index_limit_ok && zygmund_ok,
        rows,
        regular_variation_ok,
        inequality_ok,
        index_limit_ok,
        critical,
        zygmund_ok,
    })
}
