//! Python bindings for `astra-core`.
//!
//! Reports cross the boundary as JSON strings; vectors as Python lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use astra_core::dirichlet::{self, DirichletParams};
use astra_core::expconcave::{self, Generator, RadiusScaling};
use astra_core::experiments::{self, AstraSweepConfig};
use astra_core::market_data::{self, BacktestConfig, LoadOptions, SynthConfig};
use astra_core::portfolio::{self, Policy};
use astra_core::sequences;
use astra_core::valuation;
use astra_core::wfsim::{self, WFConfig};
use astra_core::SimplexPoint;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(v: Vec<f64>) -> PyResult<SimplexPoint> {
    SimplexPoint::new(v).map_err(err)
}

fn scaling(name: &str) -> PyResult<RadiusScaling> {
    match name {
        "sqrt_n" => Ok(RadiusScaling::SqrtN),
        "raw" => Ok(RadiusScaling::Raw),
        other => Err(err(format!("unknown radius scaling `{other}`"))),
    }
}

#[pyfunction]
fn hyperharmonic_weights(alpha: f64, n: usize) -> PyResult<Vec<f64>> {
    Ok(sequences::hyperharmonic_weights(alpha, n)
        .map_err(err)?
        .values()
        .to_vec())
}

/// `(h_n, sq_norm, r_n, rho_hat)` of the hyperharmonic sequence.
#[pyfunction]
fn sequence_stats(alpha: f64, n: usize) -> PyResult<(f64, f64, f64, f64)> {
    let s = sequences::stats(&sequences::hyperharmonic_weights(alpha, n).map_err(err)?);
    Ok((s.h_n, s.sq_norm, s.r_n, s.rho_hat))
}

#[pyfunction]
fn pareto_target(alpha: f64, n: usize) -> PyResult<Vec<f64>> {
    Ok(sequences::pareto_target(alpha, n).map_err(err)?.into_vec())
}

#[pyfunction]
fn rv_index_estimate(alpha: f64, n: usize) -> PyResult<f64> {
    sequences::rv_index_estimate(&sequences::hyperharmonic_weights(alpha, n).map_err(err)?).map_err(err)
}

#[pyfunction]
fn dirichlet_sample(gamma: Vec<f64>, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let params = DirichletParams::new(gamma).map_err(err)?;
    let xs = dirichlet::sample(&params, count, seed).map_err(err)?;
    Ok(xs.into_iter().map(SimplexPoint::into_vec).collect())
}

/// `(estimate, ci_low, ci_high, r_n)`.
#[pyfunction]
fn estimate_mean_norm(alpha: f64, n: usize, count: usize, seed: u64) -> PyResult<(f64, f64, f64, f64)> {
    let e = dirichlet::estimate_mean_norm(alpha, n, count, seed).map_err(err)?;
    Ok((e.estimate, e.ci.0, e.ci.1, e.r_n))
}

/// `(empirical, standard_error, bound)`.
#[pyfunction]
fn gamma_sum_tail(n: usize, u: f64, count: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let g = dirichlet::gamma_sum_tail(n, u, count, seed).map_err(err)?;
    Ok((g.empirical, g.se, g.bound))
}

#[pyfunction]
fn calibrate(epsilon: f64, b2: f64) -> PyResult<f64> {
    valuation::calibrate(epsilon, b2).map_err(err)
}

#[pyclass(name = "CosineGenerator", frozen)]
struct PyCosineGenerator {
    inner: expconcave::CosineGenerator,
}

#[pymethods]
impl PyCosineGenerator {
    #[new]
    #[pyo3(signature = (center, scale, scaling = "sqrt_n"))]
    fn new(center: Vec<f64>, scale: f64, scaling: &str) -> PyResult<Self> {
        let inner = expconcave::CosineGenerator::new(point(center)?, scale, self::scaling(scaling)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn multiplier(&self) -> f64 {
        self.inner.multiplier()
    }

    fn value(&self, x: Vec<f64>) -> f64 {
        self.inner.value(&x)
    }

    /// `None` outside the domain.
    fn gradient(&self, x: Vec<f64>) -> Option<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.inner.gradient(&x, &mut g).then_some(g)
    }

    fn radius(&self, x: Vec<f64>) -> f64 {
        self.inner.radius(&x)
    }

    fn in_domain(&self, x: Vec<f64>) -> bool {
        self.inner.in_domain(&x)
    }

    /// Weights of the generated portfolio at `p`.
    fn portfolio(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(portfolio::fgp_map(&self.inner, &p).map_err(err)?.into_vec())
    }

    /// `(max_eigenvalue, bound)` of the finite-difference certificate.
    #[pyo3(signature = (x, h = 1e-4))]
    fn kn_certificate(&self, x: Vec<f64>, h: f64) -> PyResult<(f64, f64)> {
        let c = expconcave::kn_certificate(&self.inner, &x, h).map_err(err)?;
        Ok((c.max_eigenvalue, c.bound))
    }

    fn __repr__(&self) -> String {
        format!(
            "CosineGenerator(n={}, scale={}, scaling={:?})",
            self.inner.dim(),
            self.inner.scale(),
            self.inner.scaling()
        )
    }
}

#[pyfunction]
fn diversity_weighted(p: Vec<f64>, exponent: f64) -> PyResult<Vec<f64>> {
    Ok(portfolio::diversity_weighted(&p, exponent).map_err(err)?.into_vec())
}

/// `(times, points, qv_sum)`.
type PathLists = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Simulated path as `(times, points, qv_sum)`.
#[pyfunction]
#[pyo3(signature = (nu, horizon, dt = None, rate = 1.0, seed = 0, index = 0))]
fn simulate(
    py: Python<'_>,
    nu: Vec<f64>,
    horizon: f64,
    dt: Option<f64>,
    rate: f64,
    seed: u64,
    index: u64,
) -> PyResult<PathLists> {
    let mut cfg = WFConfig::new(point(nu)?, horizon).with_rate(rate).with_seed(seed);
    if let Some(dt) = dt {
        cfg = cfg.with_dt(dt);
    }
    let t = py.detach(|| wfsim::simulate_path(&cfg, index)).map_err(err)?;
    let points = t.points.into_iter().map(SimplexPoint::into_vec).collect();
    Ok((t.times, points, t.qv_sum))
}

/// Log relative value of the market, equal-weighted and cosine portfolios
/// along a path given as a list of weight vectors.
#[pyfunction]
#[pyo3(signature = (points, center, scale, b2, dt = 1e-4))]
fn value_path(points: Vec<Vec<f64>>, center: Vec<f64>, scale: f64, b2: f64, dt: f64) -> PyResult<Vec<Vec<f64>>> {
    let pts = points.into_iter().map(point).collect::<PyResult<Vec<_>>>()?;
    let traj = wfsim::Trajectory::from_points(pts, dt, 1.0);
    let gen = expconcave::CosineGenerator::sqrt_n(point(center)?, scale).map_err(err)?;
    let mut cos = portfolio::CosinePolicy::new(gen, b2).map_err(err)?;
    let mut out = Vec::new();
    let mut policies: [&mut dyn Policy; 3] = [&mut portfolio::Market, &mut portfolio::EqualWeighted, &mut cos];
    for p in policies.iter_mut() {
        out.push(valuation::wealth_recursion(&traj, &mut **p).map_err(err)?.log_v);
    }
    Ok(out)
}

/// Runs the sweep described by a JSON config (missing keys take defaults)
/// and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn astra_sweep(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: AstraSweepConfig = serde_json::from_str(config_json).map_err(err)?;
    let report = py.detach(|| experiments::astra_sweep(&cfg)).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

/// Backtests a cap CSV; returns `(csv_text, summary_json)`.
#[pyfunction]
#[pyo3(signature = (path, config_json = "{}", fill_gaps = false))]
fn run_backtest(path: &str, config_json: &str, fill_gaps: bool) -> PyResult<(String, String)> {
    let cfg: BacktestConfig = serde_json::from_str(config_json).map_err(err)?;
    let table = market_data::load_caps_with(std::path::Path::new(path), LoadOptions { fill_gaps }).map_err(err)?;
    let report = market_data::run_backtest(&table, &cfg).map_err(err)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(err)?;
    let csv = String::from_utf8(buf).map_err(err)?;
    Ok((csv, serde_json::to_string(&report.summary).map_err(err)?))
}

/// Writes a synthetic cap table to `path`.
#[pyfunction]
#[pyo3(signature = (path, n = 100, alpha = 0.95, days = 130, seed = 0))]
fn synth_caps(path: &str, n: usize, alpha: f64, days: usize, seed: u64) -> PyResult<()> {
    let cfg = SynthConfig {
        n,
        alpha,
        days,
        seed,
        ..Default::default()
    };
    let table = market_data::synth_caps(&cfg).map_err(err)?;
    let file = std::fs::File::create(path).map_err(err)?;
    table.write_csv(file).map_err(err)
}

#[pymodule]
pub fn astra_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCosineGenerator>()?;
    m.add_function(wrap_pyfunction!(hyperharmonic_weights, m)?)?;
    m.add_function(wrap_pyfunction!(sequence_stats, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_target, m)?)?;
    m.add_function(wrap_pyfunction!(rv_index_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_sample, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mean_norm, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sum_tail, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(value_path, m)?)?;
    m.add_function(wrap_pyfunction!(astra_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(synth_caps, m)?)?;
    Ok(())
}
