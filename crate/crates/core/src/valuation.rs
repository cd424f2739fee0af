//! Relative value along market-weight paths.
//!
//! Two valuations of the same path are provided: the discrete self-financing
//! recursion `V(t_{k+1}) = V(t_k) sum_i pi_i mu_i(t_{k+1}) / mu_i(t_k)` and
//! Fernholz's decomposition `log V = phi(mu_t) - phi(mu_0) + Theta_t`, where
//! the drift process accumulates `-(1 / 2 Phi) Hess Phi (dmu, dmu)` over
//! realized increments. Both freeze once the path first reaches the exit
//! radius.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expconcave::{CosineGenerator, Generator};
use crate::portfolio::Policy;
use crate::wfsim::Trajectory;

/// `c = min(1, arccos(1 - epsilon) / b2)`, so that `cos(c b2) >= 1 - epsilon`.
pub fn calibrate(epsilon: f64, b2: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", format!("{epsilon} not in (0, 1)")));
    }
    if !(b2 > 0.0) {
        return Err(Error::param("b2", format!("{b2} must be positive")));
    }
    Ok(((1.0 - epsilon).acos() / b2).min(1.0))
}

/// Running self-financing recursion for one policy.
#[derive(Debug, Clone)]
pub struct WealthAccumulator {
    log_v: f64,
    min_log_v: f64,
    max_step: f64,
    negative_steps: usize,
    steps: usize,
    weights: Vec<f64>,
}

impl WealthAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            log_v: 0.0,
            min_log_v: 0.0,
            max_step: 0.0,
            negative_steps: 0,
            steps: 0,
            weights: vec![0.0; n],
        }
    }

    /// Rebalances to `policy` at `prev` and holds over the move to `next`.
    pub fn step<P: Policy + ?Sized>(&mut self, policy: &mut P, prev: &[f64], next: &[f64]) -> Result<f64> {
        policy.weights_into(prev, &mut self.weights)?;
        if self.weights.iter().any(|w| *w < 0.0) {
            self.negative_steps += 1;
        }
        let mut growth = 0.0;
        for (index, ((w, p), q)) in self.weights.iter().zip(prev).zip(next).enumerate() {
            if *p <= 0.0 {
                return Err(Error::ZeroCoordinate {
                    step: self.steps,
                    index,
                });
            }
            growth += w * q / p;
        }
        if !(growth > 0.0) {
            return Err(Error::NonPositiveWealth { step: self.steps });
        }
        let dlog = growth.ln();
        self.log_v += dlog;
        self.min_log_v = self.min_log_v.min(self.log_v);
        self.max_step = self.max_step.max(dlog.abs());
        self.steps += 1;
        Ok(self.log_v)
    }

    pub fn log_v(&self) -> f64 {
        self.log_v
    }

    pub fn min_v(&self) -> f64 {
        self.min_log_v.exp()
    }

    /// Largest `|Delta log V|` over a single step.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    /// Steps at which the held weights had a negative component.
    pub fn negative_steps(&self) -> usize {
        self.negative_steps
    }
}

/// Running Fernholz decomposition for a cosine generator with an exit radius.
#[derive(Debug, Clone)]
pub struct FernholzAccumulator {
    gen: CosineGenerator,
    exit_radius: f64,
    phi_start: f64,
    phi: f64,
    theta: f64,
    theta_monotone: bool,
    exited_at: Option<usize>,
    steps: usize,
    realized_sq: f64,
    rho_hat: f64,
    dtau: f64,
    delta: Vec<f64>,
}

impl FernholzAccumulator {
    pub fn new(gen: CosineGenerator, exit_radius: f64, start: &[f64], dtau: f64) -> Result<Self> {
        if !gen.in_domain(start) {
            return Err(Error::OutsideDomain {
                angle: gen.angle(start),
            });
        }
        let phi_start = gen.value(start);
        let delta = vec![0.0; gen.dim()];
        Ok(Self {
            gen,
            exit_radius,
            phi_start,
            phi: phi_start,
            theta: 0.0,
            theta_monotone: true,
            exited_at: None,
            steps: 0,
            realized_sq: 0.0,
            rho_hat: f64::INFINITY,
            dtau,
            delta,
        })
    }

    /// Accrues one step unless the exit has already happened at `prev`.
    pub fn step(&mut self, prev: &[f64], next: &[f64]) -> Result<()> {
        let k = self.steps;
        self.steps += 1;
        if self.exited_at.is_some() {
            return Ok(());
        }
        if self.gen.radius(prev) >= self.exit_radius {
            self.exited_at = Some(k);
            return Ok(());
        }
        for ((d, a), b) in self.delta.iter_mut().zip(next).zip(prev) {
            *d = a - b;
        }
        let d_theta = -0.5 * self.gen.hess_form_over_phi(prev, &self.delta);
        if d_theta < 0.0 {
            self.theta_monotone = false;
        }
        self.theta += d_theta;
        let sq: f64 = self.delta.iter().map(|d| d * d).sum();
        self.realized_sq += sq;
        if self.dtau > 0.0 {
            let mu_sq: f64 = prev.iter().map(|p| p * p).sum();
            self.rho_hat = self.rho_hat.min(sq / (mu_sq * self.dtau));
        }
        if !self.gen.in_domain(next) {
            return Err(Error::OutsideDomain {
                angle: self.gen.angle(next),
            });
        }
        self.phi = self.gen.value(next);
        Ok(())
    }

    pub fn log_v(&self) -> f64 {
        self.phi - self.phi_start + self.theta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn phi_start(&self) -> f64 {
        self.phi_start
    }

    pub fn exited_at(&self) -> Option<usize> {
        self.exited_at
    }

    pub fn theta_monotone(&self) -> bool {
        self.theta_monotone
    }

    /// `sum_steps sum_i (Delta mu_i)^2` before the exit.
    pub fn realized_sq(&self) -> f64 {
        self.realized_sq
    }

    /// `min_k sum_i (Delta mu_i)^2 / (sum_i mu_i^2 dtau)` before the exit.
    pub fn rho_hat(&self) -> f64 {
        self.rho_hat
    }

    pub fn generator(&self) -> &CosineGenerator {
        &self.gen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub times: Vec<f64>,
    pub log_v: Vec<f64>,
    /// Empty for a plain recursion.
    pub theta: Vec<f64>,
    /// Empty for a plain recursion.
    pub phi_path: Vec<f64>,
    /// Scaled radius `sqrt(n) ||mu - x0||`; empty for a plain recursion.
    pub radius: Vec<f64>,
    pub phi_start: f64,
    pub min_v: f64,
    pub exited_at: Option<f64>,
    /// Largest single-step `|Delta log V|`.
    pub max_step: f64,
}

impl ValuationResult {
    pub fn final_log_v(&self) -> f64 {
        *self.log_v.last().unwrap_or(&0.0)
    }

    /// Writes `t, log_v, theta, phi, radius`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "log_v", "theta", "phi", "radius"])?;
        let get = |v: &[f64], i: usize| v.get(i).map_or(String::new(), |x| x.to_string());
        for (i, t) in self.times.iter().enumerate() {
            w.write_record([
                t.to_string(),
                self.log_v[i].to_string(),
                get(&self.theta, i),
                get(&self.phi_path, i),
                get(&self.radius, i),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_path(traj: &Trajectory) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::param("trajectory", "empty path"));
    }
    for (k, p) in traj.points.iter().enumerate() {
        if let Some(index) = p.iter().position(|v| *v <= 0.0) {
            return Err(Error::ZeroCoordinate { step: k, index });
        }
    }
    Ok(())
}

/// `log V` of `policy` along `traj`, starting from `V(0) = 1`.
pub fn wealth_recursion<P: Policy + ?Sized>(traj: &Trajectory, policy: &mut P) -> Result<ValuationResult> {
    check_path(traj)?;
    let n = traj.points[0].dim();
    let mut acc = WealthAccumulator::new(n);
    let mut log_v = Vec::with_capacity(traj.len());
    log_v.push(0.0);
    let mut exited_at = None;
    for (k, w) in traj.points.windows(2).enumerate() {
        log_v.push(acc.step(policy, &w[0], &w[1])?);
        if exited_at.is_none() && policy.exited() {
            exited_at = Some(traj.times[k]);
        }
    }
    Ok(ValuationResult {
        times: traj.times.clone(),
        log_v,
        theta: Vec::new(),
        phi_path: Vec::new(),
        radius: Vec::new(),
        phi_start: 0.0,
        min_v: acc.min_v(),
        exited_at,
        max_step: acc.max_step(),
    })
}

/// Fernholz decomposition of the cosine portfolio's value along `traj`.
pub fn fernholz_decompose(traj: &Trajectory, gen: &CosineGenerator, exit_radius: f64) -> Result<ValuationResult> {
    check_path(traj)?;
    let start = &traj.points[0];
    if gen.radius(start) >= exit_radius {
        return Err(Error::Precondition(format!(
            "path starts at radius {} outside exit radius {exit_radius}",
            gen.radius(start)
        )));
    }
    let mut acc = FernholzAccumulator::new(gen.clone(), exit_radius, start, traj.dtau)?;
    let len = traj.len();
    let mut log_v = Vec::with_capacity(len);
    let mut theta = Vec::with_capacity(len);
    let mut phi_path = Vec::with_capacity(len);
    let radius: Vec<f64> = traj.points.iter().map(|p| gen.radius(p)).collect();
    log_v.push(0.0);
    theta.push(0.0);
    phi_path.push(acc.phi());
    for w in traj.points.windows(2) {
        acc.step(&w[0], &w[1])?;
        log_v.push(acc.log_v());
        theta.push(acc.theta());
        phi_path.push(acc.phi());
    }
    let min_log = log_v.iter().copied().fold(0.0, f64::min);
    let max_step = log_v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    Ok(ValuationResult {
        times: traj.times.clone(),
        log_v,
        theta,
        phi_path,
        radius,
        phi_start: acc.phi_start(),
        min_v: min_log.exp(),
        exited_at: acc.exited_at().map(|k| traj.times[k]),
        max_step,
    })
}

/// `min_v >= 1 - epsilon - 2 max_step`.
pub fn floor_certificate(result: &ValuationResult, epsilon: f64) -> bool {
    result.min_v >= 1.0 - epsilon - 2.0 * result.max_step
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub theta: f64,
    /// `(k^2 / 2) sum_steps sum_i (Delta mu_i)^2` before the exit.
    pub bound: f64,
    pub passes: bool,
    pub rho_hat: f64,
    /// `(rho_hat / 4)(n R_n - pi^2 / 2) t` with `R_n = ||x0||^2`.
    pub reference: f64,
}

/// Checks `Theta(t) >= (k^2 / 2) sum (Delta mu)^2 - 1e-6 Theta(t)` with the
/// realized quadratic variation recomputed from `traj`.
pub fn drift_floor_certificate(result: &ValuationResult, traj: &Trajectory, gen: &CosineGenerator) -> DriftCertificate {
    let n = gen.dim() as f64;
    let end = match result.exited_at {
        Some(t) => traj.times.iter().position(|s| *s >= t).unwrap_or(traj.len() - 1),
        None => traj.len() - 1,
    };
    let mut realized = 0.0;
    let mut rho_hat = f64::INFINITY;
    for w in traj.points[..=end].windows(2) {
        let sq: f64 = w[1].iter().zip(w[0].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        realized += sq;
        if traj.dtau > 0.0 {
            rho_hat = rho_hat.min(sq / (w[0].sq_norm() * traj.dtau));
        }
    }
    let theta = result.theta.get(end).copied().unwrap_or(0.0);
    let k2 = gen.multiplier() * gen.multiplier();
    let bound = 0.5 * k2 * realized;
    let rho_hat = if rho_hat.is_finite() { rho_hat } else { 0.0 };
    let r_n = gen.center().sq_norm();
    let t = traj.times[end];
    DriftCertificate {
        theta,
        bound,
        passes: theta >= bound - 1e-6 * theta.abs(),
        rho_hat,
        reference: 0.25 * rho_hat * (n * r_n - std::f64::consts::PI.powi(2) / 2.0) * t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{EqualWeighted, Market};
    use crate::simplex::SimplexPoint;

    fn path(points: &[[f64; 2]]) -> Trajectory {
        let pts = points.iter().map(|p| SimplexPoint::new(p.to_vec()).unwrap()).collect();
        Trajectory::from_points(pts, 0.1, 1.0)
    }

    #[test]
    fn calibration_rule() {
        let c = calibrate(0.5, 1.4).unwrap();
        assert!((c - (0.5f64).acos() / 1.4).abs() < 1e-15);
        assert_eq!(calibrate(0.99, 1.1).unwrap(), 1.0);
        assert!(calibrate(1.0, 1.4).is_err());
    }

    #[test]
    fn market_is_flat() {
        let t = path(&[[0.5, 0.5], [0.6, 0.4], [0.3, 0.7]]);
        let r = wealth_recursion(&t, &mut Market).unwrap();
        assert!(r.log_v.iter().all(|v| v.abs() < 1e-15));
        assert!((r.min_v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_weighted_hand_computed() {
        let t = path(&[[0.5, 0.5], [0.6, 0.4], [0.3, 0.7]]);
        let r = wealth_recursion(&t, &mut EqualWeighted).unwrap();
        let v1: f64 = 0.5 * 0.6 / 0.5 + 0.5 * 0.4 / 0.5;
        let v2 = v1 * (0.5 * 0.3 / 0.6 + 0.5 * 0.7 / 0.4);
        assert!((r.log_v[2] - v2.ln()).abs() < 1e-15);
    }

    #[test]
    fn flat_path_has_no_drift() {
        let g = CosineGenerator::sqrt_n(SimplexPoint::barycenter(2).unwrap(), 0.7).unwrap();
        let t = path(&[[0.55, 0.45], [0.55, 0.45], [0.55, 0.45]]);
        let r = fernholz_decompose(&t, &g, 1.4).unwrap();
        assert!(r.theta.iter().all(|v| *v == 0.0));
        assert!(r.log_v.iter().all(|v| *v == 0.0));
    }
}
