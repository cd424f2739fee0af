//! Wright-Fisher diffusion `WF(n nu)` on the simplex.
//!
//! The SDE is `dmu = (n/2)(nu - mu) dt + sigma(mu) dW` with
//! `sigma sigma' = Diag(mu) - mu mu'`, run under the constant time change
//! `Gamma_t = rate * t`. Paths start from the invariant law `Dirichlet(n nu)`
//! and are advanced by Euler-Maruyama with an `O(n)` rank-structured noise
//! factor.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletParams;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::simplex::SimplexPoint;

/// Lower clamp applied to every coordinate after a step.
pub const COORD_FLOOR: f64 = 1e-12;

/// `min(1e-4, 0.1 / n)`.
pub fn default_dt(n: usize) -> f64 {
    (0.1 / n as f64).min(1e-4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WFConfig {
    pub nu: SimplexPoint,
    pub dt: f64,
    pub horizon: f64,
    pub time_change_rate: f64,
    pub seed: u64,
}

impl WFConfig {
    /// Configuration with the default step, unit rate and seed 0.
    pub fn new(nu: SimplexPoint, horizon: f64) -> Self {
        let dt = default_dt(nu.dim());
        Self {
            nu,
            dt,
            horizon,
            time_change_rate: 1.0,
            seed: 0,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.time_change_rate = rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.nu.dim()
    }

    /// A zero horizon is accepted and yields single-point trajectories.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.horizon == 0.0 || (self.horizon >= self.dt && self.horizon.is_finite())) {
            return Err(Error::param(
                "horizon",
                format!("{} must be 0 or at least dt = {}", self.horizon, self.dt),
            ));
        }
        if !(self.time_change_rate > 0.0 && self.time_change_rate <= 1.0) {
            return Err(Error::param(
                "time_change_rate",
                format!("{} not in (0, 1]", self.time_change_rate),
            ));
        }
        Ok(())
    }

    /// Number of steps; the grid is `k * horizon / steps`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Clock step `dt` actually used on the grid.
    pub fn grid_dt(&self) -> f64 {
        match self.steps() {
            0 => 0.0,
            s => self.horizon / s as f64,
        }
    }

    /// Diffusion time elapsed per grid step, `rate * dt`.
    pub fn dtau(&self) -> f64 {
        self.time_change_rate * self.grid_dt()
    }
}

fn clamp_and_normalize(p: &mut [f64]) {
    let mut total = 0.0;
    for v in p.iter_mut() {
        if !(*v >= COORD_FLOOR) {
            *v = COORD_FLOOR;
        }
        total += *v;
    }
    p.iter_mut().for_each(|v| *v /= total);
}

/// A draw from `Dirichlet(n nu)`, floored like every simulated point.
pub fn stationary_start<R: Rng + ?Sized>(config: &WFConfig, rng: &mut R) -> Result<SimplexPoint> {
    let mut x = DirichletParams::from_target(&config.nu).sample_one(rng)?.into_vec();
    clamp_and_normalize(&mut x);
    Ok(SimplexPoint::from_vec_unchecked(x))
}

/// The noise term `sqrt(p_i) xi_i - p_i sum_j sqrt(p_j) xi_j`, which sums to
/// zero whenever `p` does.
pub fn diffusion_increment(p: &[f64], xi: &[f64], out: &mut [f64]) {
    let s: f64 = p.iter().zip(xi).map(|(pi, x)| pi.sqrt() * x).sum();
    for ((o, pi), x) in out.iter_mut().zip(p).zip(xi) {
        *o = pi.sqrt() * x - pi * s;
    }
}

/// One Euler-Maruyama step with given standard normals `xi`, followed by the
/// coordinate floor and renormalization.
pub fn em_step_with_noise(p: &[f64], nu: &[f64], dtau: f64, xi: &[f64], out: &mut [f64]) {
    let half_n = 0.5 * p.len() as f64;
    let sq = dtau.sqrt();
    let s: f64 = p.iter().zip(xi).map(|(pi, x)| pi.sqrt() * x).sum();
    for (((o, pi), ni), x) in out.iter_mut().zip(p).zip(nu).zip(xi) {
        *o = pi + half_n * (ni - pi) * dtau + sq * (pi.sqrt() * x - pi * s);
    }
    clamp_and_normalize(out);
}

pub fn em_step<R: Rng + ?Sized>(p: &SimplexPoint, config: &WFConfig, rng: &mut R) -> SimplexPoint {
    let xi: Vec<f64> = (0..p.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; p.dim()];
    em_step_with_noise(p, &config.nu, config.dtau(), &xi, &mut out);
    SimplexPoint::from_vec_unchecked(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<SimplexPoint>,
    /// Running `sum_i <mu_i>`, incremented by `sum_i p_i (1 - p_i) dtau`.
    pub qv_sum: Vec<f64>,
    /// `sum_i p_i^2` at each grid point.
    pub sq_sum_path: Vec<f64>,
    /// Diffusion time per step.
    pub dtau: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a trajectory from explicit points on a uniform grid.
    pub fn from_points(points: Vec<SimplexPoint>, dt: f64, rate: f64) -> Self {
        let dtau = rate * dt;
        let mut rec = Recorder::new(dtau);
        for p in &points {
            rec.push(p, dt);
        }
        let mut t = rec.finish();
        t.points = points;
        t
    }

    /// Largest scaled distance `sqrt(n) ||mu(t) - nu||` along the path.
    pub fn max_radius(&self, nu: &SimplexPoint) -> f64 {
        self.points.iter().map(|p| p.scaled_distance(nu)).fold(0.0, f64::max)
    }

    /// Writes `t, mu_1..mu_k, qv_sum` with `k = min(top_k, n)`.
    pub fn write_csv<W: Write>(&self, writer: W, top_k: usize) -> Result<()> {
        let k = top_k.min(self.points.first().map_or(0, |p| p.dim()));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("mu_{i}")));
        header.push("qv_sum".into());
        w.write_record(&header)?;
        for ((t, p), q) in self.times.iter().zip(&self.points).zip(&self.qv_sum) {
            let mut row = vec![t.to_string()];
            row.extend(p[..k].iter().map(|v| v.to_string()));
            row.push(q.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Recorder {
    dtau: f64,
    t: f64,
    traj: Trajectory,
}

impl Recorder {
    fn new(dtau: f64) -> Self {
        Self {
            dtau,
            t: 0.0,
            traj: Trajectory {
                times: Vec::new(),
                points: Vec::new(),
                qv_sum: Vec::new(),
                sq_sum_path: Vec::new(),
                dtau,
            },
        }
    }

    fn push(&mut self, p: &[f64], dt: f64) {
        let sq: f64 = p.iter().map(|v| v * v).sum();
        let qv = match self.traj.sq_sum_path.last() {
            None => 0.0,
            Some(prev_sq) => self.traj.qv_sum.last().unwrap() + (1.0 - prev_sq) * self.dtau,
        };
        if !self.traj.times.is_empty() {
            self.t += dt;
        }
        self.traj.times.push(self.t);
        self.traj.qv_sum.push(qv);
        self.traj.sq_sum_path.push(sq);
        self.traj.points.push(SimplexPoint::from_vec_unchecked(p.to_vec()));
    }

    fn finish(self) -> Trajectory {
        self.traj
    }
}

/// Runs path `index` of `config`, calling `visit(step, prev, next)` for every
/// step. Returns the starting point.
pub fn walk_path<F>(config: &WFConfig, index: u64, mut visit: F) -> Result<SimplexPoint>
where
    F: FnMut(usize, &[f64], &[f64]) -> Result<()>,
{
    config.validate()?;
    let mut rng = stream(config.seed, index);
    let start = stationary_start(config, &mut rng)?;
    let n = start.dim();
    let dtau = config.dtau();
    let mut cur = start.to_vec();
    let mut next = vec![0.0; n];
    let mut xi = vec![0.0; n];
    for k in 0..config.steps() {
        fill_normals(&mut rng, &mut xi);
        em_step_with_noise(&cur, &config.nu, dtau, &xi, &mut next);
        visit(k, &cur, &next)?;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(start)
}

fn fill_normals(rng: &mut StreamRng, xi: &mut [f64]) {
    xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
}

/// Path `index` of `config` as a stored trajectory.
pub fn simulate_path(config: &WFConfig, index: u64) -> Result<Trajectory> {
    let dt = config.grid_dt();
    let mut rec = Recorder::new(config.dtau());
    let start = walk_path(config, index, |k, prev, next| {
        if k == 0 {
            rec.push(prev, dt);
        }
        rec.push(next, dt);
        Ok(())
    })?;
    if rec.traj.points.is_empty() {
        rec.push(&start, dt);
    }
    Ok(rec.finish())
}

/// Path 0 of `config`.
pub fn simulate(config: &WFConfig) -> Result<Trajectory> {
    simulate_path(config, 0)
}

/// Paths `0..count`, in index order regardless of scheduling.
pub fn simulate_batch(config: &WFConfig, count: usize) -> Result<Vec<Trajectory>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_path(config, i))
        .collect()
}

/// Path `index` simulated at step sizes `dt / 2^l` for `l = 0..levels`, all
/// driven by the same Brownian path: each coarse normal is the scaled sum of
/// the finer normals it covers. Element `l` of the result uses `dt / 2^l`.
pub fn simulate_matched(config: &WFConfig, index: u64, levels: usize) -> Result<Vec<Trajectory>> {
    config.validate()?;
    if levels == 0 {
        return Err(Error::param("levels", "must be at least 1"));
    }
    let mut rng = stream(config.seed, index);
    let start = stationary_start(config, &mut rng)?;
    let n = start.dim();
    let coarse_steps = config.steps();
    let fine_factor = 1usize << (levels - 1);
    let fine_steps = coarse_steps * fine_factor;

    struct Level {
        every: usize,
        dt: f64,
        acc: Vec<f64>,
        cur: Vec<f64>,
        next: Vec<f64>,
        rec: Recorder,
    }
    let mut lv: Vec<Level> = (0..levels)
        .map(|l| {
            let dt = config.grid_dt() / (1usize << l) as f64;
            let mut rec = Recorder::new(config.time_change_rate * dt);
            rec.push(&start, dt);
            Level {
                every: fine_factor >> l,
                dt,
                acc: vec![0.0; n],
                cur: start.to_vec(),
                next: vec![0.0; n],
                rec,
            }
        })
        .collect();
    let mut xi = vec![0.0; n];
    for k in 1..=fine_steps {
        fill_normals(&mut rng, &mut xi);
        for level in lv.iter_mut() {
            level.acc.iter_mut().zip(&xi).for_each(|(a, x)| *a += x);
            if k % level.every == 0 {
                let scale = (level.every as f64).sqrt().recip();
                level.acc.iter_mut().for_each(|a| *a *= scale);
                em_step_with_noise(
                    &level.cur,
                    &config.nu,
                    config.time_change_rate * level.dt,
                    &level.acc,
                    &mut level.next,
                );
                level.rec.push(&level.next, level.dt);
                std::mem::swap(&mut level.cur, &mut level.next);
                level.acc.iter_mut().for_each(|a| *a = 0.0);
            }
        }
    }
    Ok(lv.into_iter().map(|l| l.rec.finish()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub q_hat: f64,
    pub se: f64,
    /// Paths starting within `b1`.
    pub conditioned: usize,
    /// Conditioned paths reaching `b2`.
    pub escaped: usize,
}

/// Escape outcome of one path given its scaled radii: `None` when the start
/// lies outside `b1`, otherwise whether any radius exceeds `b2`.
pub fn escape_outcome<I: IntoIterator<Item = f64>>(radii: I, b1: f64, b2: f64) -> Option<bool> {
    let mut it = radii.into_iter();
    let first = it.next()?;
    if first > b1 {
        return None;
    }
    Some(first > b2 || it.any(|r| r > b2))
}

/// Aggregates per-path escape outcomes into `q_hat` and its standard error.
pub fn escape_summary<I: IntoIterator<Item = Option<bool>>>(outcomes: I, b1: f64) -> Result<EscapeStats> {
    let (mut conditioned, mut escaped) = (0usize, 0usize);
    for o in outcomes.into_iter().flatten() {
        conditioned += 1;
        escaped += usize::from(o);
    }
    if conditioned == 0 {
        return Err(Error::EmptyConditioning { b1 });
    }
    let q = escaped as f64 / conditioned as f64;
    Ok(EscapeStats {
        q_hat: q,
        se: (q * (1.0 - q) / conditioned as f64).sqrt(),
        conditioned,
        escaped,
    })
}

/// Empirical probability of leaving the `b2` ball before the horizon among
/// paths starting inside the `b1` ball.
pub fn escape_stats(paths: &[Trajectory], nu: &SimplexPoint, b1: f64, b2: f64) -> Result<EscapeStats> {
    if !(1.0 < b1 && b1 < b2) {
        return Err(Error::param("b1", format!("need 1 < b1 < b2, got b1={b1}, b2={b2}")));
    }
    escape_summary(
        paths
            .iter()
            .map(|p| escape_outcome(p.points.iter().map(|x| x.scaled_distance(nu)), b1, b2)),
        b1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::pareto_target;

    #[test]
    fn default_dt_rule() {
        assert_eq!(default_dt(100), 1e-4);
        assert_eq!(default_dt(2000), 0.1 / 2000.0);
    }

    #[test]
    fn zero_noise_is_pure_drift() {
        let p = [0.7, 0.2, 0.1];
        let nu = [0.4, 0.4, 0.2];
        let mut out = [0.0; 3];
        em_step_with_noise(&p, &nu, 0.01, &[0.0; 3], &mut out);
        for i in 0..3 {
            let want = p[i] + 1.5 * (nu[i] - p[i]) * 0.01;
            assert!((out[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn diffusion_increment_sums_to_zero() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let mut out = [0.0; 4];
        diffusion_increment(&p, &[0.3, -1.2, 0.8, 2.0], &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_gives_single_point() {
        let cfg = WFConfig::new(pareto_target(0.75, 10).unwrap(), 0.0);
        let t = simulate(&cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.qv_sum, vec![0.0]);
    }

    #[test]
    fn matched_levels_share_endpoints_in_time() {
        let cfg = WFConfig::new(pareto_target(0.75, 20).unwrap(), 0.01).with_dt(1e-3);
        let lv = simulate_matched(&cfg, 3, 3).unwrap();
        assert_eq!(lv[0].len(), 11);
        assert_eq!(lv[2].len(), 41);
        assert_eq!(lv[0].points[0], lv[2].points[0]);
        assert!((lv[2].times[40] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn single_level_matches_plain_path() {
        let cfg = WFConfig::new(pareto_target(0.75, 10).unwrap(), 0.005)
            .with_dt(1e-3)
            .with_seed(9);
        let a = simulate_path(&cfg, 4).unwrap();
        let b = simulate_matched(&cfg, 4, 1).unwrap().remove(0);
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn escape_outcome_rules() {
        assert_eq!(escape_outcome([1.2, 0.5], 1.1, 1.4), None);
        assert_eq!(escape_outcome([1.0, 1.5], 1.1, 1.4), Some(true));
        assert_eq!(escape_outcome([1.0], 1.1, 1.4), Some(false));
    }
}
