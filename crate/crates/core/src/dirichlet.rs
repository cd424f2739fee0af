//! Dirichlet sampling through normalized gamma variates, exact moments, and
//! Monte Carlo reports on the concentration of `sqrt(n) ||X - nu||`.
//!
//! Gamma variates are generated in log space. Shapes at or above one use the
//! Marsaglia-Tsang squeeze; shapes below one use the boost identity
//! `G(a) = G(a + 1) * U^(1/a)`, evaluated as `ln G(a + 1) + ln(U) / a` so that
//! tiny shapes (routine for Pareto targets) never underflow before the
//! normalization step.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::rng::{stream, StreamRng};
use crate::sequences::{hyperharmonic_weights, pareto_target, stats};
use crate::simplex::SimplexPoint;

/// Retries for a Dirichlet draw whose normalized coordinates underflow.
pub const MAX_RETRIES: usize = 16;

/// Natural log of a Gamma(`shape`, 1) variate.
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        return sample_ln_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = 1.0 - rng.random::<f64>();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return (d * v).ln();
        }
    }
}

/// A Gamma(`shape`, 1) variate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    sample_ln_gamma(shape, rng).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    gamma: Vec<f64>,
}

impl DirichletParams {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() < 2 {
            return Err(Error::Dimension {
                min: 2,
                got: gamma.len(),
            });
        }
        if let Some((i, g)) = gamma.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::param("gamma", format!("entry {i} = {g} is not positive")));
        }
        Ok(Self { gamma })
    }

    /// `gamma = n * nu`, the stationary law of the Wright-Fisher model.
    pub fn from_target(nu: &SimplexPoint) -> Self {
        let n = nu.dim() as f64;
        Self {
            gamma: nu.iter().map(|v| n * v).collect(),
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.gamma.iter().copied())
    }

    /// Draws one point into `out`, reusing its allocation.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) -> Result<()> {
        out.resize(self.dim(), 0.0);
        for _ in 0..MAX_RETRIES {
            let mut max = f64::NEG_INFINITY;
            for (o, g) in out.iter_mut().zip(&self.gamma) {
                *o = sample_ln_gamma(*g, rng);
                max = max.max(*o);
            }
            if !max.is_finite() {
                continue;
            }
            let mut sum = 0.0;
            for o in out.iter_mut() {
                *o = (*o - max).exp();
                sum += *o;
            }
            let mut ok = true;
            for o in out.iter_mut() {
                *o /= sum;
                ok &= o.is_finite() && *o > 0.0;
            }
            if ok {
                return Ok(());
            }
        }
        Err(Error::Sampling {
            retries: MAX_RETRIES,
            reason: "normalized gamma coordinates underflowed".into(),
        })
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimplexPoint> {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_into(rng, &mut out)?;
        Ok(SimplexPoint::from_vec_unchecked(out))
    }
}

/// `count` independent draws; sample `i` uses stream `i` of `seed`.
pub fn sample(params: &DirichletParams, count: usize, seed: u64) -> Result<Vec<SimplexPoint>> {
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    (0..count)
        .into_par_iter()
        .map(|i| params.sample_one(&mut stream(seed, i as u64)))
        .collect()
}

/// Applies `stat` to `count` draws without keeping them.
pub fn map_samples<T, F>(params: &DirichletParams, count: usize, seed: u64, stat: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(params.dim()),
            |buf, i| {
                let mut rng: StreamRng = stream(seed, i as u64);
                params.sample_into(&mut rng, buf)?;
                Ok(stat(buf))
            },
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: SimplexPoint,
    pub variance: Vec<f64>,
}

/// Mean `gamma / |gamma|` and variance `nu (1 - nu) / (|gamma| + 1)`.
pub fn moments(params: &DirichletParams) -> Moments {
    let total = params.total();
    let mean: Vec<f64> = params.gamma.iter().map(|g| g / total).collect();
    let variance = mean.iter().map(|m| m * (1.0 - m) / (total + 1.0)).collect();
    Moments {
        mean: SimplexPoint::from_vec_unchecked(mean),
        variance,
    }
}

fn scaled_norm(x: &[f64], nu: &[f64]) -> f64 {
    let n = nu.len() as f64;
    (n * crate::numeric::sq_dist(x, nu)).sqrt()
}

/// `R_n` of the hyperharmonic sequence, equal to `sum nu_i^2` for the Pareto target.
pub fn pareto_r_n(alpha: f64, n: usize) -> Result<f64> {
    Ok(stats(&hyperharmonic_weights(alpha, n)?).r_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanNormEstimate {
    pub estimate: f64,
    /// 95% normal-approximation interval.
    pub ci: (f64, f64),
    pub r_n: f64,
    /// `sqrt(2/pi (1 - R_n))`.
    pub lower_reference: f64,
    /// `sqrt(1 - R_n)`.
    pub upper_reference: f64,
}

impl MeanNormEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }
}

/// Monte Carlo estimate of `E sqrt(n) ||X - nu||` for `X ~ Dirichlet(n nu)`
/// with the Pareto target `nu`.
pub fn estimate_mean_norm(alpha: f64, n: usize, count: usize, seed: u64) -> Result<MeanNormEstimate> {
    if count < 1000 {
        return Err(Error::param("count", format!("{count} < 1000")));
    }
    let nu = pareto_target(alpha, n)?;
    let params = DirichletParams::from_target(&nu);
    let ys = map_samples(&params, count, seed, |x| scaled_norm(x, &nu))?;
    let (mean, sd) = mean_sd(&ys);
    let hw = 1.96 * sd / (count as f64).sqrt();
    let r_n = nu.sq_norm();
    Ok(MeanNormEstimate {
        estimate: mean,
        ci: (mean - hw, mean + hw),
        r_n,
        lower_reference: (2.0 / std::f64::consts::PI * (1.0 - r_n)).sqrt(),
        upper_reference: (1.0 - r_n).sqrt(),
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

fn bernoulli_se(p: f64, count: usize) -> f64 {
    (p * (1.0 - p) / count as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub r: f64,
    /// Empirical `P(sqrt(n)||X - nu|| > 1 + r)`.
    pub p_upper: f64,
    /// Empirical `P(sqrt(n)||X - nu|| < 1/2 - r)`.
    pub p_lower: f64,
    /// Standard error of `p_upper`.
    pub se: f64,
    pub se_lower: f64,
    /// `c3 R_n / r^2` with the fitted `c3`.
    pub critical_bound: f64,
    /// `p_upper r^2 / R_n`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub alpha: f64,
    pub n: usize,
    pub count: usize,
    pub r_n: f64,
    pub mean_norm: f64,
    pub ci: (f64, f64),
    /// Smallest constant with `p_upper <= c3 R_n / r^2` on the grid.
    pub c3_fit: f64,
    pub tails: Vec<TailRow>,
}

pub fn tail_report(alpha: f64, n: usize, r_grid: &[f64], count: usize, seed: u64) -> Result<ConcentrationReport> {
    if count < 10_000 {
        return Err(Error::param("count", format!("{count} < 10000")));
    }
    if r_grid.is_empty() || r_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::param("r_grid", "every r must be positive"));
    }
    let nu = pareto_target(alpha, n)?;
    let params = DirichletParams::from_target(&nu);
    let ys = map_samples(&params, count, seed, |x| scaled_norm(x, &nu))?;
    let (mean, sd) = mean_sd(&ys);
    let hw = 1.96 * sd / (count as f64).sqrt();
    let r_n = nu.sq_norm();

    let mut tails: Vec<TailRow> = r_grid
        .iter()
        .map(|&r| {
            let up = ys.iter().filter(|y| **y > 1.0 + r).count() as f64 / count as f64;
            let lo = ys.iter().filter(|y| **y < 0.5 - r).count() as f64 / count as f64;
            TailRow {
                r,
                p_upper: up,
                p_lower: lo,
                se: bernoulli_se(up, count),
                se_lower: bernoulli_se(lo, count),
                critical_bound: 0.0,
                ratio: up * r * r / r_n,
            }
        })
        .collect();
    let c3_fit = tails.iter().map(|t| t.ratio).fold(0.0, f64::max);
    for t in &mut tails {
        t.critical_bound = c3_fit * r_n / (t.r * t.r);
    }
    Ok(ConcentrationReport {
        alpha,
        n,
        count,
        r_n,
        mean_norm: mean,
        ci: (mean - hw, mean + hw),
        c3_fit,
        tails,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTail {
    pub n: f64,
    pub u: f64,
    pub count: usize,
    /// Empirical `P(|S_n - n| > u sqrt(n))`.
    pub empirical: f64,
    pub se: f64,
    /// `2 exp(-u^2 / 4)`.
    pub bound: f64,
    pub passes: bool,
}

/// Deviation of `S_n = sum Z_i`, `Z_i ~ Gamma(gamma_i, 1)`, from `n = sum gamma_i`.
pub fn gamma_sum_tail_for(params: &DirichletParams, u: f64, count: usize, seed: u64) -> Result<GammaTail> {
    let n = params.total();
    if !(u >= 0.0 && n > u * u) {
        return Err(Error::Precondition(format!("need n > u^2, got n = {n}, u = {u}")));
    }
    if count == 0 {
        return Err(Error::param("count", "must be at least 1"));
    }
    let thresh = u * n.sqrt();
    let hits: usize = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let s: f64 = params.gamma.iter().map(|g| sample_gamma(*g, &mut rng)).sum();
            usize::from((s - n).abs() > thresh)
        })
        .sum();
    let p = hits as f64 / count as f64;
    let se = bernoulli_se(p, count);
    let bound = 2.0 * (-u * u / 4.0).exp();
    Ok(GammaTail {
        n,
        u,
        count,
        empirical: p,
        se,
        bound,
        passes: p <= bound + 3.0 * se,
    })
}

/// [`gamma_sum_tail_for`] with `n` unit-shape variates, so `S_n ~ Gamma(n, 1)`.
pub fn gamma_sum_tail(n: usize, u: f64, count: usize, seed: u64) -> Result<GammaTail> {
    gamma_sum_tail_for(&DirichletParams::new(vec![1.0; n.max(2)])?, u, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn moments_match_closed_forms() {
        let m = moments(&DirichletParams::new(vec![2.0, 2.0]).unwrap());
        assert_eq!(m.mean.as_slice(), &[0.5, 0.5]);
        assert!((m.variance[0] - 0.05).abs() < 1e-15);
        let m = moments(&DirichletParams::new(vec![1.0, 1.0]).unwrap());
        assert!((m.variance[0] - 1.0 / 12.0).abs() < 1e-15);
        let m = moments(&DirichletParams::new(vec![0.3, 1.7, 4.0, 0.01]).unwrap());
        assert!((m.mean.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_params() {
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0]).is_err());
    }

    #[test]
    fn tiny_shapes_stay_in_open_simplex() {
        let p = DirichletParams::new(vec![1e-3, 2e-3, 5.0, 1e-2]).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..2000 {
            let x = p.sample_one(&mut rng).unwrap();
            assert!(x.iter().all(|v| *v > 0.0));
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_mean_and_variance() {
        for &shape in &[0.2, 0.7, 1.0, 3.5] {
            let mut rng = stream(9, (shape * 10.0) as u64);
            let m = 200_000;
            let xs: Vec<f64> = (0..m).map(|_| sample_gamma(shape, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
            let se = (shape / m as f64).sqrt();
            assert!((mean - shape).abs() < 4.0 * se, "shape {shape}: mean {mean}");
            assert!((var - shape).abs() / shape < 0.05, "shape {shape}: var {var}");
        }
    }

    #[test]
    fn gamma_tail_preconditions() {
        assert!(gamma_sum_tail(4, 2.0, 10, 0).is_err());
        let t = gamma_sum_tail(100, 0.0, 100, 0).unwrap();
        assert_eq!(t.bound, 2.0);
        assert!(t.passes);
    }

    #[test]
    fn batch_is_deterministic() {
        let p = DirichletParams::new(vec![0.5, 1.5, 2.0]).unwrap();
        let a = sample(&p, 64, 11).unwrap();
        let b = sample(&p, 64, 11).unwrap();
        assert_eq!(a, b);
    }
}
