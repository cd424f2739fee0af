//! Portfolio maps on the simplex: the functionally generated recipe, the
//! cosine policy with its market fallback, and the comparison portfolios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expconcave::{inner, CosineGenerator, Generator};

/// Components in `(-NOISE_CLIP, 0)` are treated as rounding and set to zero.
pub const NOISE_CLIP: f64 = 1e-14;

/// Portfolio weights summing to one.
///
/// The generated recipe can produce short positions when the generator's
/// gradient is large relative to the smallest coordinates, so the type admits
/// signed entries; [`PortfolioWeights::is_long_only`] reports admissibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    /// Clips rounding noise below zero and rescales to unit sum.
    pub fn from_raw(mut w: Vec<f64>) -> Result<Self> {
        normalize_in_place(&mut w)?;
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_long_only(&self) -> bool {
        self.0.iter().all(|w| *w >= 0.0)
    }

    pub fn min_weight(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Deref for PortfolioWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn normalize_in_place(w: &mut [f64]) -> Result<()> {
    for v in w.iter_mut() {
        if !v.is_finite() {
            return Err(Error::NotInSimplex(format!("non-finite weight {v}")));
        }
        if *v < 0.0 && *v > -NOISE_CLIP {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NotInSimplex(format!("weights sum to {total}")));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Writes `pi_i = p_i (v_i + 1 - <p, v>)` into `out` for a gradient `v`.
pub fn fgp_from_gradient(p: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
    let pv = inner(p, v);
    for ((o, pi), vi) in out.iter_mut().zip(p).zip(v) {
        *o = pi * (vi + 1.0 - pv);
    }
    normalize_in_place(out)
}

/// The portfolio generated by `gen` at the interior point `p`.
pub fn fgp_map<G: Generator + ?Sized>(gen: &G, p: &[f64]) -> Result<PortfolioWeights> {
    if p.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            got: p.len(),
        });
    }
    let mut v = vec![0.0; p.len()];
    if !gen.gradient(p, &mut v) {
        return Err(Error::OutsideDomain { angle: f64::NAN });
    }
    let mut out = vec![0.0; p.len()];
    fgp_from_gradient(p, &v, &mut out)?;
    Ok(PortfolioWeights(out))
}

/// A rebalancing rule evaluated once per step on the current market weights.
pub trait Policy {
    /// Writes the weights held over the next step into `out`.
    fn weights_into(&mut self, p: &[f64], out: &mut [f64]) -> Result<()>;

    /// Clears any per-run state.
    fn reset(&mut self) {}

    /// Whether the policy has switched to the market portfolio.
    fn exited(&self) -> bool {
        false
    }

    fn weights(&mut self, p: &[f64]) -> Result<PortfolioWeights> {
        let mut out = vec![0.0; p.len()];
        self.weights_into(p, &mut out)?;
        Ok(PortfolioWeights(out))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Market;

impl Policy for Market {
    fn weights_into(&mut self, p: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(p);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EqualWeighted;

impl Policy for EqualWeighted {
    fn weights_into(&mut self, p: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 1.0 / p.len() as f64);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiversityWeighted {
    exponent: f64,
}

impl DiversityWeighted {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::param("exponent", format!("{exponent} not in (0, 1]")));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

impl Policy for DiversityWeighted {
    fn weights_into(&mut self, p: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, pi) in out.iter_mut().zip(p) {
            *o = pi.powf(self.exponent);
        }
        normalize_in_place(out)
    }
}

/// The cosine portfolio, switching permanently to the market portfolio once
/// the scaled radius `sqrt(n) ||p - x0||` reaches `b2`.
#[derive(Debug, Clone)]
pub struct CosinePolicy {
    generator: CosineGenerator,
    b2: f64,
    exited: bool,
    grad: Vec<f64>,
}

impl CosinePolicy {
    /// Requires `b2 > 0` with the exit ball strictly inside the domain.
    pub fn new(generator: CosineGenerator, b2: f64) -> Result<Self> {
        let limit = std::f64::consts::FRAC_PI_2 / generator.radius_multiplier();
        if !(b2 > 0.0 && b2 < limit) {
            return Err(Error::param("b2", format!("{b2} not in (0, {limit})")));
        }
        let n = generator.dim();
        Ok(Self {
            generator,
            b2,
            exited: false,
            grad: vec![0.0; n],
        })
    }

    pub fn generator(&self) -> &CosineGenerator {
        &self.generator
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }
}

impl Policy for CosinePolicy {
    fn weights_into(&mut self, p: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.exited && self.generator.radius(p) >= self.b2 {
            self.exited = true;
        }
        if self.exited {
            out.copy_from_slice(p);
            return Ok(());
        }
        // Inside the exit ball the gradient is always defined.
        self.generator.gradient(p, &mut self.grad);
        fgp_from_gradient(p, &self.grad, out)
    }

    fn reset(&mut self) {
        self.exited = false;
    }

    fn exited(&self) -> bool {
        self.exited
    }
}

pub fn cosine_portfolio(policy: &mut CosinePolicy, p: &[f64]) -> Result<PortfolioWeights> {
    policy.weights(p)
}

pub fn equal_weighted(p: &[f64]) -> PortfolioWeights {
    PortfolioWeights(vec![1.0 / p.len() as f64; p.len()])
}

pub fn diversity_weighted(p: &[f64], exponent: f64) -> Result<PortfolioWeights> {
    DiversityWeighted::new(exponent)?.weights(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expconcave::{ConstantGenerator, LogGeometricMean};
    use crate::simplex::SimplexPoint;

    #[test]
    fn constant_generator_gives_market() {
        let p = [0.2, 0.3, 0.5];
        let w = fgp_map(&ConstantGenerator { n: 3 }, &p).unwrap();
        assert_eq!(w.as_slice(), &p);
    }

    #[test]
    fn log_geometric_mean_gives_equal_weights() {
        let p = [0.1, 0.6, 0.3];
        let w = fgp_map(&LogGeometricMean { n: 3 }, &p).unwrap();
        for v in w.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_policy_latches() {
        let g = CosineGenerator::sqrt_n(SimplexPoint::barycenter(2).unwrap(), 1.0).unwrap();
        let mut pol = CosinePolicy::new(g, 0.2).unwrap();
        let far = [0.5 + 0.15, 0.5 - 0.15];
        assert_eq!(pol.weights(&far).unwrap().as_slice(), &far);
        assert!(pol.exited());
        let near = [0.5, 0.5];
        assert_eq!(pol.weights(&near).unwrap().as_slice(), &near);
        pol.reset();
        assert!(!pol.exited());
    }

    #[test]
    fn diversity_half() {
        let w = diversity_weighted(&[0.8, 0.2], 0.5).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(diversity_weighted(&[0.8, 0.2], 0.0).is_err());
    }

    #[test]
    fn noise_clip_only_touches_tiny_negatives() {
        let w = PortfolioWeights::from_raw(vec![-1e-16, 0.5, 0.5]).unwrap();
        assert_eq!(w[0], 0.0);
        let w = PortfolioWeights::from_raw(vec![-0.1, 0.6, 0.5]).unwrap();
        assert!(!w.is_long_only());
    }
}
