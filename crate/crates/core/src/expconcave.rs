//! Exponentially concave generating functions.
//!
//! The centerpiece is the cosine generator
//! `phi(x) = log cos(k ||x - x0||)` with `k = c sqrt(n)` (or `k = c` under
//! the raw convention). Its exponential `Phi = cos(k ||x - x0||)` satisfies
//! `(1/Phi) Hess Phi <= -k^2 I` on the ball `k ||x - x0|| < pi/2`, which is
//! what drives the drift of the generated portfolio.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, sq_dist};
use crate::simplex::SimplexPoint;

/// Points with angle within this distance of `pi/2` are reported outside.
pub const BOUNDARY_GUARD: f64 = 1e-9;

/// A differentiable generating function on (a subset of) the simplex.
pub trait Generator {
    fn dim(&self) -> usize;

    /// `phi(x)`, or negative infinity outside the domain.
    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad phi(x)` into `out`; returns `false` outside the domain.
    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool;
}

/// How the distance to the center is scaled inside the cosine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RadiusScaling {
    /// `cos(c sqrt(n) ||x - x0||)`, the high-dimensional construction.
    #[default]
    SqrtN,
    /// `cos(c ||x - x0||)`.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineGenerator {
    center: SimplexPoint,
    scale: f64,
    scaling: RadiusScaling,
    k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEval {
    pub value: f64,
    /// Empty when `in_domain` is false.
    pub gradient: Vec<f64>,
    pub in_domain: bool,
    /// `sqrt(n) ||x - x0||`.
    pub radius: f64,
    /// `k ||x - x0||`, the argument of the cosine.
    pub angle: f64,
}

impl CosineGenerator {
    pub fn new(center: SimplexPoint, scale: f64, scaling: RadiusScaling) -> Result<Self> {
        let ok = match scaling {
            RadiusScaling::SqrtN => scale > 0.0 && scale <= 1.0,
            RadiusScaling::Raw => scale > 0.0 && scale.is_finite(),
        };
        if !ok {
            return Err(Error::param(
                "scale",
                format!("{scale} not admissible for {scaling:?} scaling"),
            ));
        }
        let n = center.dim() as f64;
        let k = match scaling {
            RadiusScaling::SqrtN => scale * n.sqrt(),
            RadiusScaling::Raw => scale,
        };
        Ok(Self {
            center,
            scale,
            scaling,
            k,
        })
    }

    /// The `(c^2 n, 1)` exponentially concave generator centered at `center`.
    pub fn sqrt_n(center: SimplexPoint, scale: f64) -> Result<Self> {
        Self::new(center, scale, RadiusScaling::SqrtN)
    }

    pub fn center(&self) -> &SimplexPoint {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaling(&self) -> RadiusScaling {
        self.scaling
    }

    /// The multiplier `k` in `cos(k ||x - x0||)`.
    pub fn multiplier(&self) -> f64 {
        self.k
    }

    /// Multiplier applied to the scaled radius `sqrt(n) ||x - x0||`.
    pub fn radius_multiplier(&self) -> f64 {
        self.k / (self.dim() as f64).sqrt()
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        (self.dim() as f64 * sq_dist(x, &self.center)).sqrt()
    }

    pub fn angle(&self, x: &[f64]) -> f64 {
        self.k * sq_dist(x, &self.center).sqrt()
    }

    fn angle_in_domain(angle: f64) -> bool {
        angle < FRAC_PI_2 - BOUNDARY_GUARD
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        Self::angle_in_domain(self.angle(x))
    }

    /// `Phi = exp(phi) = cos(angle)`, zero outside the domain.
    pub fn big_phi(&self, x: &[f64]) -> f64 {
        let a = self.angle(x);
        if a < FRAC_PI_2 {
            a.cos()
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: &[f64]) -> GeneratorEval {
        let radius = self.radius(x);
        let angle = self.angle(x);
        if !Self::angle_in_domain(angle) {
            return GeneratorEval {
                value: f64::NEG_INFINITY,
                gradient: Vec::new(),
                in_domain: false,
                radius,
                angle,
            };
        }
        let mut gradient = vec![0.0; self.dim()];
        self.gradient(x, &mut gradient);
        GeneratorEval {
            value: angle.cos().ln(),
            gradient,
            in_domain: true,
            radius,
            angle,
        }
    }

    /// `k tan(k s) / s` with `s = ||x - x0||`, continuous at `s = 0`.
    fn tangential_curvature(&self, s: f64) -> f64 {
        let a = self.k * s;
        if a < 1e-8 {
            self.k * self.k
        } else {
            self.k * a.tan() / s
        }
    }

    /// `(1/Phi) Hess Phi (delta, delta)` in closed form:
    /// `-k^2 (u.delta)^2 - (k tan(k s) / s) (|delta|^2 - (u.delta)^2)`
    /// with `u` the unit vector from the center.
    pub fn hess_form_over_phi(&self, x: &[f64], delta: &[f64]) -> f64 {
        let mut s2 = 0.0;
        let mut ud = 0.0;
        let mut dd = 0.0;
        for ((xi, ci), di) in x.iter().zip(self.center.iter()).zip(delta) {
            let d = xi - ci;
            s2 += d * d;
            ud += d * di;
            dd += di * di;
        }
        let s = s2.sqrt();
        let k2 = self.k * self.k;
        if s == 0.0 {
            return -k2 * dd;
        }
        let proj2 = ud * ud / s2;
        -k2 * proj2 - self.tangential_curvature(s) * (dd - proj2)
    }
}

impl Generator for CosineGenerator {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = self.angle(x);
        if Self::angle_in_domain(a) {
            a.cos().ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        let s = sq_dist(x, &self.center).sqrt();
        if !Self::angle_in_domain(self.k * s) {
            return false;
        }
        if s == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return true;
        }
        let w = self.tangential_curvature(s);
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(self.center.iter()) {
            *o = -w * (xi - ci);
        }
        true
    }
}

/// `phi(p) = (1/n) sum log p_i`, generating the equal-weighted portfolio.
#[derive(Debug, Clone, Copy)]
pub struct LogGeometricMean {
    pub n: usize,
}

impl Generator for LogGeometricMean {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.ln()).sum::<f64>() / self.n as f64
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        let n = self.n as f64;
        for (o, v) in out.iter_mut().zip(x) {
            *o = 1.0 / (n * v);
        }
        true
    }
}

/// A constant generator; its portfolio is the market.
#[derive(Debug, Clone, Copy)]
pub struct ConstantGenerator {
    pub n: usize,
}

impl Generator for ConstantGenerator {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|o| *o = 0.0);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnCertificate {
    /// Largest eigenvalue of the finite-difference `(1/Phi) Hess Phi`.
    pub max_eigenvalue: f64,
    /// `-k^2`, i.e. `-c^2 n` under the square-root convention.
    pub bound: f64,
}

impl KnCertificate {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_eigenvalue <= self.bound + tol
    }
}

/// Central finite-difference Hessian of `f` at `x` with step `h`.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut y = x.to_vec();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Numerical `(K, N)` certificate: the top eigenvalue of the finite-difference
/// `(1/Phi) Hess Phi` at `x`, to be compared against `-k^2`.
pub fn kn_certificate(gen: &CosineGenerator, x: &[f64], h: f64) -> Result<KnCertificate> {
    if x.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            got: x.len(),
        });
    }
    let n = gen.dim() as f64;
    let margin = 10.0 * h * gen.multiplier().max(n.sqrt());
    let angle = gen.angle(x);
    if angle > FRAC_PI_2 - margin {
        return Err(Error::Precondition(format!(
            "angle {angle:.6} within {margin:.2e} of the domain boundary"
        )));
    }
    let phi = gen.big_phi(x);
    let hess = fd_hessian(|y| gen.big_phi(y), x, h) / phi;
    let max_eigenvalue = hess
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(KnCertificate {
        max_eigenvalue,
        bound: -gen.multiplier() * gen.multiplier(),
    })
}

/// `phi(x0) + log cos(sqrt(n) ||x - x0||) - phi(x)`: nonnegative for every
/// `(n, 1)` exponentially concave `phi` maximized at `x0`.
pub fn maximality_gap(gen: &CosineGenerator, x: &[f64]) -> Result<f64> {
    let n = gen.dim() as f64;
    let r = (n * sq_dist(x, gen.center())).sqrt();
    if r >= FRAC_PI_2 || !gen.in_domain(x) {
        return Err(Error::OutsideDomain { angle: gen.angle(x) });
    }
    Ok(gen.value(gen.center()) + r.cos().ln() - gen.value(x))
}

/// Whether `phi(x) <= phi(x0) + log cos(sqrt(n) ||x - x0||)` holds at `x`,
/// up to `1e-12`.
pub fn maximality_check(gen: &CosineGenerator, x: &[f64]) -> Result<bool> {
    Ok(maximality_gap(gen, x)? >= -1e-12)
}

/// Directional exponential concavity along the segment `[x, y]`:
/// `exp phi(t x + (1-t) y) - t exp phi(x) - (1-t) exp phi(y)`.
pub fn concavity_gap<G: Generator>(gen: &G, x: &[f64], y: &[f64], t: f64) -> f64 {
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
    gen.value(&z).exp() - t * gen.value(x).exp() - (1.0 - t) * gen.value(y).exp()
}

/// `<p, v>` helper used by portfolio maps.
pub(crate) fn inner(p: &[f64], v: &[f64]) -> f64 {
    dot(p, v)
}
