use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, sq_dist};

/// Tolerance on the unit-sum constraint.
pub const SUM_TOL: f64 = 1e-12;

/// A point of the open unit simplex: strictly positive coordinates summing
/// to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates `coords` without modifying them.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension {
                min: 2,
                got: coords.len(),
            });
        }
        if let Some((i, x)) = coords.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::NotInSimplex(format!("coordinate {i} = {x}")));
        }
        let s = compensated_sum(coords.iter().copied());
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::NotInSimplex(format!("coordinates sum to {s}")));
        }
        Ok(SimplexPoint(coords))
    }

    /// Normalizes a positive vector onto the simplex.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = coords.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::NotInSimplex(format!("coordinate {i} = {x}")));
        }
        let s = compensated_sum(coords.iter().copied());
        coords.iter_mut().for_each(|x| *x /= s);
        SimplexPoint::new(coords)
    }

    /// The barycenter `(1/n, ..., 1/n)`.
    pub fn barycenter(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension { min: 2, got: n });
        }
        Ok(SimplexPoint(vec![1.0 / n as f64; n]))
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        SimplexPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `sqrt(n) * ||self - other||`, the natural fluctuation scale.
    pub fn scaled_distance(&self, other: &SimplexPoint) -> f64 {
        (self.dim() as f64 * sq_dist(&self.0, &other.0)).sqrt()
    }

    /// Sum of squared coordinates.
    pub fn sq_norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }
}

impl std::ops::Deref for SimplexPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}
