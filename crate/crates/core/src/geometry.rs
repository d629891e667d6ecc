//! Distances on the embedding space and their gradients.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::sq_dist;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    SquaredEuclidean,
    /// Pseudo-Huber: quadratic near zero, Euclidean far away.
    Huber,
}

/// Distance function between embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Transition scale of the Huber kind; ignored by the others.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.1
}

impl Default for DistanceSpec {
    fn default() -> Self {
        Self {
            kind: DistanceKind::Euclidean,
            delta: default_delta(),
        }
    }
}

impl DistanceSpec {
    pub fn euclidean() -> Self {
        Self::default()
    }

    pub fn squared_euclidean() -> Self {
        Self {
            kind: DistanceKind::SquaredEuclidean,
            ..Self::default()
        }
    }

    pub fn huber(delta: f64) -> Result<Self> {
        let spec = Self {
            kind: DistanceKind::Huber,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DistanceKind::Huber && !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "huber delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Distance as a function of the squared Euclidean norm of `u - v`.
    #[inline]
    pub fn from_sq_norm(&self, r2: f64) -> f64 {
        match self.kind {
            DistanceKind::Euclidean => libm::sqrt(r2),
            DistanceKind::SquaredEuclidean => r2,
            DistanceKind::Huber => {
                // delta * (sqrt(1 + t) - 1) without cancellation for small t.
                let t = r2 / (self.delta * self.delta);
                self.delta * t / (libm::sqrt(1.0 + t) + 1.0)
            }
        }
    }

    /// Distance and the coefficient `c` with `grad_u d(u, v) = c * (u - v)`.
    ///
    /// The coefficient is `None` where the distance is not differentiable
    /// (Euclidean kind at coincident points).
    #[inline]
    pub(crate) fn value_and_slope(&self, r2: f64) -> (f64, Option<f64>) {
        match self.kind {
            DistanceKind::Euclidean => {
                let r = libm::sqrt(r2);
                (r, if r > 0.0 { Some(1.0 / r) } else { None })
            }
            DistanceKind::SquaredEuclidean => (r2, Some(2.0)),
            DistanceKind::Huber => (
                self.from_sq_norm(r2),
                Some(1.0 / libm::sqrt(r2 + self.delta * self.delta)),
            ),
        }
    }

    /// Like [`Self::value_and_slope`] with the zero subgradient at kinks.
    #[inline]
    pub(crate) fn value_and_slope_or_zero(&self, r2: f64) -> (f64, f64) {
        let (d, c) = self.value_and_slope(r2);
        (d, c.unwrap_or(0.0))
    }
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(())
}

/// `d(u, v)` under `spec`.
pub fn distance(spec: &DistanceSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(spec.from_sq_norm(sq_dist(u, v)))
}

/// Gradients of `d(u, v)` with respect to `u` and `v`.
pub fn distance_gradient(spec: &DistanceSpec, u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(u, v)?;
    let (_, slope) = spec.value_and_slope(sq_dist(u, v));
    let c = slope.ok_or(Error::NonDifferentiable)?;
    let gu: Vec<f64> = u.iter().zip(v).map(|(a, b)| c * (a - b)).collect();
    let gv = gu.iter().map(|g| -g).collect();
    Ok((gu, gv))
}
