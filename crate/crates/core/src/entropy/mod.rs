//! Metric-entropy bounds for ellipsoids and desk-scale constructive coverings.

mod bounds;
mod cover;
mod infinite;

pub use bounds::{eps_entropy_bound, kb_mb, m_eps, unit_entropy_bound, EntropyBound, EpsEntropyBound};
pub use cover::{build_cover, distance_to_ellipsoid, verify_cover, volumetric_lower_bound, BallCover, CoverReport};
pub use infinite::{infinite_ellipsoid_stats, spectral_entropy_bound, InfiniteStats, PowerLawEnvelope, SpectralEntropy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Semi-axes `b_1 ≥ … ≥ b_d > 0` of `E_b = {x : Σ x_i²/b_i² ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "Vec<T>", into = "Vec<T>")]
pub struct EllipsoidAxes<T: Real> {
    b: Vec<T>,
}

impl<T: Real> EllipsoidAxes<T> {
    pub fn new(b: Vec<T>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::BadSpectrum("ellipsoid needs at least one axis".into()));
        }
        if b.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::BadSpectrum("semi-axes must be positive and finite".into()));
        }
        if let Some(i) = b.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::BadSpectrum(format!("semi-axes must be in descending order (axis {})", i + 1)));
        }
        Ok(Self { b })
    }

    pub fn axes(&self) -> &[T] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.gauge_sq(x) <= T::one()
    }

    /// `Σ x_i²/b_i²`.
    pub fn gauge_sq(&self, x: &[T]) -> T {
        x.iter().zip(&self.b).map(|(&xi, &bi)| (xi / bi) * (xi / bi)).sum()
    }
}

impl<T: Real> TryFrom<Vec<T>> for EllipsoidAxes<T> {
    type Error = Error;
    fn try_from(b: Vec<T>) -> Result<Self> {
        Self::new(b)
    }
}

impl<T: Real> From<EllipsoidAxes<T>> for Vec<T> {
    fn from(e: EllipsoidAxes<T>) -> Self {
        e.b
    }
}
