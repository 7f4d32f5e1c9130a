//! Randomized smoothing for Lipschitz ERM: smoothed-value and gradient estimators, the
//! accelerated dual-averaging loop, and isotropic vs covariance-adapted perturbations.

mod estimator;
mod experiment;
mod optimizer;
mod schedule;

use serde::{Deserialize, Serialize};

pub use estimator::{grad_estimator, smooth_value_estimate};
pub use experiment::{
    calibrate_gap_constant, iterations_to_gap, smoothing_comparison, GapCalibration, GapCalibrationPoint, ModeOutcome,
    SmoothComparison, SmoothExperimentConfig,
};
pub use optimizer::{nonsmooth_reference, rs_optimize, SmoothingRun};
pub use schedule::{schedule_at, theta_sequence, ScheduleState};

use crate::error::{require, Error, Result};
use crate::numerics::SymMatrix;
use crate::scalar::Real;
use crate::spectrum::CovarianceSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    /// `Z ~ N(0, I)`
    Isotropic,
    /// `Z ~ N(0, Σ')` with `Σ' = Σ^{1/2}`
    NonIsotropic,
}

/// How each of the `m` gradient queries picks its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientBatch {
    /// One uniformly drawn sample per query.
    Single,
    /// The full empirical gradient at the perturbed point.
    Full,
}

#[derive(Debug, Clone)]
pub struct SmoothingConfig<T: Real> {
    pub mode: SmoothingMode,
    /// Base smoothing scale; iteration `t` uses `u_t = θ_t u`.
    pub u: T,
    /// Gradient queries per iteration.
    pub m: usize,
    pub iters: usize,
    /// Radius of the feasible ball.
    pub radius: T,
    /// `Σ'` for the non-isotropic mode.
    pub sqrt_sigma: Option<SymMatrix<T>>,
    pub batch: GradientBatch,
    /// Overrides the data-dependent `L = L_ℓ · max_j ‖a_j‖`.
    pub lipschitz: Option<T>,
}

impl<T: Real> SmoothingConfig<T> {
    pub fn validate(&self, d: usize) -> Result<()> {
        require(self.m >= 1, || "m must be at least 1".into())?;
        require(self.iters >= 1, || "T must be at least 1".into())?;
        require(self.radius > T::zero(), || "R must be positive".into())?;
        require(self.u >= T::zero(), || "u must be non-negative".into())?;
        match (self.mode, &self.sqrt_sigma) {
            (SmoothingMode::Isotropic, Some(_)) => Err(Error::Precondition("sqrt_sigma is only used in non_isotropic mode".into())),
            (SmoothingMode::NonIsotropic, None) => Err(Error::Precondition("non_isotropic mode requires sqrt_sigma".into())),
            (_, Some(s)) if s.dim() != d => Err(Error::DimensionMismatch { expected: d, got: s.dim() }),
            _ => Ok(()),
        }
    }
}

/// `(gap, smoothness)` of the Gaussian-smoothed objective.
///
/// Isotropic: `(γL√d, L/γ)`. Non-isotropic, with `L` read as the per-sample Lipschitz constant
/// `L_ℓ`: gap `γL√(σ₁³(d_eff(1) + ln(n/δ)) d_eff(2))` and smoothness
/// `Lσ₁^{1/2} d_eff(2)^{1/2} / (γ d_eff(1)) · (1 + C√((d_eff(1) ln d + ln(1/δ))/n))`.
pub fn smoothing_bounds<T: Real>(
    s: &CovarianceSpectrum<T>,
    gamma: T,
    lipschitz: T,
    mode: SmoothingMode,
    n: usize,
    delta: T,
    constant: T,
) -> Result<(T, T)> {
    require(gamma > T::zero(), || "gamma must be positive".into())?;
    let d = T::count(s.dim());
    match mode {
        SmoothingMode::Isotropic => Ok((gamma * lipschitz * d.sqrt(), lipschitz / gamma)),
        SmoothingMode::NonIsotropic => {
            require(delta > T::zero() && delta < T::one(), || "delta must lie in (0, 1)".into())?;
            require(n >= 1, || "n must be at least 1".into())?;
            let s1 = s.sigma1();
            let (d1, d2) = (s.effective_dimension(1), s.effective_dimension(2));
            let nn = T::count(n);
            let gap = gamma * lipschitz * (s1 * s1 * s1 * (d1 + (nn / delta).ln()) * d2).sqrt();
            let corr = T::one() + constant * ((d1 * d.ln() + (T::one() / delta).ln()) / nn).sqrt();
            Ok((gap, lipschitz * s1.sqrt() * d2.sqrt() / (gamma * d1) * corr))
        }
    }
}

/// Base smoothing scale: `R d^{-1/4}` (isotropic) or `R` divided by the non-isotropic
/// smoothness bound at `γ = 1`.
pub fn default_u<T: Real>(
    s: &CovarianceSpectrum<T>,
    radius: T,
    mode: SmoothingMode,
    loss_lipschitz: T,
    n: usize,
    delta: T,
    constant: T,
) -> Result<T> {
    match mode {
        SmoothingMode::Isotropic => Ok(radius * T::count(s.dim()).powf(T::lit(-0.25))),
        SmoothingMode::NonIsotropic => {
            let (_, smooth) = smoothing_bounds(s, T::one(), loss_lipschitz, mode, n, delta, constant)?;
            Ok(radius / smooth)
        }
    }
}
