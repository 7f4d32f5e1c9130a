//! Effective-dimension tools for high-dimensional statistics and optimization.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`). The aliases in [`f64s`] fix
//! the scalar to `f64`, which is what the experiment runner uses.

pub mod concentration;
pub mod entropy;
pub mod erm;
pub mod error;
pub mod numerics;
pub mod scalar;
pub mod smoothing;
pub mod spectrum;

pub use error::{Error, Result};
pub use numerics::{RngStream, SymMatrix, SymTensor};
pub use scalar::Real;
pub use spectrum::{effective_dimension, make_spectrum, sample_gaussian, CovarianceSpectrum, SampleMatrix, SpectrumKind};

/// `f64` instantiations of the main generic types.
pub mod f64s {
    pub type SymMatrix = crate::numerics::SymMatrix<f64>;
    pub type DenseMatrix = crate::numerics::DenseMatrix<f64>;
    pub type SymTensor = crate::numerics::SymTensor<f64>;
    pub type CovarianceSpectrum = crate::spectrum::CovarianceSpectrum<f64>;
    pub type SpectrumKind = crate::spectrum::SpectrumKind<f64>;
    pub type SampleMatrix = crate::spectrum::SampleMatrix<f64>;
    pub type EllipsoidAxes = crate::entropy::EllipsoidAxes<f64>;
    pub type DeviationEstimate = crate::concentration::DeviationEstimate<f64>;
    pub type ScalingConfig = crate::concentration::ScalingConfig<f64>;
    pub type ErmProblem = crate::erm::ErmProblem<f64>;
    pub type PrecondConfig = crate::erm::PrecondConfig<f64>;
    pub type PrecondRun = crate::erm::PrecondRun<f64>;
    pub type SmoothingConfig = crate::smoothing::SmoothingConfig<f64>;
    pub type SmoothingRun = crate::smoothing::SmoothingRun<f64>;
    pub type SmoothExperimentConfig = crate::smoothing::SmoothExperimentConfig<f64>;
}
