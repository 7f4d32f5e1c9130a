//! Monte-Carlo estimates of uniform deviations of products of projections, random tensor
//! norms, bound curves and scaling experiments.

mod bounds;
mod experiment;
mod moments;
mod search;

pub use bounds::{bound_curve, default_clip_bound, fit_constant, BoundKind};
pub use experiment::{
    loglog_slope, mean_std, plateau_fit, scaling_experiment, tightness_probe, CellSummary, ScalingConfig, ScalingTable,
    SlopeFit, TrialRecord,
};
pub use moments::{gaussian_moment_tensor, moment_tensor};

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::numerics::{tensor_opnorm, RngStream, SymTensor};
use crate::scalar::Real;
use crate::spectrum::{CovarianceSpectrum, SampleMatrix};
use search::{product_stderr, run_search, Objective};

/// A 1-Lipschitz function vanishing at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity<T> {
    Identity,
    Relu,
    /// Clamp to `[−bound, bound]`.
    Clip { bound: T },
}

impl<T: Real> Nonlinearity<T> {
    pub fn apply(&self, z: T) -> T {
        match *self {
            Nonlinearity::Identity => z,
            Nonlinearity::Relu => z.max(T::zero()),
            Nonlinearity::Clip { bound } => z.max(-bound).min(bound),
        }
    }

    /// Derivative, taking the flat side at kinks.
    pub fn slope(&self, z: T) -> T {
        match *self {
            Nonlinearity::Identity => T::one(),
            Nonlinearity::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Nonlinearity::Clip { bound } => {
                if z.abs() < bound {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// One nonlinearity per factor; its length is the product order `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", transparent)]
pub struct NonlinearitySpec<T>(pub Vec<Nonlinearity<T>>);

impl<T: Real> NonlinearitySpec<T> {
    pub fn uniform(kind: Nonlinearity<T>, r: usize) -> Self {
        Self(vec![kind; r])
    }

    pub fn identity(r: usize) -> Self {
        Self::uniform(Nonlinearity::Identity, r)
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|f| *f == Nonlinearity::Identity)
    }
}

/// Source of the expectation subtracted in centered mode.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a, T: Real> {
    None,
    /// Closed-form Gaussian moments (identity nonlinearities, order ≤ 4).
    ExactGaussian(&'a CovarianceSpectrum<T>),
    /// Independent sample whose empirical mean stands in for the expectation.
    Sample(&'a SampleMatrix<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchConfig<T> {
    /// Exhaustive search over a net of the given resolution (d ≤ 3).
    Net { resolution: T },
    Multistart { restarts: usize, iters: usize, step: T },
}

impl<T: Real> SearchConfig<T> {
    /// 32 restarts, 200 iterations, step `0.1/σ_1^r`.
    pub fn default_multistart(sigma1: T, r: usize) -> Self {
        SearchConfig::Multistart { restarts: 32, iters: 200, step: T::lit(0.1) / sigma1.powi(r as i32) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMode {
    Centered,
    Uncentered,
    Tensor,
}

impl DeviationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviationMode::Centered => "centered",
            DeviationMode::Uncentered => "uncentered",
            DeviationMode::Tensor => "tensor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct DeviationEstimate<T> {
    /// Best value found, floored at 0 (the zero vectors are always feasible).
    pub value: T,
    pub mode: DeviationMode,
    pub search: SearchConfig<T>,
    pub n: usize,
    pub d: usize,
    pub order: usize,
    /// `(master_seed, stream_id)` of the search stream.
    pub seed: (u64, u64),
    pub argmax: Vec<Vec<T>>,
    /// Standard error of the reference mean at the argmax, for sample references.
    pub reference_stderr: Option<T>,
}

/// `E[a^{⊗r}]` or its sample estimate, for the identity fast path.
fn reference_tensor<T: Real>(reference: &Reference<'_, T>, r: usize) -> Result<Option<SymTensor<T>>> {
    match reference {
        Reference::None => Ok(None),
        Reference::ExactGaussian(s) => gaussian_moment_tensor(s, r).map(Some),
        Reference::Sample(s) => Ok(Some(moment_tensor(s, r)?.0)),
    }
}

/// Lower estimate of `sup_{x_1..x_r ∈ 𝓑} (1/n)Σ_i Π_k f_k(a_iᵀx_k)`, minus the matching
/// expectation in centered mode.
///
/// With identity nonlinearities the empirical mean is the moment tensor, so the search
/// runs on the dense (deviation) tensor with exact block updates.
pub fn empirical_sup_deviation<T: Real>(
    samples: &SampleMatrix<T>,
    fs: &NonlinearitySpec<T>,
    centered: bool,
    reference: Reference<'_, T>,
    search: &SearchConfig<T>,
    rng: &RngStream,
) -> Result<DeviationEstimate<T>> {
    let r = fs.order();
    require(r >= 2, || format!("product order must be at least 2 (got {r})"))?;
    let reference = if centered { reference } else { Reference::None };
    if centered && matches!(reference, Reference::None) {
        return Err(Error::RefUnavailable);
    }
    if let Reference::Sample(s) = reference {
        if s.d() != samples.d() {
            return Err(Error::DimensionMismatch { expected: samples.d(), got: s.d() });
        }
    }
    if let Reference::ExactGaussian(s) = reference {
        require(fs.is_identity(), || "exact Gaussian reference requires identity nonlinearities".into())?;
        if s.dim() != samples.d() {
            return Err(Error::DimensionMismatch { expected: samples.d(), got: s.dim() });
        }
    }

    let found = if fs.is_identity() {
        let mut t = moment_tensor(samples, r)?.0;
        if let Some(m) = reference_tensor(&reference, r)? {
            t = t.sub(&m);
        }
        run_search(&Objective::Tensor(t), search, rng)?
    } else {
        let ref_sample = match reference {
            Reference::Sample(s) => Some(s),
            _ => None,
        };
        run_search(&Objective::Samples { data: samples, reference: ref_sample, fs: &fs.0 }, search, rng)?
    };
    let reference_stderr = match reference {
        Reference::Sample(s) => Some(product_stderr(s, &fs.0, &found.argmax)),
        _ => None,
    };
    Ok(DeviationEstimate {
        value: found.value.max(T::zero()),
        mode: if centered { DeviationMode::Centered } else { DeviationMode::Uncentered },
        search: *search,
        n: samples.n(),
        d: samples.d(),
        order: r,
        seed: (rng.master_seed(), rng.stream_id()),
        argmax: found.argmax,
        reference_stderr,
    })
}

/// Expectation used by [`tensor_deviation`].
#[derive(Debug, Clone, Copy)]
pub enum TensorMean<'a, T: Real> {
    ExactGaussian(&'a CovarianceSpectrum<T>),
    Sample(&'a SampleMatrix<T>),
}

/// `‖(1/n)Σ a_i^{⊗p} − E a^{⊗p}‖_op` estimated by symmetric power iteration.
pub fn tensor_deviation<T: Real>(
    samples: &SampleMatrix<T>,
    p: usize,
    mean: TensorMean<'_, T>,
    restarts: usize,
    iters: usize,
    rng: &RngStream,
) -> Result<DeviationEstimate<T>> {
    require(p >= 2, || "tensor order must be at least 2".into())?;
    require(restarts >= 1, || "at least one restart is required".into())?;
    let expected = match mean {
        TensorMean::ExactGaussian(s) => gaussian_moment_tensor(s, p)?,
        TensorMean::Sample(s) => moment_tensor(s, p)?.0,
    };
    if expected.dim() != samples.d() {
        return Err(Error::DimensionMismatch { expected: samples.d(), got: expected.dim() });
    }
    let dev = moment_tensor(samples, p)?.0.sub(&expected);
    let value = tensor_opnorm(&dev, restarts, iters, rng);
    Ok(DeviationEstimate {
        value,
        mode: DeviationMode::Tensor,
        search: SearchConfig::Multistart { restarts, iters, step: T::one() },
        n: samples.n(),
        d: samples.d(),
        order: p,
        seed: (rng.master_seed(), rng.stream_id()),
        argmax: Vec::new(),
        reference_stderr: None,
    })
}
