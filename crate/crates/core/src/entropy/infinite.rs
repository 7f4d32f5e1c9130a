use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::scalar::Real;

/// Certified tail `b_i ≤ amplitude · i^{−exponent}` for every index beyond the known prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PowerLawEnvelope<T> {
    pub amplitude: T,
    pub exponent: T,
}

impl<T: Real> PowerLawEnvelope<T> {
    pub fn at(&self, i: usize) -> T {
        self.amplitude * T::count(i).powf(-self.exponent)
    }

    /// Upper bound on `Σ_{i>n} b_i²` from `∫_n^∞ A² x^{−2β} dx`.
    pub fn tail_sq_sum(&self, n: usize) -> T {
        let two_beta = self.exponent + self.exponent;
        self.amplitude * self.amplitude * T::count(n).powf(T::one() - two_beta) / (two_beta - T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct InfiniteStats<T> {
    /// `Σ_i ln⁺ b_i`.
    pub kb: T,
    /// `#{i : b_i ≥ 1/2}`.
    pub mb: usize,
    /// Least `n` with certified `Σ_{i>n} b_i² ≤ 1/2`.
    pub big_mb: usize,
}

/// Entropy bookkeeping for an infinite axis sequence known up to `prefix.len()` and
/// bounded by `envelope` afterwards.
pub fn infinite_ellipsoid_stats<T: Real>(prefix: &[T], envelope: PowerLawEnvelope<T>) -> Result<InfiniteStats<T>> {
    require(!prefix.is_empty(), || "axis prefix must be nonempty".into())?;
    require(prefix.iter().all(|&b| b > T::zero()), || "axes must be positive".into())?;
    require(prefix.windows(2).all(|w| w[1] <= w[0]), || "axes must be non-increasing".into())?;
    let n = prefix.len();
    let half = T::lit(0.5);
    if !(envelope.exponent > half) {
        return Err(Error::TruncationInsufficient(
            "envelope exponent must exceed 1/2 for the squared tail to be summable".into(),
        ));
    }
    let tail_beyond = envelope.tail_sq_sum(n);
    if !(tail_beyond <= half) {
        return Err(Error::TruncationInsufficient(format!(
            "envelope tail beyond index {n} is {tail_beyond}, above 1/2"
        )));
    }
    if !(envelope.at(n + 1) < half) {
        return Err(Error::TruncationInsufficient(format!(
            "envelope allows axes >= 1/2 beyond index {n}"
        )));
    }
    let kb = prefix.iter().map(|&b| b.ln().max(T::zero())).sum();
    let mb = prefix.iter().filter(|&&b| b >= half).count();
    // tails[k] bounds Σ_{i>k} b_i²
    let mut tail = tail_beyond;
    let mut big_mb = n;
    for k in (0..n).rev() {
        tail += prefix[k] * prefix[k];
        if tail <= half {
            big_mb = k;
        } else {
            break;
        }
    }
    Ok(InfiniteStats { kb, mb, big_mb })
}

/// Leading-order entropy `d·ln(1/ε)²` under power-law norm decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SpectralEntropy<T> {
    pub value: T,
    /// The bound holds up to a `(1 + o(1))` factor as `ε → 0`; the factor is not quantified.
    pub asymptotic_only: bool,
}

pub fn spectral_entropy_bound<T: Real>(d_spec: T, eps: T) -> Result<SpectralEntropy<T>> {
    require(d_spec > T::zero(), || "spectral dimension must be positive".into())?;
    require(eps > T::zero() && eps < T::one(), || "eps must lie in (0,1)".into())?;
    let l = eps.ln();
    Ok(SpectralEntropy { value: d_spec * l * l, asymptotic_only: true })
}
