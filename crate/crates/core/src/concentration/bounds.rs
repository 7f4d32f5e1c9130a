use serde::{Deserialize, Serialize};

use crate::error::{require, Result};
use crate::scalar::Real;
use crate::spectrum::{max_norm_bound, CovarianceSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Centered product deviation `Z`.
    Centered,
    /// Uncentered product mean `Y`.
    Uncentered,
    /// Rank-one tensor mean deviation.
    Tensor,
}

/// Right-hand side of the deviation bounds, up to the caller-supplied constant.
///
/// * `Centered`: `Cσ₁^r [ (λ + d_eff(r) ln d)(σ₁^{−r}B)^{1−2/r}/n + (√λ + √(d_eff(1) ln d))/√n ]`
/// * `Uncentered`: `Cσ₁^r [ 1 + (d_eff(r) ln d + λ)(σ₁^{−r}B)^{1−2/r}/n ]`
/// * `Tensor`: `Cσ₁^p √((d_eff(1) + ln d + λ)^{p+1} (ln n)^p / n)`; `b_product` is unused.
pub fn bound_curve<T: Real>(
    kind: BoundKind,
    s: &CovarianceSpectrum<T>,
    n: usize,
    order: u32,
    b_product: T,
    lambda: T,
    constant: T,
) -> Result<T> {
    require(n >= 1, || "n must be at least 1".into())?;
    require(order >= 2, || "order must be at least 2".into())?;
    require(lambda >= T::zero(), || "lambda must be non-negative".into())?;
    let s1r = s.sigma1().powi(order as i32);
    let ln_d = T::count(s.dim()).ln();
    let nn = T::count(n);
    let ratio_pow = || (b_product / s1r).powf(T::one() - T::lit(2.0) / T::lit(order as f64));
    Ok(match kind {
        BoundKind::Centered => {
            require(b_product > T::zero(), || "B must be positive".into())?;
            let first = (lambda + s.effective_dimension(order) * ln_d) * ratio_pow() / nn;
            let second = (lambda.sqrt() + (s.effective_dimension(1) * ln_d).sqrt()) / nn.sqrt();
            constant * s1r * (first + second)
        }
        BoundKind::Uncentered => {
            require(b_product > T::zero(), || "B must be positive".into())?;
            constant * s1r * (T::one() + (s.effective_dimension(order) * ln_d + lambda) / nn * ratio_pow())
        }
        BoundKind::Tensor => {
            let base = s.effective_dimension(1) + ln_d + lambda;
            let p = T::lit(order as f64);
            constant * s1r * (base.powf(p + T::one()) * nn.ln().powf(p) / nn).sqrt()
        }
    })
}

/// Clip level `√R̄²` with `δ = 1/max(n, 2)`, the high-probability bound on `max_i ‖a_i‖`.
pub fn default_clip_bound<T: Real>(s: &CovarianceSpectrum<T>, n: usize) -> Result<T> {
    let delta = T::one() / T::count(n.max(2));
    Ok(max_norm_bound(s, n, delta)?.sqrt())
}

/// Smallest constant `C` with `observed ≤ C · unit_curve` on every pair.
pub fn fit_constant<T: Real>(observed: &[T], unit_curve: &[T]) -> T {
    observed.iter().zip(unit_curve).map(|(&o, &c)| o / c).fold(T::zero(), T::max)
}
