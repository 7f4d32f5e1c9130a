use serde::Serialize;

use super::EllipsoidAxes;
use crate::error::{require, Result};
use crate::scalar::Real;
use crate::spectrum::CovarianceSpectrum;

/// `(K_b, m_b)`: `m_b = #{i : b_i > 1}` and `K_b = Σ_{i ≤ m_b} ln b_i`.
pub fn kb_mb<T: Real>(e: &EllipsoidAxes<T>) -> (T, usize) {
    let mb = e.axes().iter().filter(|&&b| b > T::one()).count();
    let kb = e.axes()[..mb].iter().map(|b| b.ln()).sum();
    (kb, mb)
}

/// Unit-entropy bound `K_b + c·correction`, reported in parts so `c` can be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct EntropyBound<T> {
    pub kb: T,
    pub mb: usize,
    /// `ln d + √(ln⁺(b_1)·m_b·ln d)`.
    pub correction: T,
    pub c: T,
    pub total: T,
}

pub fn unit_entropy_bound<T: Real>(e: &EllipsoidAxes<T>, c: T) -> Result<EntropyBound<T>> {
    require(c > T::zero(), || "entropy constant c must be positive".into())?;
    let (kb, mb) = kb_mb(e);
    let ln_d = T::count(e.dim()).ln();
    let ln_plus_b1 = e.axes()[0].ln().max(T::zero());
    let correction = ln_d + (ln_plus_b1 * T::count(mb) * ln_d).sqrt();
    Ok(EntropyBound { kb, mb, correction, c, total: kb + c * correction })
}

/// `m_ε = #{i : σ_i > ε σ_1}`.
pub fn m_eps<T: Real>(s: &CovarianceSpectrum<T>, eps: T) -> usize {
    let thr = eps * s.sigma1();
    s.sigmas().iter().filter(|&&v| v > thr).count()
}

/// Both forms of the ε-entropy bound for the unit ball of the `Σ`-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct EpsEntropyBound<T> {
    pub eps: T,
    pub r: u32,
    pub m_eps: usize,
    /// `Σ_{i ≤ m_ε} ln(σ_i/(εσ_1))`.
    pub exact_sum: T,
    /// `ln d + √(ln(1/ε)·ln d·m_ε)`, multiplied by `c` in the totals.
    pub bracket: T,
    pub c: T,
    pub exact_total: T,
    /// Closed form in terms of `d_eff(r)`.
    pub deff_bound: T,
    /// `min(exact_total, deff_bound)`.
    pub total: T,
    /// `m_ε ≤ 1 + (d_eff(r) − 1) ε^{−2/r}`.
    pub count_inequality_holds: bool,
    /// Set when `d = 1`, where the closed form degenerates and `ln(1/ε) + c·bracket` is used.
    pub degenerate_dim: bool,
}

pub fn eps_entropy_bound<T: Real>(s: &CovarianceSpectrum<T>, eps: T, r: u32, c: T) -> Result<EpsEntropyBound<T>> {
    require(eps > T::zero() && eps <= T::one(), || "eps must lie in (0, 1]".into())?;
    require(r >= 1, || "r must be at least 1".into())?;
    require(c > T::zero(), || "entropy constant c must be positive".into())?;
    let d = s.dim();
    let m = m_eps(s, eps);
    let denom = eps * s.sigma1();
    let exact_sum: T = s.sigmas()[..m].iter().map(|&v| (v / denom).ln()).sum();
    let ln_d = T::count(d).ln();
    let ln_inv = -eps.ln();
    let bracket = ln_d + (ln_inv * ln_d * T::count(m)).sqrt();
    let exact_total = exact_sum + c * bracket;

    let deff = s.effective_dimension(r);
    let growth = eps.powf(-T::lit(2.0) / T::lit(r as f64)) * (deff - T::one());
    let degenerate_dim = d == 1;
    let deff_bound = if degenerate_dim {
        ln_inv + c * bracket
    } else {
        let dm1 = T::count(d - 1);
        let e = T::E();
        let count = dm1.min(growth / e);
        let log_term = if count > T::zero() { e.max(growth / dm1).ln() } else { T::zero() };
        ln_inv + count * T::lit(r as f64) * T::lit(0.5) * log_term + c * bracket
    };
    let slack = T::tol(1e-12) * (T::one() + growth);
    Ok(EpsEntropyBound {
        eps,
        r,
        m_eps: m,
        exact_sum,
        bracket,
        c,
        exact_total,
        deff_bound,
        total: exact_total.min(deff_bound),
        count_inequality_holds: T::count(m) <= T::one() + growth + slack,
        degenerate_dim,
    })
}
