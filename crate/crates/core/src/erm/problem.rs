use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::numerics::SymMatrix;
use crate::scalar::{dot, Real};
use crate::spectrum::SampleMatrix;

/// Per-sample loss `ℓ_i(z)` with label `b_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `ln(1 + e^{−bz})`, labels in `{−1, +1}`.
    Logistic,
    /// `½(z − b)²`
    Ridge,
    /// `max(0, 1 − bz)`
    Hinge,
    /// `|z − b|`
    Absolute,
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^{z})` without overflow.
fn softplus<T: Real>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LossKind {
    pub fn is_smooth(&self) -> bool {
        matches!(self, LossKind::Logistic | LossKind::Ridge)
    }

    pub fn value<T: Real>(&self, z: T, b: T) -> T {
        match self {
            LossKind::Logistic => softplus(-b * z),
            LossKind::Ridge => T::lit(0.5) * (z - b) * (z - b),
            LossKind::Hinge => (T::one() - b * z).max(T::zero()),
            LossKind::Absolute => (z - b).abs(),
        }
    }

    /// Derivative, or the subgradient on the flat side at a kink.
    pub fn derivative<T: Real>(&self, z: T, b: T) -> T {
        match self {
            LossKind::Logistic => -b * sigmoid(-b * z),
            LossKind::Ridge => z - b,
            LossKind::Hinge => {
                if b * z < T::one() {
                    -b
                } else {
                    T::zero()
                }
            }
            LossKind::Absolute => {
                if z > b {
                    T::one()
                } else if z < b {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `ℓ''(z)`; zero almost everywhere for the piecewise-linear losses.
    pub fn second<T: Real>(&self, z: T) -> T {
        match self {
            LossKind::Logistic => {
                let s = sigmoid(z);
                s * (T::one() - s)
            }
            LossKind::Ridge => T::one(),
            LossKind::Hinge | LossKind::Absolute => T::zero(),
        }
    }

    pub fn third<T: Real>(&self, z: T) -> T {
        match self {
            LossKind::Logistic => {
                let s = sigmoid(z);
                s * (T::one() - s) * (T::one() - T::lit(2.0) * s)
            }
            _ => T::zero(),
        }
    }

    /// Lipschitz constant of `ℓ''`.
    pub fn second_lipschitz<T: Real>(&self) -> T {
        match self {
            LossKind::Logistic => T::one() / (T::lit(6.0) * T::lit(3.0).sqrt()),
            _ => T::zero(),
        }
    }

    /// Lipschitz constant of `z ↦ ℓ(z; b)`, `None` for ridge.
    pub fn lipschitz<T: Real>(&self, b: T) -> Option<T> {
        match self {
            LossKind::Logistic | LossKind::Hinge => Some(b.abs()),
            LossKind::Absolute => Some(T::one()),
            LossKind::Ridge => None,
        }
    }
}

/// `F(x) = (1/n) Σ_j ℓ_j(a_jᵀx) + (λ/2)‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmProblem<T: Real> {
    pub loss: LossKind,
    data: SampleMatrix<T>,
    labels: Vec<T>,
    pub ridge_lambda: T,
}

/// Rows per shard in gradient and Hessian reductions; fixed so sums are thread-count independent.
const SHARD: usize = 256;

impl<T: Real> ErmProblem<T> {
    pub fn new(loss: LossKind, data: SampleMatrix<T>, labels: Vec<T>, ridge_lambda: T) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::DimensionMismatch { expected: data.n(), got: labels.len() });
        }
        require(data.n() >= 1, || "at least one sample is required".into())?;
        require(ridge_lambda >= T::zero(), || "ridge lambda must be non-negative".into())?;
        if loss == LossKind::Logistic {
            require(labels.iter().all(|&b| b == T::one() || b == -T::one()), || {
                "logistic labels must be ±1 so that every ℓ_j shares ℓ''".into()
            })?;
        }
        Ok(Self { loss, data, labels, ridge_lambda })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn data(&self) -> &SampleMatrix<T> {
        &self.data
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self { ridge_lambda: lambda, ..self.clone() }
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok(())
    }

    fn ridge(&self, x: &[T]) -> T {
        T::lit(0.5) * self.ridge_lambda * dot(x, x)
    }

    /// `(1/n) Σ ℓ_j(a_jᵀx)` without the ridge term.
    pub fn data_value(&self, x: &[T]) -> T {
        let sums: Vec<T> = self
            .data
            .as_slice()
            .par_chunks(SHARD * self.d())
            .zip(self.labels.par_chunks(SHARD))
            .map(|(rows, bs)| rows.chunks_exact(self.d()).zip(bs).map(|(a, &b)| self.loss.value(dot(a, x), b)).sum())
            .collect();
        sums.into_iter().sum::<T>() / T::count(self.n())
    }

    pub fn value(&self, x: &[T]) -> T {
        self.data_value(x) + self.ridge(x)
    }

    /// Gradient (a subgradient for the piecewise-linear losses), reduced shard by shard in order
    /// as a server would aggregate worker messages.
    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let d = self.d();
        let parts: Vec<Vec<T>> = self
            .data
            .as_slice()
            .par_chunks(SHARD * d)
            .zip(self.labels.par_chunks(SHARD))
            .map(|(rows, bs)| {
                let mut g = vec![T::zero(); d];
                for (a, &b) in rows.chunks_exact(d).zip(bs) {
                    let c = self.loss.derivative(dot(a, x), b);
                    if c != T::zero() {
                        for (gi, &ai) in g.iter_mut().zip(a) {
                            *gi += c * ai;
                        }
                    }
                }
                g
            })
            .collect();
        let inv_n = T::one() / T::count(self.n());
        let mut g = vec![T::zero(); d];
        for p in &parts {
            for (gi, &v) in g.iter_mut().zip(p) {
                *gi += v;
            }
        }
        g.iter_mut().zip(x).for_each(|(gi, &xi)| *gi = *gi * inv_n + self.ridge_lambda * xi);
        g
    }

    /// `H_x = (1/n) Σ ℓ''(a_jᵀx) a_j a_jᵀ`, without the ridge term.
    pub fn data_hessian(&self, x: &[T]) -> SymMatrix<T> {
        weighted_hessian(&self.data, |a| self.loss.second(dot(a, x)))
    }

    pub fn hessian(&self, x: &[T]) -> SymMatrix<T> {
        self.data_hessian(x).add_identity(self.ridge_lambda)
    }

    /// Upper bound on `λ_max(∇²F)` valid everywhere: `sup ℓ'' · λ_max(ÂᵀÂ/n) + λ`.
    pub fn smoothness_bound(&self) -> Result<T> {
        let sup2 = match self.loss {
            LossKind::Logistic => T::lit(0.25),
            LossKind::Ridge => T::one(),
            _ => return Err(Error::NonSmoothLoss),
        };
        Ok(sup2 * crate::numerics::op_norm(&self.data.second_moment())? + self.ridge_lambda)
    }

    /// `L_ℓ · max_j ‖a_j‖`, the Lipschitz constant of the data term for Lipschitz losses.
    pub fn lipschitz(&self) -> Option<T> {
        let l = self.labels.iter().map(|&b| self.loss.lipschitz(b)).try_fold(T::zero(), |m, v| v.map(|v| m.max(v)))?;
        Some(l * self.data.max_row_norm())
    }
}

/// `(1/n) Σ w(a_j) a_j a_jᵀ` over fixed row shards.
pub(crate) fn weighted_hessian<T: Real>(data: &SampleMatrix<T>, w: impl Fn(&[T]) -> T + Sync) -> SymMatrix<T> {
    let d = data.d();
    let parts: Vec<SymMatrix<T>> = data
        .as_slice()
        .par_chunks(SHARD * d)
        .map(|rows| {
            let ws: Vec<T> = rows.chunks_exact(d).map(&w).collect();
            SymMatrix::weighted_outer_sum(d, rows, |k| ws[k])
        })
        .collect();
    let mut h = SymMatrix::zeros(d);
    for p in &parts {
        h = h.add(p);
    }
    h.scaled(T::one() / T::count(data.n()))
}

/// Value, gradient and Hessian of a twice-differentiable ERM objective.
pub fn erm_value_grad_hess<T: Real>(p: &ErmProblem<T>, x: &[T]) -> Result<(T, Vec<T>, SymMatrix<T>)> {
    p.check(x)?;
    if !p.loss.is_smooth() {
        return Err(Error::NonSmoothLoss);
    }
    Ok((p.value(x), p.gradient(x), p.hessian(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::spectrum::{make_spectrum, sample_gaussian, SpectrumKind};

    fn problem(loss: LossKind, n: usize, d: usize, seed: u64) -> ErmProblem<f64> {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 0.5 }, d, 1.0).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let x = sample_gaussian(&s, n, &mut rng).unwrap();
        let labels = (0..n)
            .map(|_| match loss {
                LossKind::Logistic | LossKind::Hinge => {
                    if rng.uniform::<f64>() < 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => rng.normal(),
            })
            .collect();
        ErmProblem::new(loss, x, labels, 0.1).unwrap()
    }

    #[test]
    fn ridge_at_origin() {
        let p = problem(LossKind::Ridge, 50, 3, 1);
        let (_, g, h) = erm_value_grad_hess(&p, &[0.0; 3]).unwrap();
        let mut want = [0.0; 3];
        for (a, &b) in p.data().rows().zip(p.labels()) {
            for k in 0..3 {
                want[k] -= b * a[k] / 50.0;
            }
        }
        let c = p.data().second_moment().add_identity(0.1);
        for k in 0..3 {
            assert!((g[k] - want[k]).abs() < 1e-13);
        }
        assert!(h.max_abs_diff(&c) < 1e-13);
    }

    #[test]
    fn logistic_hessian_at_origin() {
        let p = problem(LossKind::Logistic, 40, 4, 2);
        let h = p.hessian(&[0.0; 4]);
        let want = p.data().second_moment().scaled(0.25).add_identity(0.1);
        assert!(h.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        for loss in [LossKind::Logistic, LossKind::Ridge] {
            let p = problem(loss, 60, 5, 3);
            let mut rng = RngStream::new(4, 0);
            for _ in 0..10 {
                let x: Vec<f64> = rng.normals(5);
                let (_, g, h) = erm_value_grad_hess(&p, &x).unwrap();
                let step = 1e-5;
                for k in 0..5 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += step;
                    xm[k] -= step;
                    let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * step);
                    assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3), "{loss:?} grad {k}");
                    let (gp, gm) = (p.gradient(&xp), p.gradient(&xm));
                    for j in 0..5 {
                        let fd2 = (gp[j] - gm[j]) / (2.0 * step);
                        assert!((fd2 - h[(j, k)]).abs() <= 1e-6 * h[(j, k)].abs().max(1e-3));
                    }
                }
            }
        }
    }

    #[test]
    fn third_derivative_matches() {
        let l = LossKind::Logistic;
        for &z in &[-3.0f64, -0.2, 0.0, 1.7] {
            let fd = (l.second(z + 1e-6) - l.second(z - 1e-6)) / 2e-6;
            assert!((fd - l.third(z)).abs() < 1e-8);
        }
        // max |ℓ'''| over a fine grid
        let m = (0..200_001).map(|k| l.third(-10.0 + k as f64 * 1e-4).abs()).fold(0.0, f64::max);
        assert!((m - l.second_lipschitz::<f64>()).abs() < 1e-8);
    }

    #[test]
    fn subgradient_kinks_take_flat_side() {
        assert_eq!(LossKind::Hinge.derivative(1.0f64, 1.0), 0.0);
        assert_eq!(LossKind::Hinge.derivative(0.5f64, 1.0), -1.0);
        assert_eq!(LossKind::Absolute.derivative(2.0f64, 2.0), 0.0);
        assert_eq!(LossKind::Logistic.value(1000.0f64, -1.0), 1000.0);
    }

    #[test]
    fn nonsmooth_rejected() {
        let p = problem(LossKind::Hinge, 10, 2, 5);
        assert_eq!(erm_value_grad_hess(&p, &[0.0, 0.0]).unwrap_err(), Error::NonSmoothLoss);
        assert!(p.lipschitz().unwrap() > 0.0);
        let labels = vec![0.5; 10];
        assert!(ErmProblem::new(LossKind::Logistic, p.data().clone(), labels, 0.0).is_err());
    }
}
