use crate::numerics::SymMatrix;
use crate::scalar::{dot, Real};

use super::problem::ErmProblem;

/// A convex function with value, gradient and Hessian oracles.
pub trait ConvexFunction<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T]) -> Vec<T>;
    fn hessian(&self, x: &[T]) -> SymMatrix<T>;
}

/// `½‖x‖²`
#[derive(Debug, Clone, Copy)]
pub struct HalfSquaredNorm {
    pub dim: usize,
}

impl<T: Real> ConvexFunction<T> for HalfSquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[T]) -> T {
        T::lit(0.5) * dot(x, x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }
    fn hessian(&self, _x: &[T]) -> SymMatrix<T> {
        SymMatrix::identity(self.dim)
    }
}

/// `c · f`
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a, F, T> {
    pub inner: &'a F,
    pub factor: T,
}

impl<T: Real, F: ConvexFunction<T>> ConvexFunction<T> for Scaled<'_, F, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[T]) -> T {
        self.factor * self.inner.value(x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        self.inner.gradient(x).into_iter().map(|g| self.factor * g).collect()
    }
    fn hessian(&self, x: &[T]) -> SymMatrix<T> {
        self.inner.hessian(x).scaled(self.factor)
    }
}

/// Hessian is the almost-everywhere one for piecewise-linear losses.
impl<T: Real> ConvexFunction<T> for ErmProblem<T> {
    fn dim(&self) -> usize {
        self.d()
    }
    fn value(&self, x: &[T]) -> T {
        ErmProblem::value(self, x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        ErmProblem::gradient(self, x)
    }
    fn hessian(&self, x: &[T]) -> SymMatrix<T> {
        ErmProblem::hessian(self, x)
    }
}

/// `D_φ(x, y) = φ(x) − φ(y) − ⟨∇φ(y), x − y⟩`
pub fn bregman_div<T: Real, F: ConvexFunction<T> + ?Sized>(phi: &F, x: &[T], y: &[T]) -> T {
    let g = phi.gradient(y);
    let lin: T = g.iter().zip(x.iter().zip(y)).map(|(&gi, (&xi, &yi))| gi * (xi - yi)).sum();
    phi.value(x) - phi.value(y) - lin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::LossKind;
    use crate::numerics::RngStream;
    use crate::spectrum::{make_spectrum, sample_gaussian, SpectrumKind};
    use proptest::prelude::*;

    #[test]
    fn quadratic_divergence() {
        let phi = HalfSquaredNorm { dim: 3 };
        let x = [1.0f64, -2.0, 0.5];
        let y = [0.0, 1.0, 2.0];
        let want = 0.5 * (1.0 + 9.0 + 2.25);
        assert!((bregman_div(&phi, &x, &y) - want).abs() < 1e-14);
        assert_eq!(bregman_div(&phi, &x, &x), 0.0);
    }

    proptest! {
        #[test]
        fn logistic_divergence_nonnegative(seed in 0u64..1000) {
            let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 6, 2.0).unwrap();
            let mut rng = RngStream::new(seed, 0);
            let data = sample_gaussian(&s, 30, &mut rng).unwrap();
            let labels = (0..30).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
            let p = ErmProblem::new(LossKind::Logistic, data, labels, 0.01).unwrap();
            let x: Vec<f64> = rng.normals(6);
            let y: Vec<f64> = rng.normals(6);
            prop_assert!(bregman_div(&p, &x, &y) >= -1e-10);
            prop_assert_eq!(bregman_div(&p, &x, &x), 0.0);
        }
    }
}
