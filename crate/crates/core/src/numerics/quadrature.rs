use crate::error::Result;
use crate::numerics::eigen::sym_eigh;
use crate::numerics::matrix::SymMatrix;
use crate::scalar::Real;

/// Gauss–Hermite rule for `E[g(Z)]`, `Z ~ N(0,1)`: `Σ_k w_k g(x_k)`.
#[derive(Debug, Clone)]
pub struct GaussHermite<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussHermite<T> {
    /// Golub–Welsch construction from the probabilists' Hermite Jacobi matrix.
    pub fn new(points: usize) -> Result<Self> {
        let jac = SymMatrix::from_fn(points, |i, j| {
            if i + 1 == j || j + 1 == i {
                T::count(i.max(j)).sqrt()
            } else {
                T::zero()
            }
        });
        let e = sym_eigh(&jac, T::tol(1e-15))?;
        let weights = (0..points).map(|k| e.vectors[(0, k)] * e.vectors[(0, k)]).collect();
        Ok(Self { nodes: e.values, weights })
    }

    pub fn expect(&self, mut g: impl FnMut(T) -> T) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }
}
