//! Cyclic Jacobi eigendecomposition and the spectral functions built on it.

use crate::error::{Error, Result};
use crate::numerics::matrix::{DenseMatrix, SymMatrix};
use crate::scalar::Real;

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Eigh<T> {
    pub values: Vec<T>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: DenseMatrix<T>,
    pub sweeps: usize,
}

impl<T: Real> Eigh<T> {
    pub fn reconstruct(&self) -> SymMatrix<T> {
        SymMatrix::from_eigen(&self.vectors, &self.values)
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let mapped: Vec<T> = self.values.iter().map(|&v| f(v)).collect();
        SymMatrix::from_eigen(&self.vectors, &mapped)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

fn off_diagonal_norm<T: Real>(a: &[T], n: usize) -> T {
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Stops once the off-diagonal Frobenius mass drops below `tol·‖m‖_F / 2`
/// (floored at the scalar's working precision), which bounds the
/// reconstruction error by the same quantity.
pub fn sym_eigh<T: Real>(m: &SymMatrix<T>, tol: T) -> Result<Eigh<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Precondition("eigensolver tolerance must be positive".into()));
    }
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    let mut v = DenseMatrix::<T>::identity(n);
    let scale = m.frobenius_norm();
    let floor = T::epsilon() * T::count(4 * n);
    let target = tol.max(floor) * scale * T::lit(0.5);

    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (apq + apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Eigh { values, vectors, sweeps })
}

fn default_tol<T: Real>() -> T {
    T::tol(1e-13)
}

/// Largest absolute eigenvalue.
pub fn op_norm<T: Real>(m: &SymMatrix<T>) -> Result<T> {
    Ok(sym_eigh(m, default_tol())?.max_abs())
}

/// Principal square root of a PSD matrix; small negative eigenvalues are clamped to zero.
pub fn psd_sqrt<T: Real>(m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let e = sym_eigh(m, default_tol())?;
    let opn = e.max_abs();
    let min = *e.values.last().expect("nonempty spectrum");
    if min < -T::tol(1e-10) * opn {
        return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
    }
    Ok(e.map(|v| v.max(T::zero()).sqrt()))
}

/// Moore–Penrose pseudo-inverse; eigenvalues at or below `rank_tol·λ_max` are dropped.
pub fn psd_pinv<T: Real>(m: &SymMatrix<T>, rank_tol: T) -> Result<SymMatrix<T>> {
    let e = sym_eigh(m, default_tol())?;
    let cutoff = rank_tol * e.max_abs();
    Ok(e.map(|v| if v > cutoff { T::one() / v } else { T::zero() }))
}
