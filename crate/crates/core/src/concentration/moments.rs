use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{SymMatrix, SymTensor};
use crate::scalar::Real;
use crate::spectrum::{CovarianceSpectrum, SampleMatrix};

const ROW_BLOCK: usize = 4096;

/// Non-decreasing index tuples of length `order` over `0..dim`, one per symmetric orbit.
fn sorted_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; order];
    loop {
        out.push(idx.clone());
        let mut k = order;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] + 1 < dim {
                let v = idx[k] + 1;
                for slot in &mut idx[k..] {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// Empirical moment tensor `(1/n) Σ a_i^{⊗p}` and the per-entry Monte-Carlo standard error.
///
/// Rows are reduced in fixed blocks whose partial sums are combined in block order, so the
/// result does not depend on the thread count.
pub fn moment_tensor<T: Real>(samples: &SampleMatrix<T>, order: usize) -> Result<(SymTensor<T>, SymTensor<T>)> {
    let d = samples.d();
    let keys = sorted_indices(d, order);
    let k = keys.len();
    let blocks: Vec<(Vec<T>, Vec<T>)> = samples
        .as_slice()
        .par_chunks(ROW_BLOCK * d)
        .map(|block| {
            let mut s = vec![T::zero(); k];
            let mut s2 = vec![T::zero(); k];
            for a in block.chunks_exact(d) {
                for (j, key) in keys.iter().enumerate() {
                    let prod = key.iter().fold(T::one(), |acc, &i| acc * a[i]);
                    s[j] += prod;
                    s2[j] += prod * prod;
                }
            }
            (s, s2)
        })
        .collect();
    let mut sum = vec![T::zero(); k];
    let mut sum_sq = vec![T::zero(); k];
    for (s, s2) in &blocks {
        for j in 0..k {
            sum[j] += s[j];
            sum_sq[j] += s2[j];
        }
    }
    let n = T::count(samples.n());
    let mean: Vec<T> = sum.iter().map(|&s| s / n).collect();
    let stderr: Vec<T> = (0..k)
        .map(|j| {
            if samples.n() < 2 {
                return T::zero();
            }
            let var = ((sum_sq[j] - n * mean[j] * mean[j]) / (n - T::one())).max(T::zero());
            (var / n).sqrt()
        })
        .collect();
    let lookup = |vals: &[T]| {
        SymTensor::from_fn(d, order, |idx| {
            let mut key = idx.to_vec();
            key.sort_unstable();
            vals[keys.binary_search(&key).expect("sorted key present")]
        })
    };
    Ok((lookup(&mean)?, lookup(&stderr)?))
}

fn matchings(items: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if items.is_empty() {
        out.push(acc.clone());
        return;
    }
    let first = items[0];
    for j in 1..items.len() {
        let rest: Vec<usize> = items[1..].iter().enumerate().filter(|&(i, _)| i + 1 != j).map(|(_, &v)| v).collect();
        acc.push((first, items[j]));
        matchings(&rest, acc, out);
        acc.pop();
    }
}

/// All perfect matchings of `0..order` (empty for odd orders).
pub(crate) fn perfect_matchings(order: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    if order % 2 == 0 {
        let items: Vec<usize> = (0..order).collect();
        matchings(&items, &mut Vec::new(), &mut out);
    }
    out
}

/// `E[a^{⊗p}]` for `a ~ N(0, Σ)` via Isserlis pairings, `p ∈ {2, 3, 4}`.
pub fn gaussian_moment_tensor<T: Real>(s: &CovarianceSpectrum<T>, order: usize) -> Result<SymTensor<T>> {
    if !(2..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    isserlis_tensor(&s.covariance(), order)
}

pub(crate) fn isserlis_tensor<T: Real>(cov: &SymMatrix<T>, order: usize) -> Result<SymTensor<T>> {
    let pairs = perfect_matchings(order);
    SymTensor::from_fn(cov.dim(), order, |idx| {
        pairs
            .iter()
            .map(|m| m.iter().fold(T::one(), |acc, &(a, b)| acc * cov[(idx[a], idx[b])]))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::spectrum::sample_gaussian;

    #[test]
    fn orbit_enumeration() {
        assert_eq!(sorted_indices(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(sorted_indices(3, 4).len(), 15);
        assert_eq!(sorted_indices(40, 2).len(), 820);
    }

    #[test]
    fn matching_counts() {
        assert_eq!(perfect_matchings(2).len(), 1);
        assert_eq!(perfect_matchings(3).len(), 0);
        assert_eq!(perfect_matchings(4).len(), 3);
        assert_eq!(perfect_matchings(6).len(), 15);
    }

    #[test]
    fn isserlis_fourth_moment_diagonal() {
        let s = CovarianceSpectrum::new(vec![2.0f64, 1.0], None).unwrap();
        let t = gaussian_moment_tensor(&s, 4).unwrap();
        assert_eq!(t.get(&[0, 0, 0, 0]), 3.0 * 16.0);
        assert_eq!(t.get(&[0, 0, 1, 1]), 4.0);
        assert_eq!(t.get(&[0, 1, 0, 1]), 4.0);
        assert_eq!(t.get(&[0, 0, 0, 1]), 0.0);
        assert!(matches!(gaussian_moment_tensor(&s, 5), Err(Error::UnsupportedOrder(5))));
        let odd = gaussian_moment_tensor(&s, 3).unwrap();
        assert!(odd.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empirical_second_moment_matches_matrix_route() {
        let s = CovarianceSpectrum::new(vec![1.5f64, 1.0, 0.3], None).unwrap();
        let x = sample_gaussian(&s, 5000, &mut RngStream::new(1, 1)).unwrap();
        let (m, se) = moment_tensor(&x, 2).unwrap();
        let c = x.second_moment();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(&[i, j]) - c[(i, j)]).abs() < 1e-12);
                assert!(se.get(&[i, j]) > 0.0);
            }
        }
    }
}
