use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::scalar::{dot, norm, Real};

/// Dense symmetric tensor of order `p ≥ 2` over `R^dim`, stored as a flat `dim^p` array
/// with the first index most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SymTensor<T> {
    dim: usize,
    order: usize,
    data: Vec<T>,
}

fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// Contracts the last axis of a `dim^k` array with `x`, giving a `dim^(k-1)` array.
fn contract_last<T: Real>(data: &[T], x: &[T]) -> Vec<T> {
    data.chunks_exact(x.len()).map(|c| dot(c, x)).collect()
}

impl<T: Real> SymTensor<T> {
    /// Builds a tensor from arbitrary entries, replacing each by its average over all
    /// index permutations.
    pub fn from_fn(dim: usize, order: usize, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        Self::check_shape(dim, order)?;
        let size = dim.pow(order as u32);
        let mut idx = vec![0; order];
        let data = (0..size)
            .map(|flat| {
                unflatten(flat, dim, &mut idx);
                f(&idx)
            })
            .collect();
        Ok(Self::symmetrized(dim, order, data))
    }

    pub fn from_flat(dim: usize, order: usize, data: Vec<T>) -> Result<Self> {
        Self::check_shape(dim, order)?;
        let size = dim.pow(order as u32);
        if data.len() != size {
            return Err(Error::DimensionMismatch { expected: size, got: data.len() });
        }
        Ok(Self::symmetrized(dim, order, data))
    }

    fn check_shape(dim: usize, order: usize) -> Result<()> {
        if dim == 0 || order < 2 {
            return Err(Error::Precondition("tensor needs dim >= 1 and order >= 2".into()));
        }
        Ok(())
    }

    fn symmetrized(dim: usize, order: usize, data: Vec<T>) -> Self {
        let size = data.len();
        let mut sums = vec![T::zero(); size];
        let mut counts = vec![0u32; size];
        let mut keys = Vec::with_capacity(size);
        let mut idx = vec![0; order];
        for (flat, &v) in data.iter().enumerate() {
            unflatten(flat, dim, &mut idx);
            idx.sort_unstable();
            let key = flatten(&idx, dim);
            sums[key] += v;
            counts[key] += 1;
            keys.push(key);
        }
        let data = keys.iter().map(|&k| sums[k] / T::lit(counts[k] as f64)).collect();
        Self { dim, order, data }
    }

    pub fn zeros(dim: usize, order: usize) -> Result<Self> {
        Self::check_shape(dim, order)?;
        Ok(Self { dim, order, data: vec![T::zero(); dim.pow(order as u32)] })
    }

    /// `v^{⊗p}`.
    pub fn rank_one(v: &[T], order: usize) -> Result<Self> {
        let mut t = Self::zeros(v.len(), order)?;
        t.add_rank_one(v, T::one());
        Ok(t)
    }

    /// Adds `w · v^{⊗p}` in place; the result stays exactly symmetric.
    pub fn add_rank_one(&mut self, v: &[T], w: T) {
        assert_eq!(v.len(), self.dim);
        let mut block = vec![w];
        for _ in 0..self.order {
            let mut next = Vec::with_capacity(block.len() * self.dim);
            for &b in &block {
                next.extend(v.iter().map(|&x| b * x));
            }
            block = next;
        }
        for (d, b) in self.data.iter_mut().zip(block) {
            *d += b;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[flatten(idx, self.dim)]
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.order), (other.dim, other.order));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { dim: self.dim, order: self.order, data }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { dim: self.dim, order: self.order, data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// `⟨T, x_1 ⊗ … ⊗ x_p⟩`.
    pub fn multilinear(&self, xs: &[&[T]]) -> T {
        assert_eq!(xs.len(), self.order);
        let mut cur = contract_last(&self.data, xs[self.order - 1]);
        for k in (0..self.order - 1).rev() {
            cur = contract_last(&cur, xs[k]);
        }
        cur[0]
    }

    /// `T x^{p−1}`, the gradient of `⟨T, x^{⊗p}⟩` divided by `p`.
    pub fn contract_all_but_one(&self, x: &[T]) -> Vec<T> {
        let mut cur = contract_last(&self.data, x);
        for _ in 0..self.order - 2 {
            cur = contract_last(&cur, x);
        }
        cur
    }

    /// Contracts the last `xs.len()` axes with `xs` (the last vector meets the last axis).
    pub fn contract_tail(&self, xs: &[&[T]]) -> Vec<T> {
        assert!(xs.len() < self.order);
        let mut cur = self.data.clone();
        for x in xs.iter().rev() {
            cur = contract_last(&cur, x);
        }
        cur
    }

    /// `⟨T, x^{⊗p}⟩`.
    pub fn form(&self, x: &[T]) -> T {
        dot(&self.contract_all_but_one(x), x)
    }
}

/// Lower estimate of `‖t‖_op = sup_{‖x‖=1} |⟨t, x^{⊗p}⟩|` by shifted symmetric power
/// iteration from `restarts` random starts; restart `j` draws from `rng.substream(j)`.
pub fn tensor_opnorm<T: Real>(t: &SymTensor<T>, restarts: usize, iters: usize, rng: &RngStream) -> T {
    assert!(restarts >= 1, "tensor_opnorm needs at least one restart");
    let fro = t.frobenius_norm();
    if fro == T::zero() {
        return T::zero();
    }
    // both signs for every order: this makes the estimate exactly invariant under t -> -t
    let signs = [T::one(), -T::one()];
    let mut best = T::zero();
    for j in 0..restarts {
        let mut stream = rng.substream(j as u64);
        let x0: Vec<T> = stream.unit_vector(t.dim());
        for s in signs {
            best = best.max(power_ascent(t, s, &x0, iters, fro).abs());
        }
    }
    best
}

/// Maximizes `s·⟨t, x^{⊗p}⟩` on the sphere. Each step tries the plain power update and
/// falls back to the convexity-shifted one when the plain step does not improve.
fn power_ascent<T: Real>(t: &SymTensor<T>, s: T, x0: &[T], iters: usize, fro: T) -> T {
    let p = T::count(t.order());
    let shift = (p - T::one()) * fro;
    let mut x = x0.to_vec();
    let mut g = t.contract_all_but_one(&x);
    let mut val = s * dot(&g, &x);
    for _ in 0..iters {
        let mut cand: Vec<T> = g.iter().map(|&v| s * v).collect();
        let mut cand_ok = normalize(&mut cand);
        let mut cand_g = if cand_ok { t.contract_all_but_one(&cand) } else { Vec::new() };
        if !cand_ok || s * dot(&cand_g, &cand) < val {
            cand = g.iter().zip(&x).map(|(&gi, &xi)| s * gi + shift * xi).collect();
            cand_ok = normalize(&mut cand);
            if !cand_ok {
                break;
            }
            cand_g = t.contract_all_but_one(&cand);
        }
        let cand_val = s * dot(&cand_g, &cand);
        let moved = cand.iter().zip(&x).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        if cand_val < val {
            break;
        }
        x = cand;
        g = cand_g;
        let gain = cand_val - val;
        val = cand_val;
        if gain <= T::epsilon() * (T::one() + val.abs()) && moved <= T::tol(1e-12) {
            break;
        }
    }
    val
}

fn normalize<T: Real>(v: &mut [T]) -> bool {
    let n = norm(v);
    if n > T::zero() && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::net::sphere_net;
    use proptest::prelude::*;

    fn random_tensor(dim: usize, order: usize, seed: u64) -> SymTensor<f64> {
        let mut r = RngStream::new(seed, 99);
        SymTensor::from_fn(dim, order, |_| r.normal()).unwrap()
    }

    #[test]
    fn symmetrization_is_exact() {
        let t = random_tensor(3, 3, 1);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = t.get(&[i, j, k]);
                    assert_eq!(v, t.get(&[j, i, k]));
                    assert_eq!(v, t.get(&[k, j, i]));
                    assert_eq!(v, t.get(&[j, k, i]));
                }
            }
        }
    }

    #[test]
    fn rank_one_norm() {
        let v = [2.0 / 3.0f64.sqrt(); 3];
        let t = SymTensor::rank_one(&v, 3).unwrap();
        let got = tensor_opnorm(&t, 4, 100, &RngStream::new(0, 0));
        assert!((got - 8.0).abs() < 1e-6);
    }

    #[test]
    fn zero_tensor() {
        let t = SymTensor::<f64>::zeros(4, 3).unwrap();
        assert_eq!(tensor_opnorm(&t, 3, 10, &RngStream::new(0, 0)), 0.0);
    }

    #[test]
    fn matches_fine_net_at_dim3() {
        let net = sphere_net(3, 0.01f64).unwrap();
        for seed in 0..3 {
            let t = random_tensor(3, 3, seed);
            let oracle = net.iter().map(|x| t.form(x).abs()).fold(0.0, f64::max);
            let got = tensor_opnorm(&t, 32, 500, &RngStream::new(seed, 1));
            assert!((got - oracle).abs() <= 0.01 * oracle, "power {got} vs net {oracle}");
        }
    }

    #[test]
    fn diagonal_restriction_matches_multiblock_net() {
        // sup over independent unit vectors equals sup over the diagonal for symmetric tensors
        let net = sphere_net(2, 0.01f64).unwrap();
        for seed in 0..3 {
            let t = random_tensor(2, 3, seed + 10);
            let mut oracle: f64 = 0.0;
            for a in &net {
                let ta = contract_last(t.as_slice(), a);
                for b in &net {
                    let tab = contract_last(&ta, b);
                    for c in net.iter().step_by(1) {
                        oracle = oracle.max(dot(&tab, c).abs());
                    }
                }
            }
            let got = tensor_opnorm(&t, 16, 500, &RngStream::new(seed, 2));
            assert!((got - oracle).abs() <= 0.01 * oracle, "power {got} vs multiblock {oracle}");
        }
    }

    #[test]
    fn order_four_matches_net() {
        let net = sphere_net(3, 0.02f64).unwrap();
        let t = random_tensor(3, 4, 5);
        let oracle = net.iter().map(|x| t.form(x).abs()).fold(0.0, f64::max);
        let got = tensor_opnorm(&t, 32, 500, &RngStream::new(5, 0));
        assert!((got - oracle).abs() <= 0.01 * oracle);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sign_symmetric_and_below_frobenius(dim in 1usize..5, order in 2usize..5, seed in any::<u64>()) {
            let t = random_tensor(dim, order, seed);
            let rng = RngStream::new(seed, 3);
            let a = tensor_opnorm(&t, 8, 200, &rng);
            let b = tensor_opnorm(&t.scaled(-1.0), 8, 200, &rng);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            prop_assert!(a <= t.frobenius_norm() * (1.0 + 1e-12));
        }

        #[test]
        fn budget_monotone(seed in any::<u64>(), r in 1usize..8) {
            let t = random_tensor(3, 3, seed);
            let rng = RngStream::new(seed, 4);
            prop_assert!(tensor_opnorm(&t, r + 3, 100, &rng) >= tensor_opnorm(&t, r, 100, &rng));
        }
    }
}
