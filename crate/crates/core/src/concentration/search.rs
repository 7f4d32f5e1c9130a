//! Lower estimates of suprema over products of unit balls.

use rayon::prelude::*;

use super::{Nonlinearity, SearchConfig};
use crate::error::{require, Result};
use crate::numerics::{sphere_net, RngStream, SymTensor};
use crate::scalar::{axpy, dot, norm, project_ball, Real};
use crate::spectrum::SampleMatrix;

const ROW_BLOCK: usize = 4096;
const NET_WORK_LIMIT: f64 = 1e10;

/// The function maximized over `x_1, …, x_r ∈ 𝓑`.
pub(crate) enum Objective<'a, T: Real> {
    /// Multilinear form of a symmetric tensor.
    Tensor(SymTensor<T>),
    /// `(1/n)Σ_i Π_k f_k(a_iᵀx_k)` minus the same mean over an optional reference sample.
    Samples { data: &'a SampleMatrix<T>, reference: Option<&'a SampleMatrix<T>>, fs: &'a [Nonlinearity<T>] },
}

pub(crate) struct SearchResult<T> {
    pub value: T,
    pub argmax: Vec<Vec<T>>,
}

/// Mean of `Π_k f_k(aᵀx_k)` over the rows, with gradients in each `x_k` when requested.
fn mean_product<T: Real>(s: &SampleMatrix<T>, fs: &[Nonlinearity<T>], xs: &[Vec<T>], with_grad: bool) -> (T, Vec<Vec<T>>) {
    let d = s.d();
    let r = fs.len();
    let parts: Vec<(T, Vec<Vec<T>>)> = s
        .as_slice()
        .par_chunks(ROW_BLOCK * d)
        .map(|block| {
            let mut total = T::zero();
            let mut grads = if with_grad { vec![vec![T::zero(); d]; r] } else { Vec::new() };
            let mut vals = vec![T::zero(); r];
            let mut prefix = vec![T::one(); r + 1];
            for a in block.chunks_exact(d) {
                for k in 0..r {
                    vals[k] = fs[k].apply(dot(a, &xs[k]));
                    prefix[k + 1] = prefix[k] * vals[k];
                }
                total += prefix[r];
                if with_grad {
                    let mut suffix = T::one();
                    for k in (0..r).rev() {
                        let coef = fs[k].slope(dot(a, &xs[k])) * prefix[k] * suffix;
                        if coef != T::zero() {
                            axpy(coef, a, &mut grads[k]);
                        }
                        suffix *= vals[k];
                    }
                }
            }
            (total, grads)
        })
        .collect();
    let n = T::count(s.n());
    let mut total = T::zero();
    let mut grads = if with_grad { vec![vec![T::zero(); d]; r] } else { Vec::new() };
    for (t, g) in parts {
        total += t;
        for (acc, gk) in grads.iter_mut().zip(g) {
            axpy(T::one(), &gk, acc);
        }
    }
    grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v /= n));
    (total / n, grads)
}

/// Standard error of the reference mean of `Π_k f_k(aᵀx_k)` at `xs`.
pub(crate) fn product_stderr<T: Real>(s: &SampleMatrix<T>, fs: &[Nonlinearity<T>], xs: &[Vec<T>]) -> T {
    let n = s.n();
    if n < 2 {
        return T::zero();
    }
    let prods: Vec<T> = s
        .rows()
        .map(|a| fs.iter().zip(xs).fold(T::one(), |acc, (f, x)| acc * f.apply(dot(a, x))))
        .collect();
    let nn = T::count(n);
    let mean = prods.iter().copied().sum::<T>() / nn;
    let var = prods.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / (nn - T::one());
    (var / nn).sqrt()
}

impl<T: Real> Objective<'_, T> {
    fn order(&self) -> usize {
        match self {
            Objective::Tensor(t) => t.order(),
            Objective::Samples { fs, .. } => fs.len(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Objective::Tensor(t) => t.dim(),
            Objective::Samples { data, .. } => data.d(),
        }
    }

    pub(crate) fn value(&self, xs: &[Vec<T>]) -> T {
        match self {
            Objective::Tensor(t) => {
                let refs: Vec<&[T]> = xs.iter().map(|v| v.as_slice()).collect();
                t.multilinear(&refs)
            }
            Objective::Samples { data, reference, fs } => {
                let (v, _) = mean_product(data, fs, xs, false);
                match reference {
                    Some(rf) => v - mean_product(rf, fs, xs, false).0,
                    None => v,
                }
            }
        }
    }

    fn value_grad(&self, xs: &[Vec<T>]) -> (T, Vec<Vec<T>>) {
        match self {
            Objective::Tensor(_) => unreachable!("tensor objectives use block updates"),
            Objective::Samples { data, reference, fs } => {
                let (v, mut g) = mean_product(data, fs, xs, true);
                match reference {
                    Some(rf) => {
                        let (vr, gr) = mean_product(rf, fs, xs, true);
                        for (gk, grk) in g.iter_mut().zip(&gr) {
                            axpy(-T::one(), grk, gk);
                        }
                        (v - vr, g)
                    }
                    None => (v, g),
                }
            }
        }
    }
}

/// Alternating exact block maximization of a symmetric multilinear form: with the other
/// blocks fixed the form is linear in `x_k`, maximized on the ball at `g_k/‖g_k‖`.
fn block_ascent<T: Real>(t: &SymTensor<T>, mut xs: Vec<Vec<T>>, iters: usize) -> SearchResult<T> {
    let r = t.order();
    let refs: Vec<&[T]> = xs.iter().map(|v| v.as_slice()).collect();
    let mut val = t.multilinear(&refs);
    for _ in 0..iters {
        let before = val;
        for k in 0..r {
            let others: Vec<&[T]> = (0..r).filter(|&j| j != k).map(|j| xs[j].as_slice()).collect();
            let g = t.contract_tail(&others);
            let ng = norm(&g);
            if ng > T::zero() {
                xs[k] = g.iter().map(|&v| v / ng).collect();
                val = ng;
            }
        }
        if val - before <= T::epsilon() * T::lit(4.0) * val.abs() {
            break;
        }
    }
    SearchResult { value: val, argmax: xs }
}

fn gradient_ascent<T: Real>(obj: &Objective<'_, T>, mut xs: Vec<Vec<T>>, iters: usize, step: T) -> SearchResult<T> {
    let mut best = SearchResult { value: T::neg_infinity(), argmax: xs.clone() };
    for _ in 0..iters {
        let (v, grads) = obj.value_grad(&xs);
        if v > best.value {
            best = SearchResult { value: v, argmax: xs.clone() };
        }
        let mut moved = T::zero();
        for (x, g) in xs.iter_mut().zip(&grads) {
            axpy(step, g, x);
            project_ball(x, T::one());
            moved = moved.max(norm(g) * step);
        }
        if moved <= T::epsilon() {
            break;
        }
    }
    let v = obj.value(&xs);
    if v > best.value {
        best = SearchResult { value: v, argmax: xs };
    }
    best
}

/// Restart `j` starts from unit vectors drawn from `rng.substream(j)`, so a larger
/// budget only adds candidates and the estimate is monotone in `restarts`.
pub(crate) fn multistart<T: Real>(obj: &Objective<'_, T>, restarts: usize, iters: usize, step: T, rng: &RngStream) -> SearchResult<T> {
    let r = obj.order();
    let d = obj.dim();
    let runs: Vec<SearchResult<T>> = (0..restarts)
        .into_par_iter()
        .map(|j| {
            let mut stream = rng.substream(j as u64);
            let xs: Vec<Vec<T>> = (0..r).map(|_| stream.unit_vector(d)).collect();
            match obj {
                Objective::Tensor(t) => block_ascent(t, xs, iters),
                Objective::Samples { .. } => gradient_ascent(obj, xs, iters, step),
            }
        })
        .collect();
    let mut best = SearchResult { value: T::neg_infinity(), argmax: vec![vec![T::zero(); d]; r] };
    for run in runs {
        if run.value > best.value {
            best = run;
        }
    }
    best
}

/// Points within `resolution` of every point of the unit ball: the origin plus shells of
/// radius `k·resolution` (k ≥ 1, last shell at 1), each a sphere net at `resolution/2`.
fn ball_net<T: Real>(dim: usize, resolution: T) -> Result<Vec<Vec<T>>> {
    let sphere = sphere_net(dim, resolution * T::lit(0.5))?;
    let shells = (T::one() / resolution).ceil().to_usize().unwrap();
    let mut out = vec![vec![T::zero(); dim]];
    for k in 1..=shells {
        let rad = (T::count(k) * resolution).min(T::one());
        out.extend(sphere.iter().map(|u| u.iter().map(|&v| v * rad).collect()));
    }
    Ok(out)
}

fn enumerate_tuples<T: Real>(points: usize, r: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; r];
    loop {
        visit(&idx);
        let mut k = r;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Exhaustive search over `net^r`: the sphere net for multilinear forms (their sup over the
/// ball is attained on the sphere), a ball net otherwise.
pub(crate) fn net_search<T: Real>(obj: &Objective<'_, T>, resolution: T) -> Result<SearchResult<T>> {
    let d = obj.dim();
    let r = obj.order();
    require(d <= 3, || format!("net search is limited to d <= 3 (got {d})"))?;
    let points = match obj {
        Objective::Tensor(_) => sphere_net(d, resolution)?,
        Objective::Samples { .. } => ball_net(d, resolution)?,
    };
    let rows = match obj {
        Objective::Tensor(_) => d as f64,
        Objective::Samples { data, reference, .. } => (data.n() + reference.map_or(0, |s| s.n())) as f64,
    };
    let work = (points.len() as f64).powi(r as i32) * rows;
    require(work <= NET_WORK_LIMIT, || format!("net search would need about {work:.2e} evaluations"))?;

    let mut best = SearchResult { value: T::neg_infinity(), argmax: Vec::new() };
    match obj {
        Objective::Tensor(_) => {
            enumerate_tuples::<T>(points.len(), r, |idx| {
                let xs: Vec<Vec<T>> = idx.iter().map(|&i| points[i].clone()).collect();
                let v = obj.value(&xs);
                if v > best.value {
                    best = SearchResult { value: v, argmax: xs };
                }
            });
        }
        Objective::Samples { data, reference, fs } => {
            // f_k(a_iᵀp) for every net point, factor and row
            let table = |s: &SampleMatrix<T>| -> Vec<Vec<Vec<T>>> {
                points
                    .iter()
                    .map(|p| {
                        let proj: Vec<T> = s.rows().map(|a| dot(a, p)).collect();
                        fs.iter().map(|f| proj.iter().map(|&z| f.apply(z)).collect()).collect()
                    })
                    .collect()
            };
            let tab = table(data);
            let tab_ref = reference.map(|s| table(s));
            let mean_over = |t: &Vec<Vec<Vec<T>>>, idx: &[usize], n: usize| -> T {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += idx.iter().enumerate().fold(T::one(), |m, (k, &p)| m * t[p][k][i]);
                }
                acc / T::count(n)
            };
            enumerate_tuples::<T>(points.len(), r, |idx| {
                let mut v = mean_over(&tab, idx, data.n());
                if let (Some(tr), Some(rf)) = (&tab_ref, reference) {
                    v -= mean_over(tr, idx, rf.n());
                }
                if v > best.value {
                    best = SearchResult { value: v, argmax: idx.iter().map(|&i| points[i].clone()).collect() };
                }
            });
        }
    }
    Ok(best)
}

pub(crate) fn run_search<T: Real>(obj: &Objective<'_, T>, search: &SearchConfig<T>, rng: &RngStream) -> Result<SearchResult<T>> {
    match *search {
        SearchConfig::Net { resolution } => net_search(obj, resolution),
        SearchConfig::Multistart { restarts, iters, step } => {
            require(restarts >= 1, || "multistart needs at least one restart".into())?;
            require(step > T::zero(), || "multistart step must be positive".into())?;
            Ok(multistart(obj, restarts, iters, step, rng))
        }
    }
}
