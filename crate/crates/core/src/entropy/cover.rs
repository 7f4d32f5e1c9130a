use rayon::prelude::*;
use serde::Serialize;

use super::EllipsoidAxes;
use crate::error::{require, Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

pub const MAX_COVER_DIM: usize = 5;
pub const MAX_COVER_CELLS: u128 = 10_000_000;
const SAMPLE_BATCH: usize = 4096;

/// Finite family of centers whose `epsilon`-balls cover an ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct BallCover<T> {
    pub epsilon: T,
    pub centers: Vec<Vec<T>>,
    /// Grid spacing `ε/√d`; zero for the single-center cover.
    pub grid_spacing: T,
    /// Grid points are kept when their distance to `E_b` is at most `inflation`.
    pub inflation: T,
    pub cells_scanned: u128,
}

impl<T: Real> BallCover<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Drops the `fraction` of centers nearest to `anchor`, carving a hole around it.
    pub fn without_cluster(&self, anchor: &[T], fraction: T) -> Self {
        let drop = (fraction * T::count(self.len())).ceil().to_usize().unwrap().min(self.len());
        let mut order: Vec<(T, usize)> = self.centers.iter().enumerate().map(|(i, c)| (dist_sq(c, anchor), i)).collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut keep = vec![true; self.len()];
        for &(_, i) in &order[..drop] {
            keep[i] = false;
        }
        let centers = self.centers.iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c.clone()).collect();
        Self { centers, ..self.clone() }
    }

    /// Keeps each center independently with probability `1 − fraction`.
    pub fn without_random(&self, fraction: T, rng: &mut RngStream) -> Self {
        let centers = self.centers.iter().filter(|_| rng.uniform::<T>() >= fraction).cloned().collect();
        Self { centers, ..self.clone() }
    }
}

fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance from `p` to `E_b`.
///
/// Outside the ellipsoid the nearest point is `x_i = b_i² p_i/(b_i² + t)` with `t > 0`
/// solving `Σ b_i² p_i²/(b_i² + t)² = 1`; the left side is convex and decreasing in
/// `t`, so Newton from `t = 0` increases monotonically to the root.
pub fn distance_to_ellipsoid<T: Real>(e: &EllipsoidAxes<T>, p: &[T]) -> T {
    if e.contains(p) {
        return T::zero();
    }
    let b = e.axes();
    let mut t = T::zero();
    for _ in 0..200 {
        let mut f = -T::one();
        let mut df = T::zero();
        for (&bi, &pi) in b.iter().zip(p) {
            let b2 = bi * bi;
            let q = b2 + t;
            let term = b2 * pi * pi / (q * q);
            f += term;
            df -= T::lit(2.0) * term / q;
        }
        if f <= T::zero() || df == T::zero() {
            break;
        }
        let next = t - f / df;
        if next <= t {
            break;
        }
        t = next;
    }
    let x: Vec<T> = b.iter().zip(p).map(|(&bi, &pi)| bi * bi * pi / (bi * bi + t)).collect();
    dist_sq(p, &x).sqrt()
}

/// Grid cover of `E_b` at radius `eps`: points of the lattice `(ε/√d)·Z^d` within distance
/// `eps` of `E_b`. Any point of `E_b` is within `ε/2` of a lattice point, and that lattice
/// point is kept, so the cover is valid by construction.
pub fn build_cover<T: Real>(e: &EllipsoidAxes<T>, eps: T) -> Result<BallCover<T>> {
    let d = e.dim();
    if d > MAX_COVER_DIM {
        return Err(Error::DimTooLarge { dim: d, max: MAX_COVER_DIM });
    }
    require(eps > T::zero(), || "eps must be positive".into())?;
    if e.axes()[0] <= eps {
        return Ok(BallCover {
            epsilon: eps,
            centers: vec![vec![T::zero(); d]],
            grid_spacing: T::zero(),
            inflation: eps,
            cells_scanned: 1,
        });
    }
    let h = eps / T::count(d).sqrt();
    let half: Vec<i64> = e.axes().iter().map(|&b| ((b + eps) / h).floor().to_i64().unwrap()).collect();
    let cells: u128 = half.iter().map(|&k| (2 * k + 1) as u128).product();
    if cells > MAX_COVER_CELLS {
        return Err(Error::CoverTooLarge { cells, limit: MAX_COVER_CELLS });
    }
    let mut centers = Vec::new();
    let mut idx: Vec<i64> = half.iter().map(|&k| -k).collect();
    loop {
        let p: Vec<T> = idx.iter().map(|&i| h * T::lit(i as f64)).collect();
        if distance_to_ellipsoid(e, &p) <= eps {
            centers.push(p);
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(BallCover { epsilon: eps, centers, grid_spacing: h, inflation: eps, cells_scanned: cells });
            }
            if idx[axis] < half[axis] {
                idx[axis] += 1;
                break;
            }
            idx[axis] = -half[axis];
            axis += 1;
        }
    }
}

/// `Σ_i ln(b_i/ε)`, clamped at 0: any ε-cover has at least `vol(E_b)/vol(B_ε)` centers.
pub fn volumetric_lower_bound<T: Real>(e: &EllipsoidAxes<T>, eps: T) -> T {
    e.axes().iter().map(|&b| (b / eps).ln()).sum::<T>().max(T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct CoverReport<T> {
    pub samples: usize,
    pub violations: usize,
    pub max_dist: T,
}

fn unit_ball_volume_fraction(d: usize) -> f64 {
    // vol(B_1^d)/2^d
    let pi = std::f64::consts::PI;
    let vol = match d % 2 {
        0 => pi.powi((d / 2) as i32) / (1..=d / 2).map(|k| k as f64).product::<f64>(),
        _ => {
            let k = d / 2;
            2.0 * (4.0 * pi).powi(k as i32) * (1..=k).map(|j| j as f64).product::<f64>()
                / (1..=d).map(|j| j as f64).product::<f64>()
        }
    };
    vol / 2f64.powi(d as i32)
}

/// Uniform point of `E_b`: box rejection, or a uniform ball point mapped by `diag(b)` when
/// the box acceptance rate would fall below `1e-4`.
pub fn sample_ellipsoid<T: Real>(e: &EllipsoidAxes<T>, rng: &mut RngStream) -> Vec<T> {
    let d = e.dim();
    if unit_ball_volume_fraction(d) >= 1e-4 {
        loop {
            let p: Vec<T> = e.axes().iter().map(|&b| b * (T::lit(2.0) * rng.uniform::<T>() - T::one())).collect();
            if e.contains(&p) {
                return p;
            }
        }
    }
    let dir: Vec<T> = rng.unit_vector(d);
    let radius = rng.uniform::<T>().powf(T::one() / T::count(d));
    dir.iter().zip(e.axes()).map(|(&u, &b)| u * radius * b).collect()
}

/// Monte-Carlo check of the cover property on uniform samples of `E_b`.
/// Batch `k` draws from `rng.substream(k)`; results merge in batch order.
pub fn verify_cover<T: Real>(cover: &BallCover<T>, e: &EllipsoidAxes<T>, n_samples: usize, rng: &RngStream) -> Result<CoverReport<T>> {
    require(n_samples >= 1, || "n_samples must be at least 1".into())?;
    require(cover.centers.iter().all(|c| c.len() == e.dim()), || "cover and ellipsoid dimensions differ".into())?;
    let batches = n_samples.div_ceil(SAMPLE_BATCH);
    let eps_sq = cover.epsilon * cover.epsilon;
    let parts: Vec<(usize, T)> = (0..batches)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng.substream(k as u64);
            let count = SAMPLE_BATCH.min(n_samples - k * SAMPLE_BATCH);
            let mut violations = 0;
            let mut worst = T::zero();
            for _ in 0..count {
                let x = sample_ellipsoid(e, &mut stream);
                let best = cover.centers.iter().map(|c| dist_sq(c, &x)).fold(T::infinity(), T::min);
                if best > eps_sq {
                    violations += 1;
                }
                worst = worst.max(best);
            }
            (violations, worst.sqrt())
        })
        .collect();
    let violations = parts.iter().map(|p| p.0).sum();
    let max_dist = parts.iter().map(|p| p.1).fold(T::zero(), T::max);
    Ok(CoverReport { samples: n_samples, violations, max_dist })
}
