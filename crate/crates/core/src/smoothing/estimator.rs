use rayon::prelude::*;

use super::{GradientBatch, SmoothingConfig, SmoothingMode};
use crate::erm::ErmProblem;
use crate::error::{require, Error, Result};
use crate::numerics::{psd_sqrt, RngStream, SymMatrix};
use crate::scalar::{dot, Real};

const MC_BLOCK: usize = 256;

/// Draws `Z ~ N(0, Σ')` for the configured mode.
pub(crate) struct Perturbation<T: Real> {
    /// `Σ'^{1/2}`; `None` for the identity.
    factor: Option<SymMatrix<T>>,
    /// `√(a_jᵀΣ'a_j)` per data row.
    row_scale: Vec<T>,
}

impl<T: Real> Perturbation<T> {
    pub(crate) fn new(p: &ErmProblem<T>, cfg: &SmoothingConfig<T>) -> Result<Self> {
        cfg.validate(p.d())?;
        let (factor, row_scale) = match (&cfg.mode, &cfg.sqrt_sigma) {
            (SmoothingMode::Isotropic, _) => (None, p.data().rows().map(|a| dot(a, a).sqrt()).collect()),
            (SmoothingMode::NonIsotropic, Some(s)) => {
                (Some(psd_sqrt(s)?), p.data().rows().map(|a| s.quad_form(a).max(T::zero()).sqrt()).collect())
            }
            (SmoothingMode::NonIsotropic, None) => unreachable!("validated"),
        };
        Ok(Self { factor, row_scale })
    }

    pub(crate) fn draw(&self, d: usize, rng: &mut RngStream) -> Vec<T> {
        let g: Vec<T> = rng.normals(d);
        match &self.factor {
            None => g,
            Some(f) => f.matvec(&g),
        }
    }
}

/// Monte-Carlo mean and standard error of `f(x + γZ)`, `Z ~ N(0, I)` or `N(0, Σ')` by mode.
pub fn smooth_value_estimate<T: Real>(
    p: &ErmProblem<T>,
    x: &[T],
    gamma: T,
    cfg: &SmoothingConfig<T>,
    mc: usize,
    rng: &RngStream,
) -> Result<(T, T)> {
    require(mc >= 100, || format!("at least 100 Monte-Carlo draws are required (got {mc})"))?;
    require(gamma >= T::zero(), || "gamma must be non-negative".into())?;
    if x.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: x.len() });
    }
    if gamma == T::zero() {
        return Ok((p.value(x), T::zero()));
    }
    let pert = Perturbation::new(p, cfg)?;
    let d = p.d();
    let blocks = mc.div_ceil(MC_BLOCK);
    let partial: Vec<(T, T)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(b as u64);
            let count = MC_BLOCK.min(mc - b * MC_BLOCK);
            let (mut s, mut s2) = (T::zero(), T::zero());
            for _ in 0..count {
                let z = pert.draw(d, &mut r);
                let pt: Vec<T> = x.iter().zip(&z).map(|(&xi, &zi)| xi + gamma * zi).collect();
                let v = p.value(&pt);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial.iter().fold((T::zero(), T::zero()), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = T::count(mc);
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - T::one())).max(T::zero());
    Ok((mean, (var / n).sqrt()))
}

/// `g = (1/m) Σ_i g_i` with `g_i ∈ ∂F(y + u_t Z_i, a_{j_i})`.
///
/// Query `i` uses `rng.substream(i)`. With single-sample queries and no ridge term only the
/// scalar `a_jᵀZ_i ~ N(0, a_jᵀΣ'a_j)` matters, so it is drawn directly.
pub fn grad_estimator<T: Real>(p: &ErmProblem<T>, y: &[T], u_t: T, cfg: &SmoothingConfig<T>, rng: &RngStream) -> Result<Vec<T>> {
    require(u_t >= T::zero(), || "u_t must be non-negative".into())?;
    if y.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: y.len() });
    }
    let pert = Perturbation::new(p, cfg)?;
    Ok(grad_with(p, &pert, y, u_t, cfg, rng))
}

pub(crate) fn grad_with<T: Real>(
    p: &ErmProblem<T>,
    pert: &Perturbation<T>,
    y: &[T],
    u_t: T,
    cfg: &SmoothingConfig<T>,
    rng: &RngStream,
) -> Vec<T> {
    let d = p.d();
    let lambda = p.ridge_lambda;
    let query = |i: usize| -> Vec<T> {
        let mut r = rng.substream(i as u64);
        match cfg.batch {
            GradientBatch::Single => {
                let j = r.uniform_index(p.n());
                let a = p.data().row(j);
                let b = p.labels()[j];
                if lambda == T::zero() {
                    let z = dot(a, y) + u_t * pert.row_scale[j] * r.normal::<T>();
                    let c = p.loss.derivative(z, b);
                    a.iter().map(|&ai| c * ai).collect()
                } else {
                    let zv = pert.draw(d, &mut r);
                    let pt: Vec<T> = y.iter().zip(&zv).map(|(&yi, &zi)| yi + u_t * zi).collect();
                    let c = p.loss.derivative(dot(a, &pt), b);
                    a.iter().zip(&pt).map(|(&ai, &xi)| c * ai + lambda * xi).collect()
                }
            }
            GradientBatch::Full => {
                let zv = pert.draw(d, &mut r);
                let pt: Vec<T> = y.iter().zip(&zv).map(|(&yi, &zi)| yi + u_t * zi).collect();
                p.gradient(&pt)
            }
        }
    };
    let parts: Vec<Vec<T>> = match cfg.batch {
        GradientBatch::Single => (0..cfg.m).map(query).collect(),
        GradientBatch::Full => (0..cfg.m).into_par_iter().map(query).collect(),
    };
    let mut g = vec![T::zero(); d];
    for part in &parts {
        g.iter_mut().zip(part).for_each(|(gi, &v)| *gi += v);
    }
    let inv = T::one() / T::count(cfg.m);
    g.iter_mut().for_each(|gi| *gi *= inv);
    g
}
