use rayon::prelude::*;
use serde::Serialize;

use super::estimator::{grad_with, Perturbation};
use super::schedule::{schedule_at, theta_sequence, ScheduleState};
use super::SmoothingConfig;
use crate::erm::{ErmProblem, LossKind, ReferenceOptimum};
use crate::error::{require, Error, Result};
use crate::numerics::{op_norm, RngStream};
use crate::scalar::{dot, norm, project_ball, Real};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SmoothingRun<T> {
    /// `Φ(x_t)` for `t = 0..=T`.
    pub values: Vec<T>,
    /// Schedule for `t = 0..=T`.
    pub schedule: Vec<ScheduleState<T>>,
    pub x_norms: Vec<T>,
    pub z_norms: Vec<T>,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
    /// `Σ_τ g_τ/θ_τ`
    pub dual_sum: Vec<T>,
    pub lipschitz: T,
    pub u: T,
    pub seed: (u64, u64),
    /// Every `x_t`, when requested.
    pub iterates: Option<Vec<Vec<T>>>,
}

/// Accelerated dual averaging on the smoothed objective over the ball of radius `R`.
///
/// Iteration `t` draws its gradient queries from `rng.substream(t)`.
pub fn rs_optimize<T: Real>(p: &ErmProblem<T>, cfg: &SmoothingConfig<T>, rng: &RngStream, keep_iterates: bool) -> Result<SmoothingRun<T>> {
    let pert = Perturbation::new(p, cfg)?;
    require(cfg.u > T::zero(), || "smoothing scale u must be positive".into())?;
    let lipschitz = match cfg.lipschitz {
        Some(l) => l,
        None => p.lipschitz().ok_or_else(|| Error::Precondition("loss is not Lipschitz; supply L explicitly".into()))?,
    };
    require(lipschitz > T::zero(), || "Lipschitz constant must be positive".into())?;
    let d = p.d();
    let theta = theta_sequence::<T>(cfg.iters + 1)?;
    let sched = |t: usize| schedule_at(theta[t], t, lipschitz, cfg.u, cfg.radius, cfg.m);

    let mut x = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    let mut y = x.clone();
    let mut dual = vec![T::zero(); d];
    let mut run = SmoothingRun {
        values: vec![p.value(&x)],
        schedule: vec![sched(0)],
        x_norms: vec![T::zero()],
        z_norms: vec![T::zero()],
        x: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        dual_sum: Vec::new(),
        lipschitz,
        u: cfg.u,
        seed: (rng.master_seed(), rng.stream_id()),
        iterates: keep_iterates.then(|| vec![x.clone()]),
    };
    for t in 0..cfg.iters {
        let th = theta[t];
        y.iter_mut().zip(x.iter().zip(&z)).for_each(|(yi, (&xi, &zi))| *yi = (T::one() - th) * xi + th * zi);
        let g = grad_with(p, &pert, &y, th * cfg.u, cfg, &rng.substream(t as u64));
        dual.iter_mut().zip(&g).for_each(|(di, &gi)| *di += gi / th);
        let next = sched(t + 1);
        let c = next.l + next.eta / next.theta;
        z.iter_mut().zip(&dual).for_each(|(zi, &di)| *zi = -di / c);
        project_ball(&mut z, cfg.radius);
        x.iter_mut().zip(&z).for_each(|(xi, &zi)| *xi = (T::one() - th) * *xi + th * zi);
        run.values.push(p.value(&x));
        run.schedule.push(next);
        run.x_norms.push(norm(&x));
        run.z_norms.push(norm(&z));
        if let Some(it) = run.iterates.as_mut() {
            it.push(x.clone());
        }
    }
    run.x = x;
    run.y = y;
    run.z = z;
    run.dual_sum = dual;
    Ok(run)
}

/// Moreau envelope of a piecewise-linear loss with parameter `mu` (the loss itself when smooth).
fn huber_value<T: Real>(loss: LossKind, z: T, b: T, mu: T) -> T {
    let half = T::lit(0.5);
    let env = |s: T| if s <= T::zero() { T::zero() } else if s < mu { s * s / (mu + mu) } else { s - mu * half };
    match loss {
        LossKind::Hinge => env(T::one() - b * z),
        LossKind::Absolute => {
            let r = (z - b).abs();
            if r < mu {
                r * r / (mu + mu)
            } else {
                r - mu * half
            }
        }
        _ => loss.value(z, b),
    }
}

fn huber_derivative<T: Real>(loss: LossKind, z: T, b: T, mu: T) -> T {
    match loss {
        LossKind::Hinge => -b * ((T::one() - b * z) / mu).max(T::zero()).min(T::one()),
        LossKind::Absolute => ((z - b) / mu).max(-T::one()).min(T::one()),
        _ => loss.derivative(z, b),
    }
}

fn smoothed_value_grad<T: Real>(p: &ErmProblem<T>, x: &[T], mu: T) -> (T, Vec<T>) {
    const SHARD: usize = 256;
    let d = p.d();
    let labels = p.labels();
    let parts: Vec<(T, Vec<T>)> = p
        .data()
        .as_slice()
        .par_chunks(SHARD * d)
        .enumerate()
        .map(|(k, block)| {
            let mut g = vec![T::zero(); d];
            let mut v = T::zero();
            for (a, &b) in block.chunks_exact(d).zip(&labels[k * SHARD..]) {
                let z = dot(a, x);
                v += huber_value(p.loss, z, b, mu);
                let c = huber_derivative(p.loss, z, b, mu);
                if c != T::zero() {
                    g.iter_mut().zip(a).for_each(|(gi, &ai)| *gi += c * ai);
                }
            }
            (v, g)
        })
        .collect();
    let mut g = vec![T::zero(); d];
    let mut v = T::zero();
    for (pv, pg) in parts {
        v += pv;
        g.iter_mut().zip(&pg).for_each(|(gi, &x)| *gi += x);
    }
    let inv = T::one() / T::count(p.n());
    g.iter_mut().zip(x).for_each(|(gi, &xi)| *gi = *gi * inv + p.ridge_lambda * xi);
    (v * inv + T::lit(0.5) * p.ridge_lambda * dot(x, x), g)
}

/// High-accuracy `Φ̂*` over the ball for (possibly non-smooth) ERM: projected FISTA with
/// adaptive restart on Moreau-smoothed losses, continuing the smoothing parameter down to
/// `mu_min`. Returns the best exact objective seen.
pub fn nonsmooth_reference<T: Real>(p: &ErmProblem<T>, radius: T, mu_min: T, max_iters: usize) -> Result<ReferenceOptimum<T>> {
    require(radius > T::zero() && mu_min > T::zero(), || "radius and mu_min must be positive".into())?;
    let d = p.d();
    let spectral = op_norm(&p.data().second_moment())?;
    let mut x = vec![T::zero(); d];
    let mut best = (p.value(&x), x.clone());
    let mut mu = if p.loss.is_smooth() { mu_min } else { T::lit(0.1).max(mu_min) };
    let stages = if p.loss.is_smooth() { 1 } else { ((mu / mu_min).log10().ceil().as_f64().max(0.0) as usize) + 1 };
    let per_stage = max_iters / stages;
    let mut used = 0;
    let mut last_step = T::zero();
    loop {
        let curv = match p.loss {
            LossKind::Logistic => T::lit(0.25),
            LossKind::Ridge => T::one(),
            _ => T::one() / mu,
        };
        let step = T::one() / (curv * spectral + p.ridge_lambda);
        let mut y = x.clone();
        let mut t = T::one();
        let stage_cap = per_stage.min(max_iters.saturating_sub(used));
        for k in 0..stage_cap {
            used += 1;
            let (_, g) = smoothed_value_grad(p, &y, mu);
            let mut next: Vec<T> = y.iter().zip(&g).map(|(&yi, &gi)| yi - step * gi).collect();
            project_ball(&mut next, radius);
            let diff: Vec<T> = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            last_step = norm(&diff);
            // gradient-mapping restart test
            let back: T = y.iter().zip(&next).zip(&diff).map(|((&yi, &ni), &di)| (yi - ni) * di).sum();
            if back > T::zero() {
                t = T::one();
            }
            let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
            let mom = (t - T::one()) / t_next;
            y = next.iter().zip(&diff).map(|(&a, &dd)| a + mom * dd).collect();
            x = next;
            t = t_next;
            if k % 32 == 31 {
                let v = p.value(&x);
                if v < best.0 {
                    best = (v, x.clone());
                }
            }
            if last_step <= T::tol(1e-12) * radius {
                break;
            }
        }
        let v = p.value(&x);
        if v < best.0 {
            best = (v, x.clone());
        }
        if mu <= mu_min || used >= max_iters {
            break;
        }
        mu = (mu * T::lit(0.1)).max(mu_min);
    }
    Ok(ReferenceOptimum { value: best.0, x: best.1, residual: last_step, iterations: used })
}
