use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimator::smooth_value_estimate;
use super::optimizer::{nonsmooth_reference, rs_optimize};
use super::schedule::ScheduleState;
use super::{default_u, smoothing_bounds, GradientBatch, SmoothingConfig, SmoothingMode};
use crate::erm::{planted_labels, ErmProblem, LossKind};
use crate::error::{require, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;
use crate::spectrum::{sample_gaussian, CovarianceSpectrum};

/// First `t` with `values[t] − Φ* ≤ target`.
pub fn iterations_to_gap<T: Real>(values: &[T], phi_star: T, target: T) -> Option<usize> {
    values.iter().position(|&v| v - phi_star <= target)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct SmoothExperimentConfig<T: Real> {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    pub spectrum: CovarianceSpectrum<T>,
    pub n: usize,
    pub m: usize,
    pub iters: usize,
    /// Feasible-ball radius; defaults to `truth_norm`.
    #[serde(default)]
    pub radius: Option<T>,
    #[serde(default = "default_target")]
    pub target_gap: T,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_one")]
    pub truth_norm: T,
    #[serde(default = "default_delta")]
    pub delta: T,
    /// Constant in the non-isotropic smoothness correction.
    #[serde(default = "default_one")]
    pub constant: T,
    #[serde(default)]
    pub u_isotropic: Option<T>,
    #[serde(default)]
    pub u_non_isotropic: Option<T>,
    #[serde(default = "default_batch")]
    pub batch: GradientBatch,
    /// Iteration budget for the reference optimum.
    #[serde(default = "default_reference_iters")]
    pub reference_iters: usize,
}

fn default_loss() -> LossKind {
    LossKind::Hinge
}
fn default_target<T: Real>() -> T {
    T::lit(1e-2)
}
fn default_seeds() -> usize {
    10
}
fn default_one<T: Real>() -> T {
    T::one()
}
fn default_delta<T: Real>() -> T {
    T::lit(0.05)
}
fn default_batch() -> GradientBatch {
    GradientBatch::Single
}
fn default_reference_iters() -> usize {
    200_000
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct ModeOutcome<T: Real> {
    pub seed: usize,
    pub mode: SmoothingMode,
    /// Censored at `iters + 1` when the target is never reached.
    pub iterations: usize,
    pub reached: bool,
    pub final_gap: T,
    pub gaps: Vec<T>,
    pub schedule: Vec<ScheduleState<T>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct SmoothComparison<T: Real> {
    pub phi_star: T,
    pub radius: T,
    pub lipschitz: T,
    pub u_isotropic: T,
    pub u_non_isotropic: T,
    /// Ordered by seed, isotropic before non-isotropic.
    pub outcomes: Vec<ModeOutcome<T>>,
    pub median_isotropic: T,
    pub median_non_isotropic: T,
}

fn median<T: Real>(mut xs: Vec<T>) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) * T::lit(0.5)
    }
}

/// Paired comparison of isotropic and `√Σ` smoothing on one planted ERM instance.
///
/// The data come from `RngStream::new(master_seed, 0)`; seed `k` drives both modes with
/// `RngStream::new(master_seed, 1).substream(k)`.
pub fn smoothing_comparison<T: Real>(cfg: &SmoothExperimentConfig<T>, master_seed: u64) -> Result<SmoothComparison<T>> {
    require(cfg.seeds >= 1, || "at least one seed is required".into())?;
    require(cfg.n >= 1, || "n must be at least 1".into())?;
    let s = &cfg.spectrum;
    let d = s.dim();
    let root = RngStream::new(master_seed, 0);
    let truth: Vec<T> = root.substream(0).unit_vector::<T>(d).into_iter().map(|v| v * cfg.truth_norm).collect();
    let data = sample_gaussian(s, cfg.n, &mut root.substream(1))?;
    let labels = planted_labels(cfg.loss, &data, &truth, T::lit(0.1), &mut root.substream(2));
    let p = ErmProblem::new(cfg.loss, data, labels, T::zero())?;
    let radius = cfg.radius.unwrap_or(cfg.truth_norm);
    let lipschitz = p.lipschitz().ok_or_else(|| crate::error::Error::Precondition("loss is not Lipschitz".into()))?;
    let loss_lip = p.labels().iter().filter_map(|&b| cfg.loss.lipschitz(b)).fold(T::zero(), T::max);
    let u_iso = match cfg.u_isotropic {
        Some(u) => u,
        None => default_u(s, radius, SmoothingMode::Isotropic, loss_lip, cfg.n, cfg.delta, cfg.constant)?,
    };
    let u_non = match cfg.u_non_isotropic {
        Some(u) => u,
        None => default_u(s, radius, SmoothingMode::NonIsotropic, loss_lip, cfg.n, cfg.delta, cfg.constant)?,
    };
    let star = nonsmooth_reference(&p, radius, T::lit(1e-5), cfg.reference_iters)?;
    let sqrt_sigma = s.covariance_power(T::lit(0.5));
    let make = |mode: SmoothingMode| SmoothingConfig {
        mode,
        u: if mode == SmoothingMode::Isotropic { u_iso } else { u_non },
        m: cfg.m,
        iters: cfg.iters,
        radius,
        sqrt_sigma: (mode == SmoothingMode::NonIsotropic).then(|| sqrt_sigma.clone()),
        batch: cfg.batch,
        lipschitz: Some(lipschitz),
    };
    let tasks: Vec<(usize, SmoothingMode)> = (0..cfg.seeds)
        .flat_map(|k| [(k, SmoothingMode::Isotropic), (k, SmoothingMode::NonIsotropic)])
        .collect();
    let runs: Vec<Result<(usize, SmoothingMode, super::SmoothingRun<T>)>> = tasks
        .par_iter()
        .map(|&(k, mode)| {
            let rng = RngStream::new(master_seed, 1).substream(k as u64);
            rs_optimize(&p, &make(mode), &rng, false).map(|r| (k, mode, r))
        })
        .collect();
    let mut phi_star = star.value;
    let mut done = Vec::with_capacity(runs.len());
    for r in runs {
        let r = r?;
        phi_star = r.2.values.iter().fold(phi_star, |a, &v| a.min(v));
        done.push(r);
    }
    let outcomes: Vec<ModeOutcome<T>> = done
        .into_iter()
        .map(|(seed, mode, run)| {
            let hit = iterations_to_gap(&run.values, phi_star, cfg.target_gap);
            let gaps: Vec<T> = run.values.iter().map(|&v| v - phi_star).collect();
            ModeOutcome {
                seed,
                mode,
                iterations: hit.unwrap_or(cfg.iters + 1),
                reached: hit.is_some(),
                final_gap: *gaps.last().expect("non-empty"),
                gaps,
                schedule: run.schedule,
            }
        })
        .collect();
    let med = |mode: SmoothingMode| median(outcomes.iter().filter(|o| o.mode == mode).map(|o| T::count(o.iterations)).collect());
    Ok(SmoothComparison {
        phi_star,
        radius,
        lipschitz,
        u_isotropic: u_iso,
        u_non_isotropic: u_non,
        median_isotropic: med(SmoothingMode::Isotropic),
        median_non_isotropic: med(SmoothingMode::NonIsotropic),
        outcomes,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(bound = "T: Real")]
pub struct GapCalibrationPoint<T: Real> {
    pub gamma: T,
    pub point: usize,
    pub f: T,
    pub smoothed: T,
    pub stderr: T,
    pub bound: T,
    /// `f ≤ f̂^γ + 3σ̂`
    pub lower_holds: bool,
    /// `f̂^γ ≤ f + C·bound + 3σ̂`
    pub upper_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct GapCalibration<T: Real> {
    pub constant: T,
    pub points: Vec<GapCalibrationPoint<T>>,
}

impl<T: Real> GapCalibration<T> {
    pub fn all_hold(&self) -> bool {
        self.points.iter().all(|p| p.lower_holds && p.upper_holds)
    }
}

/// Sandwich check `f ≤ f̂^γ ≤ f + C·gap_bound(γ)` at `points` random points of the `R`-ball
/// for every `γ` in `gammas`.
///
/// With `constant = None` the constant is fitted at the largest `γ` as the largest observed
/// ratio `(f̂^γ − f)/gap_bound` and then frozen. The same Monte-Carlo stream is reused for
/// every `γ`. The isotropic bound uses `L = L_ℓ max_j ‖a_j‖`, the non-isotropic one `L_ℓ`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_gap_constant<T: Real>(
    p: &ErmProblem<T>,
    s: &CovarianceSpectrum<T>,
    mode: SmoothingMode,
    gammas: &[T],
    constant: Option<T>,
    radius: T,
    points: usize,
    mc: usize,
    delta: T,
    rng: &RngStream,
) -> Result<GapCalibration<T>> {
    require(!gammas.is_empty() && points >= 1, || "need at least one gamma and one point".into())?;
    require(s.dim() == p.d(), || "spectrum dimension must match the data".into())?;
    let lip = match mode {
        SmoothingMode::Isotropic => p.lipschitz(),
        SmoothingMode::NonIsotropic => p.labels().iter().map(|&b| p.loss.lipschitz(b)).try_fold(T::zero(), |m, v| v.map(|v| m.max(v))),
    }
    .ok_or_else(|| crate::error::Error::Precondition("loss is not Lipschitz".into()))?;
    let cfg = SmoothingConfig {
        mode,
        u: T::zero(),
        m: 1,
        iters: 1,
        radius,
        sqrt_sigma: (mode == SmoothingMode::NonIsotropic).then(|| s.covariance_power(T::lit(0.5))),
        batch: GradientBatch::Full,
        lipschitz: None,
    };
    let mut pts_rng = rng.substream(0);
    let xs: Vec<Vec<T>> = (0..points)
        .map(|_| {
            let r = radius * pts_rng.uniform::<T>();
            pts_rng.unit_vector::<T>(p.d()).into_iter().map(|v| v * r).collect()
        })
        .collect();
    let mc_rng = rng.substream(1);
    let mut raw = Vec::with_capacity(gammas.len() * points);
    for &g in gammas {
        let (bound, _) = smoothing_bounds(s, g, lip, mode, p.n(), delta, T::zero())?;
        for (i, x) in xs.iter().enumerate() {
            let (mean, se) = smooth_value_estimate(p, x, g, &cfg, mc, &mc_rng.substream(i as u64))?;
            raw.push((g, i, p.value(x), mean, se, bound));
        }
    }
    let constant = match constant {
        Some(c) => c,
        None => {
            let gmax = gammas.iter().copied().fold(T::neg_infinity(), T::max);
            raw.iter().filter(|r| r.0 == gmax).map(|r| (r.3 - r.2) / r.5).fold(T::zero(), T::max)
        }
    };
    let three = T::lit(3.0);
    let points = raw
        .into_iter()
        .map(|(gamma, point, f, smoothed, stderr, bound)| GapCalibrationPoint {
            gamma,
            point,
            f,
            smoothed,
            stderr,
            bound,
            lower_holds: f <= smoothed + three * stderr,
            upper_holds: smoothed <= f + constant * bound + three * stderr,
        })
        .collect();
    Ok(GapCalibration { constant, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{make_spectrum, SpectrumKind};

    #[test]
    fn first_hit() {
        assert_eq!(iterations_to_gap(&[3.0, 2.0, 1.05, 1.0], 1.0, 0.1), Some(2));
        assert_eq!(iterations_to_gap(&[3.0, 2.0], 1.0, 0.1), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn isotropic_sandwich_holds() {
        let s = make_spectrum::<f64>(&SpectrumKind::Isotropic, 16, 1.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let data = sample_gaussian(&s, 100, &mut rng).unwrap();
        let labels = (0..100).map(|_| if rng.uniform::<f64>() < 0.5 { 1.0 } else { -1.0 }).collect();
        let p = ErmProblem::new(LossKind::Hinge, data, labels, 0.0).unwrap();
        let cal = calibrate_gap_constant(&p, &s, SmoothingMode::Isotropic, &[0.5, 0.1], Some(1.0), 1.0, 5, 400, 0.05, &RngStream::new(5, 1)).unwrap();
        assert!(cal.all_hold());
        assert_eq!(cal.points.len(), 10);
    }

    #[test]
    fn comparison_is_deterministic() {
        let s = make_spectrum::<f64>(&SpectrumKind::PowerLaw { alpha: 1.0 }, 8, 1.0).unwrap();
        let cfg = SmoothExperimentConfig {
            loss: LossKind::Hinge,
            spectrum: s,
            n: 200,
            m: 4,
            iters: 100,
            radius: None,
            target_gap: 0.05,
            seeds: 3,
            truth_norm: 1.0,
            delta: 0.05,
            constant: 1.0,
            u_isotropic: None,
            u_non_isotropic: None,
            batch: GradientBatch::Single,
            reference_iters: 20_000,
        };
        let a = smoothing_comparison(&cfg, 11).unwrap();
        let b = smoothing_comparison(&cfg, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.outcomes.len(), 6);
        assert!(a.outcomes.iter().all(|o| o.gaps.iter().all(|&g| g >= 0.0)));
    }
}
