use serde::{Deserialize, Serialize};

use super::convex::HalfSquaredNorm;
use super::hessian::{hessian_deviation_sup, HessianSearch};
use super::precond::{
    gap_trace, precond_bgd, reference_optimum, relative_condition, rounds_to, tune_mu, GapTrace, MuSource, Preconditioner,
    Regularizer, RelativeCondition,
};
use super::problem::{ErmProblem, LossKind};
use crate::concentration::Reference;
use crate::error::{require, Result};
use crate::numerics::RngStream;
use crate::scalar::{dot, norm, Real};
use crate::spectrum::{sample_gaussian, CovarianceSpectrum, SampleMatrix};

/// Labels from a planted linear model: logistic/hinge draw `b = ±1` with `P(b = 1) = σ(aᵀx*)`;
/// ridge/absolute use `aᵀx* + noise·N(0,1)`.
pub fn planted_labels<T: Real>(loss: LossKind, data: &SampleMatrix<T>, truth: &[T], noise: T, rng: &mut RngStream) -> Vec<T> {
    data.rows()
        .map(|a| {
            let z = dot(a, truth);
            match loss {
                LossKind::Logistic | LossKind::Hinge => {
                    let p = T::one() / (T::one() + (-z).exp());
                    if rng.uniform::<T>() < p {
                        T::one()
                    } else {
                        -T::one()
                    }
                }
                LossKind::Ridge | LossKind::Absolute => z + noise * rng.normal::<T>(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct PrecondConfig<T: Real> {
    pub loss: LossKind,
    pub spectrum: CovarianceSpectrum<T>,
    /// Worker-side sample size.
    pub n: usize,
    /// Server-side auxiliary sample size.
    pub n_aux: usize,
    pub lambda: T,
    pub iters: usize,
    /// Vanilla gradient descent is given `vanilla_factor × iters` rounds.
    #[serde(default = "default_vanilla_factor")]
    pub vanilla_factor: usize,
    #[serde(default = "default_target")]
    pub target_gap: T,
    /// Domain radius for `μ̂`; defaults to `max(1, 1.5‖x̂*‖)`.
    #[serde(default)]
    pub radius: Option<T>,
    #[serde(default = "default_truth_norm")]
    pub truth_norm: T,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_search_iters")]
    pub search_iters: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: T,
}

fn default_vanilla_factor() -> usize {
    10
}
fn default_target<T: Real>() -> T {
    T::lit(1e-6)
}
fn default_truth_norm<T: Real>() -> T {
    T::one()
}
fn default_restarts() -> usize {
    16
}
fn default_search_iters() -> usize {
    60
}
fn default_probes() -> usize {
    50
}
fn default_inner_tol<T: Real>() -> T {
    T::tol(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct PrecondReport<T> {
    pub mu_hat: T,
    pub kappa_bound: T,
    pub radius: T,
    pub condition: RelativeCondition<T>,
    pub eta_precond: T,
    pub eta_vanilla: T,
    pub phi_star: T,
    pub precond: GapTrace<T>,
    pub vanilla: GapTrace<T>,
    pub rounds_precond: Option<usize>,
    pub rounds_vanilla: Option<usize>,
    /// Largest recorded per-step gap ratio of the preconditioned run.
    pub max_ratio: T,
    pub max_iterate_norm: T,
    pub newton_steps: usize,
}

/// One preconditioning study: measure `μ̂` between worker and server Hessians, check the
/// relative-condition sandwich at random probes, and race Bregman descent (`η = 1`) against
/// gradient descent (`η = 1/L_F`).
pub fn precondition_experiment<T: Real>(cfg: &PrecondConfig<T>, master_seed: u64) -> Result<PrecondReport<T>> {
    require(cfg.loss.is_smooth(), || "preconditioning requires a smooth loss".into())?;
    require(cfg.lambda > T::zero(), || "lambda must be positive".into())?;
    require(cfg.probes >= 1, || "at least one probe is required".into())?;
    let d = cfg.spectrum.dim();
    let root = RngStream::new(master_seed, 0);
    let truth: Vec<T> = root.substream(0).unit_vector::<T>(d).into_iter().map(|v| v * cfg.truth_norm).collect();
    let noise = T::lit(0.1);
    let build = |k: u64, n: usize| -> Result<ErmProblem<T>> {
        let mut rng = root.substream(k);
        let data = sample_gaussian(&cfg.spectrum, n, &mut rng)?;
        let labels = planted_labels(cfg.loss, &data, &truth, noise, &mut rng);
        ErmProblem::new(cfg.loss, data, labels, cfg.lambda)
    };
    let problem = build(1, cfg.n)?;
    let aux = build(2, cfg.n_aux)?;
    let star = reference_optimum(&problem, Regularizer::None)?;
    let radius = cfg.radius.unwrap_or_else(|| T::one().max(T::lit(1.5) * norm(&star.x)));

    let probes: Vec<(Vec<T>, Vec<T>)> = {
        let mut rng = root.substream(3);
        (0..cfg.probes)
            .map(|_| {
                let scale = radius * rng.uniform::<T>().powf(T::one() / T::count(d));
                let x: Vec<T> = rng.unit_vector::<T>(d).into_iter().map(|v| v * scale).collect();
                (x, rng.unit_vector(d))
            })
            .collect()
    };
    let search = HessianSearch {
        radius,
        restarts: cfg.restarts,
        iters: cfg.search_iters,
        extra_starts: probes.iter().map(|(x, _)| x.clone()).collect(),
    };
    let dev = hessian_deviation_sup(&problem, Reference::Sample(aux.data()), &search, &root.substream(4))?;
    let (mu_hat, kappa_bound) = tune_mu(&MuSource::Measured { deviation: dev.value }, cfg.lambda)?;
    let pre = Preconditioner::new(aux, mu_hat)?;
    let condition = relative_condition(&problem, &pre, &probes)?;

    let x0 = vec![T::zero(); d];
    let eta_precond = T::one();
    let run = precond_bgd(&problem, Regularizer::None, &pre, eta_precond, cfg.iters, &x0, cfg.inner_tol)?;
    let eta_vanilla = T::one() / problem.smoothness_bound()?;
    let vanilla = precond_bgd(
        &problem,
        Regularizer::None,
        &HalfSquaredNorm { dim: d },
        eta_vanilla,
        cfg.iters * cfg.vanilla_factor,
        &x0,
        cfg.inner_tol,
    )?;
    let phi_star = run.values.iter().chain(&vanilla.values).copied().fold(star.value, T::min);
    let precond = gap_trace(&run.values, phi_star);
    let vanilla_trace = gap_trace(&vanilla.values, phi_star);
    let max_ratio = precond.ratios.iter().flatten().copied().fold(T::zero(), T::max);
    Ok(PrecondReport {
        mu_hat,
        kappa_bound,
        radius,
        condition,
        eta_precond,
        eta_vanilla,
        phi_star,
        rounds_precond: rounds_to(&precond.gaps, cfg.target_gap),
        rounds_vanilla: rounds_to(&vanilla_trace.gaps, cfg.target_gap),
        precond,
        vanilla: vanilla_trace,
        max_ratio,
        max_iterate_norm: run.iterates.iter().map(|x| norm(x)).fold(T::zero(), T::max),
        newton_steps: run.newton_steps.iter().sum(),
    })
}
