use serde::{Deserialize, Serialize};

use super::convex::ConvexFunction;
use super::problem::ErmProblem;
use crate::error::{require, Error, Result};
use crate::numerics::{sym_eigh, SymMatrix};
use crate::scalar::{dot, norm, project_ball, Real};

const NEWTON_CAP: usize = 100;
const MIN_PHI_EIGENVALUE: f64 = 1e-12;

/// `φ(x) = (λ/2)‖x‖² + (1/N) Σ ℓ̃_i(ã_iᵀx) + (μ/2)‖x‖²` built on an auxiliary sample.
#[derive(Debug, Clone)]
pub struct Preconditioner<T: Real> {
    aux: ErmProblem<T>,
    mu: T,
}

impl<T: Real> Preconditioner<T> {
    /// `aux` carries the auxiliary sample, its losses and the ridge `λ`.
    pub fn new(aux: ErmProblem<T>, mu: T) -> Result<Self> {
        require(mu >= T::zero(), || "mu must be non-negative".into())?;
        Ok(Self { aux, mu })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn aux(&self) -> &ErmProblem<T> {
        &self.aux
    }
}

impl<T: Real> ConvexFunction<T> for Preconditioner<T> {
    fn dim(&self) -> usize {
        self.aux.d()
    }
    fn value(&self, x: &[T]) -> T {
        self.aux.value(x) + T::lit(0.5) * self.mu * dot(x, x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = self.aux.gradient(x);
        g.iter_mut().zip(x).for_each(|(gi, &xi)| *gi += self.mu * xi);
        g
    }
    fn hessian(&self, x: &[T]) -> SymMatrix<T> {
        self.aux.hessian(x).add_identity(self.mu)
    }
}

/// The regularizer `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case")]
pub enum Regularizer<T> {
    None,
    /// Indicator of the centered ball of the given radius.
    Ball { radius: T },
}

impl<T: Real> Regularizer<T> {
    fn project(&self, x: &mut [T]) {
        if let Regularizer::Ball { radius } = self {
            project_ball(x, *radius);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ProbeCondition<T> {
    /// Smallest and largest generalized eigenvalue of `(∇²F(x), ∇²φ(x))`.
    pub lo: T,
    pub hi: T,
    /// `vᵀ∇²F(x)v / vᵀ∇²φ(x)v` along the probe direction.
    pub rayleigh: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct RelativeCondition<T> {
    pub l_rel: T,
    pub sigma_rel: T,
    pub rayleigh_max: T,
    pub rayleigh_min: T,
    pub per_probe: Vec<ProbeCondition<T>>,
}

/// Empirical relative smoothness and strong convexity of `f` with respect to `phi` at the probes.
pub fn relative_condition<T: Real, F: ConvexFunction<T> + ?Sized, P: ConvexFunction<T> + ?Sized>(
    f: &F,
    phi: &P,
    probes: &[(Vec<T>, Vec<T>)],
) -> Result<RelativeCondition<T>> {
    require(!probes.is_empty(), || "at least one probe is required".into())?;
    let tol = T::tol(1e-13);
    let mut per_probe = Vec::with_capacity(probes.len());
    for (x, v) in probes {
        if x.len() != f.dim() || v.len() != f.dim() {
            return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len().max(v.len()) });
        }
        let hf = f.hessian(x);
        let hp = phi.hessian(x);
        let e = sym_eigh(&hp, tol)?;
        let min = e.values[e.values.len() - 1];
        if !(min >= T::lit(MIN_PHI_EIGENVALUE)) {
            return Err(Error::SingularPhi { min_eigenvalue: min.as_f64() });
        }
        let w = e.map(|l| T::one() / l.sqrt());
        let whitened = SymMatrix::from_dense(&w.matmul(&hf).matmul(&w.to_dense()))?;
        let g = sym_eigh(&whitened, tol)?;
        per_probe.push(ProbeCondition {
            lo: g.values[g.values.len() - 1],
            hi: g.values[0],
            rayleigh: hf.quad_form(v) / hp.quad_form(v),
        });
    }
    let fold = |f0: T, pick: fn(T, T) -> T, get: fn(&ProbeCondition<T>) -> T| per_probe.iter().map(get).fold(f0, pick);
    Ok(RelativeCondition {
        l_rel: fold(T::neg_infinity(), T::max, |p| p.hi),
        sigma_rel: fold(T::infinity(), T::min, |p| p.lo),
        rayleigh_max: fold(T::neg_infinity(), T::max, |p| p.rayleigh),
        rayleigh_min: fold(T::infinity(), T::min, |p| p.rayleigh),
        per_probe,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct PrecondRun<T> {
    pub iterates: Vec<Vec<T>>,
    /// `Φ(x_t)` for `t = 0..=T`.
    pub values: Vec<T>,
    pub newton_steps: Vec<usize>,
    /// Final inner gradient norm per round.
    pub inner_residuals: Vec<T>,
    pub eta: T,
}

impl<T: Real> PrecondRun<T> {
    /// One communication round per gradient aggregation.
    pub fn rounds(&self) -> usize {
        self.values.len() - 1
    }
}

/// Minimizes `φ(x) − ⟨c, x⟩` from `x` by damped Newton with Armijo backtracking.
fn newton_inner<T: Real, P: ConvexFunction<T> + ?Sized>(phi: &P, c: &[T], x0: &[T], tol: T) -> Result<(Vec<T>, usize, T)> {
    let q = |x: &[T]| phi.value(x) - dot(c, x);
    let mut x = x0.to_vec();
    let mut qx = q(&x);
    for k in 0..=NEWTON_CAP {
        let mut g = phi.gradient(&x);
        g.iter_mut().zip(c).for_each(|(gi, &ci)| *gi -= ci);
        let gn = norm(&g);
        if gn <= tol {
            return Ok((x, k, gn));
        }
        if k == NEWTON_CAP {
            return Err(Error::InnerSolveFailure { iterations: k, grad_norm: gn.as_f64() });
        }
        let h = phi.hessian(&x);
        let chol = h.cholesky().map_err(|e| match e {
            Error::NotPsd { min_eigenvalue } => Error::SingularPhi { min_eigenvalue },
            other => other,
        })?;
        let step: Vec<T> = chol.solve(&g).into_iter().map(|s| -s).collect();
        let slope = dot(&g, &step);
        let slack = T::epsilon() * T::lit(64.0) * (qx.abs() + T::one());
        let mut t = T::one();
        loop {
            let cand: Vec<T> = x.iter().zip(&step).map(|(&xi, &si)| xi + t * si).collect();
            let qc = q(&cand);
            if qc <= qx + T::lit(1e-4) * t * slope + slack || t < T::lit(1e-10) {
                x = cand;
                qx = qc;
                break;
            }
            t *= T::lit(0.5);
        }
    }
    unreachable!("loop returns on the final iteration")
}

/// Bregman proximal gradient descent
/// `x_{t+1} = argmin ⟨∇F(x_t), x⟩ + ψ(x) + D_φ(x, x_t)/η`,
/// with the inner problem solved by damped Newton and followed by ball projection for ψ = ball.
pub fn precond_bgd<T: Real, P: ConvexFunction<T> + ?Sized>(
    f: &ErmProblem<T>,
    psi: Regularizer<T>,
    phi: &P,
    eta: T,
    iters: usize,
    x0: &[T],
    inner_tol: T,
) -> Result<PrecondRun<T>> {
    require(eta > T::zero(), || "eta must be positive".into())?;
    require(inner_tol > T::zero(), || "inner tolerance must be positive".into())?;
    if x0.len() != f.d() || phi.dim() != f.d() {
        return Err(Error::DimensionMismatch { expected: f.d(), got: x0.len().min(phi.dim()) });
    }
    let mut x = x0.to_vec();
    psi.project(&mut x);
    let mut run = PrecondRun {
        iterates: vec![x.clone()],
        values: vec![f.value(&x)],
        newton_steps: Vec::with_capacity(iters),
        inner_residuals: Vec::with_capacity(iters),
        eta,
    };
    for _ in 0..iters {
        let g = f.gradient(&x);
        let mut c = phi.gradient(&x);
        c.iter_mut().zip(&g).for_each(|(ci, &gi)| *ci -= eta * gi);
        let (mut next, steps, res) = newton_inner(phi, &c, &x, inner_tol)?;
        psi.project(&mut next);
        x = next;
        run.values.push(f.value(&x));
        run.iterates.push(x.clone());
        run.newton_steps.push(steps);
        run.inner_residuals.push(res);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ReferenceOptimum<T> {
    pub value: T,
    pub x: Vec<T>,
    /// Unconstrained gradient norm (Newton), or the last projected-gradient step length.
    pub residual: T,
    pub iterations: usize,
}

/// High-accuracy `Φ̂*`: Newton's method on `F`, or accelerated projected gradient when the
/// unconstrained minimizer leaves the ball.
pub fn reference_optimum<T: Real>(f: &ErmProblem<T>, psi: Regularizer<T>) -> Result<ReferenceOptimum<T>> {
    if !f.loss.is_smooth() {
        return Err(Error::NonSmoothLoss);
    }
    let d = f.d();
    let zero = vec![T::zero(); d];
    let g0 = norm(&f.gradient(&zero));
    let tol = T::tol(1e-14) * (T::one() + g0);
    // minimizing F − ⟨0, x⟩ with F as its own "preconditioner"
    let newton = newton_inner(f, &zero, &zero, tol);
    if let Ok((x, k, res)) = &newton {
        let inside = match psi {
            Regularizer::None => true,
            Regularizer::Ball { radius } => norm(x) <= radius,
        };
        if inside {
            return Ok(ReferenceOptimum { value: f.value(x), x: x.clone(), residual: *res, iterations: *k });
        }
    }
    let radius = match psi {
        Regularizer::Ball { radius } => radius,
        Regularizer::None => return Err(newton.expect_err("unconstrained Newton only reaches here on failure")),
    };
    let step = T::one() / f.smoothness_bound()?;
    let mut x = zero.clone();
    let mut y = zero;
    let mut t = T::one();
    let mut last = T::infinity();
    let mut iterations = 0;
    for k in 0..200_000 {
        iterations = k + 1;
        let g = f.gradient(&y);
        let mut next: Vec<T> = y.iter().zip(&g).map(|(&yi, &gi)| yi - step * gi).collect();
        project_ball(&mut next, radius);
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let mom = (t - T::one()) / t_next;
        let diff: Vec<T> = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        last = norm(&diff);
        y = next.iter().zip(&diff).map(|(&a, &dd)| a + mom * dd).collect();
        x = next;
        t = t_next;
        if last <= T::tol(1e-15) * (T::one() + radius) {
            break;
        }
    }
    Ok(ReferenceOptimum { value: f.value(&x), x, residual: last, iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct GapTrace<T> {
    pub phi_star: T,
    pub gaps: Vec<T>,
    /// `gap_{t+1}/gap_t`, recorded while `gap_t` exceeds the floor.
    pub ratios: Vec<Option<T>>,
    pub floor: T,
}

/// Gaps against `min(phi_star, min_t Φ(x_t))` so that every gap is non-negative.
pub fn gap_trace<T: Real>(values: &[T], phi_star: T) -> GapTrace<T> {
    let best = values.iter().copied().fold(phi_star, T::min);
    let floor = T::lit(1e-12) * best.abs().max(T::one());
    let gaps: Vec<T> = values.iter().map(|&v| v - best).collect();
    let ratios = gaps.windows(2).map(|w| if w[0] > floor { Some(w[1] / w[0]) } else { None }).collect();
    GapTrace { phi_star: best, gaps, ratios, floor }
}

/// First round whose gap is at most `eps`.
pub fn rounds_to<T: Real>(gaps: &[T], eps: T) -> Option<usize> {
    gaps.iter().position(|&g| g <= eps)
}

/// Inputs of the high-probability Hessian-deviation bound over the ball of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MuFormula<T> {
    pub radius: T,
    pub sigma1: T,
    /// `‖ℓ''‖_Lip`
    pub second_lipschitz: T,
    pub deff1: T,
    pub deff3: T,
    pub n: usize,
    pub d: usize,
    pub delta: T,
    /// Universal constant; not determined by the analysis.
    pub constant: T,
}

impl<T: Real> MuFormula<T> {
    /// `C R σ₁³ ‖ℓ''‖_Lip [ (d_eff(3) ln d + ln(1/δ)) √(d_eff(1) + ln(n/δ)) / n + (√ln(1/δ) + √(d_eff(1) ln d)) / √n ]`
    pub fn evaluate(&self) -> Result<T> {
        require(self.delta > T::zero() && self.delta < T::one(), || "delta must lie in (0, 1)".into())?;
        require(self.n >= 1 && self.d >= 1, || "n and d must be positive".into())?;
        let n = T::count(self.n);
        let ln_d = T::count(self.d).ln();
        let ln_inv_delta = -self.delta.ln();
        let first = (self.deff3 * ln_d + ln_inv_delta) * (self.deff1 + (n / self.delta).ln()).sqrt() / n;
        let second = (ln_inv_delta.sqrt() + (self.deff1 * ln_d).sqrt()) / n.sqrt();
        Ok(self.constant * self.radius * self.sigma1.powi(3) * self.second_lipschitz * (first + second))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case")]
pub enum MuSource<T> {
    /// A measured `sup ‖∇²f̃ − ∇²F‖_op`.
    Measured { deviation: T },
    Formula(MuFormula<T>),
}

/// `(μ, 1 + 2μ/λ)`
pub fn tune_mu<T: Real>(source: &MuSource<T>, lambda: T) -> Result<(T, T)> {
    require(lambda > T::zero(), || "lambda must be positive".into())?;
    let mu = match source {
        MuSource::Measured { deviation } => *deviation,
        MuSource::Formula(f) => f.evaluate()?,
    };
    require(mu >= T::zero(), || "mu must be non-negative".into())?;
    Ok((mu, T::one() + T::lit(2.0) * mu / lambda))
}
