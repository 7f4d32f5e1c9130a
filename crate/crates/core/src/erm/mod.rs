//! Empirical risk minimization: losses, Hessian deviations, Bregman machinery and
//! statistically preconditioned gradient descent.

mod convex;
mod experiment;
mod hessian;
mod precond;
mod problem;

pub use convex::{bregman_div, ConvexFunction, HalfSquaredNorm, Scaled};
pub use experiment::{planted_labels, precondition_experiment, PrecondConfig, PrecondReport};
pub use hessian::{hessian_deviation_sup, HessianDeviation, HessianSearch};
pub use precond::{
    gap_trace, precond_bgd, reference_optimum, relative_condition, rounds_to, tune_mu, GapTrace, MuFormula, MuSource,
    PrecondRun, Preconditioner, ProbeCondition, ReferenceOptimum, Regularizer, RelativeCondition,
};
pub use problem::{erm_value_grad_hess, ErmProblem, LossKind};
