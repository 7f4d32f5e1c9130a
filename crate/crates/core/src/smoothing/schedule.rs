use serde::Serialize;

use crate::error::{require, Result};
use crate::scalar::Real;

/// `θ_0 = 1`, `θ_{t+1} = 2/(1 + √(1 + 4/θ_t²))`, so that `(1 − θ_{t+1})/θ_{t+1}² = 1/θ_t²`.
pub fn theta_sequence<T: Real>(iters: usize) -> Result<Vec<T>> {
    require(iters >= 1, || "T must be at least 1".into())?;
    let mut out = Vec::with_capacity(iters + 1);
    let mut th = T::one();
    out.push(th);
    let two = T::lit(2.0);
    for _ in 0..iters {
        th = two / (T::one() + (T::one() + T::lit(4.0) / (th * th)).sqrt());
        out.push(th);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ScheduleState<T> {
    pub theta: T,
    /// `L√(t+1)/(R√m)`
    pub eta: T,
    /// `θ_t u`
    pub u: T,
    /// `L/u_t`
    pub l: T,
}

/// Step-size schedule for iteration `t`.
pub fn schedule_at<T: Real>(theta: T, t: usize, lipschitz: T, u: T, radius: T, m: usize) -> ScheduleState<T> {
    let ut = theta * u;
    ScheduleState {
        theta,
        eta: lipschitz * T::count(t + 1).sqrt() / (radius * T::count(m).sqrt()),
        u: ut,
        l: lipschitz / ut,
    }
}
