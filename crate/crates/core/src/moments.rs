//! Macroscopic moment system: Lotka-Volterra means coupled with the
//! variance equations, integrated with classical RK4 at fixed step.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{coefficients_from_means, ModelParams, MomentState};

/// Default step for the moment ODEs.
pub const DEFAULT_DT: f64 = 1e-3;

/// Right-hand side of the logistic Lotka-Volterra system.
pub fn lv_rhs(params: &ModelParams, m1: f64, m2: f64) -> (f64, f64) {
    (
        params.alpha * (1.0 - m1 / params.capacity) * m1 - params.beta * m1 * m2,
        -params.delta() * m2 + params.gamma * m1 * m2,
    )
}

/// Variance derivatives given the moments of order 2p of both densities.
///
/// `dV_k/dt = sigma_k^2(t) m_k^(2p) - 2 lambda_k(t) V_k`.
pub fn variance_rhs(params: &ModelParams, state: &MomentState, m2p_1: f64, m2p_2: f64) -> Result<(f64, f64)> {
    if !(m2p_1 >= 0.0 && m2p_2 >= 0.0) {
        return domain(format!(
            "moments of order 2p must be non-negative, got ({m2p_1}, {m2p_2})"
        ));
    }
    let c = coefficients_from_means(params, state.m1, state.m2)?;
    Ok((
        c.sigma1_sq * m2p_1 - 2.0 * c.lambda1 * state.v1,
        c.sigma2_sq * m2p_2 - 2.0 * c.lambda2 * state.v2,
    ))
}

/// Closed form of the moment of order 2p for p = 1/2 and p = 1.
pub fn closed_moment_2p(p: f64, mean: f64, variance: f64) -> Result<f64> {
    if p == 0.5 {
        Ok(mean)
    } else if p == 1.0 {
        Ok(variance + mean * mean)
    } else {
        Err(Error::Closure { p })
    }
}

fn rhs(params: &ModelParams, y: [f64; 4]) -> Result<[f64; 4]> {
    let (dm1, dm2) = lv_rhs(params, y[0], y[1]);
    let state = MomentState::new(0.0, y[0], y[1], y[2], y[3]);
    let (dv1, dv2) = variance_rhs(
        params,
        &state,
        closed_moment_2p(params.p, y[0], y[2])?,
        closed_moment_2p(params.p, y[1], y[3])?,
    )?;
    Ok([dm1, dm2, dv1, dv2])
}

fn axpy(y: [f64; 4], a: f64, k: [f64; 4]) -> [f64; 4] {
    [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]]
}

/// One classical fourth-order Runge-Kutta step of the full moment system.
pub fn rk4_step(params: &ModelParams, state: &MomentState, dt: f64) -> Result<MomentState> {
    let y = [state.m1, state.m2, state.v1, state.v2];
    let k1 = rhs(params, y)?;
    let k2 = rhs(params, axpy(y, 0.5 * dt, k1))?;
    let k3 = rhs(params, axpy(y, 0.5 * dt, k2))?;
    let k4 = rhs(params, axpy(y, dt, k3))?;
    let mut out = y;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(MomentState::new(state.t + dt, out[0], out[1], out[2], out[3]))
}

/// One RK4 step of the mean equations alone. Valid for every p since the
/// mean equations are closed.
pub fn rk4_step_means(params: &ModelParams, m: (f64, f64), dt: f64) -> (f64, f64) {
    let f = |a: f64, b: f64| lv_rhs(params, a, b);
    let k1 = f(m.0, m.1);
    let k2 = f(m.0 + 0.5 * dt * k1.0, m.1 + 0.5 * dt * k1.1);
    let k3 = f(m.0 + 0.5 * dt * k2.0, m.1 + 0.5 * dt * k2.1);
    let k4 = f(m.0 + dt * k3.0, m.1 + dt * k3.1);
    (
        m.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        m.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Time-ordered moment states.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
}

impl MomentTrajectory {
    pub fn from_states(states: Vec<MomentState>) -> Result<Self> {
        for w in states.windows(2) {
            if !(w[1].t > w[0].t) {
                return domain(format!(
                    "trajectory times must be strictly increasing ({} then {})",
                    w[0].t, w[1].t
                ));
            }
        }
        for s in &states {
            s.validate()?;
        }
        Ok(MomentTrajectory {
            times: states.iter().map(|s| s.t).collect(),
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&MomentState> {
        self.states.last()
    }

    /// Linear interpolation of the state at time `t` (clamped to the ends).
    pub fn at(&self, t: f64) -> Option<MomentState> {
        let first = self.states.first()?;
        let last = self.states.last()?;
        if t <= first.t {
            return Some(*first);
        }
        if t >= last.t {
            return Some(*last);
        }
        let j = self.times.partition_point(|&s| s <= t);
        let (a, b) = (&self.states[j - 1], &self.states[j]);
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        Some(MomentState::new(
            t,
            lerp(a.m1, b.m1),
            lerp(a.m2, b.m2),
            lerp(a.v1, b.v1),
            lerp(a.v2, b.v2),
        ))
    }
}

/// Integrates the coupled mean/variance system up to `t_end`, recording
/// every step.
pub fn integrate_moments(params: &ModelParams, initial: &MomentState, t_end: f64, dt: f64) -> Result<MomentTrajectory> {
    integrate_moments_every(params, initial, t_end, dt, 1)
}

/// Same as [`integrate_moments`] but keeps only every `stride`-th state
/// (the initial and final states are always kept).
pub fn integrate_moments_every(
    params: &ModelParams,
    initial: &MomentState,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<MomentTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return domain(format!("dt must be positive, got {dt}"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return domain(format!("t_end must be non-negative, got {t_end}"));
    }
    if stride == 0 {
        return domain("stride must be at least 1");
    }
    closed_moment_2p(params.p, 1.0, 0.0)?;
    initial.validate()?;

    let t0 = initial.t;
    let steps = (t_end / dt).round() as usize;
    // last step absorbs any remainder so the final time is exactly t0 + t_end
    let steps = if (steps as f64) * dt < t_end * (1.0 - 1e-12) {
        steps + 1
    } else {
        steps
    };
    let mut states = Vec::with_capacity(steps / stride + 2);
    states.push(*initial);
    let mut cur = *initial;
    for n in 1..=steps {
        let t_next = if n == steps { t0 + t_end } else { t0 + n as f64 * dt };
        let mut next = rk4_step(params, &cur, t_next - cur.t)?;
        next.t = t_next;
        if !(next.m1.is_finite() && next.m2.is_finite() && next.v1.is_finite() && next.v2.is_finite()) {
            return Err(Error::Numeric(format!("moment integration diverged at t = {t_next}")));
        }
        if n % stride == 0 || n == steps {
            states.push(next);
        }
        cur = next;
    }
    Ok(MomentTrajectory {
        times: states.iter().map(|s| s.t).collect(),
        states,
    })
}
