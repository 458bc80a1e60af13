//! Shared hybrid-system driver: fixed-step RK4 between impacts, zero-order
//! control hold, push windows applied at exact model times, and impact
//! localization by bisection on the event function.
//!
//! Everything here is deterministic: the step grid is derived from integer
//! step indices, segment boundaries come from exact configuration values,
//! and bisection runs to a fixed time tolerance.

use crate::dynamics::policy::{saturate, PolicyRuntime};
use crate::dynamics::{CycleResult, Disturbance, FailureCause, SimConfig, SimulationOutcome};
use crate::error::{Error, Result};
use crate::geometry::PoincareState;

/// Continuous-time model with impact events, as seen by the cycle driver.
pub(crate) trait ContinuousModel {
    fn action_dim(&self) -> usize;

    /// Right-hand side with held torques and the current horizontal push force.
    fn deriv(&self, x: &[f64], torque: &[f64], push_force: f64, out: &mut [f64]);

    /// Positive between impacts, crossing to <= 0 at an impact.
    fn impact_function(&self, x: &[f64]) -> f64;

    /// Extra validity condition evaluated at the crossing (scuffing guard etc.).
    fn impact_guard(&self, x: &[f64]) -> bool;

    /// Instantaneous impact map, also swapping leg roles where applicable.
    fn apply_impact(&self, x: &[f64]) -> Vec<f64>;

    /// Model-specific failure classification of a continuous state.
    fn failure(&self, x: &[f64], cfg: &SimConfig) -> Option<FailureCause>;

    /// Observation sent to the policy.
    fn observation(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// Section coordinates of a post-impact state.
    fn section_state(&self, x: &[f64]) -> Vec<f64>;

    /// Embeds section coordinates into a full continuous state.
    fn from_section(&self, s: &[f64]) -> Vec<f64>;

    /// PD torque for this model's actuation, before saturation.
    fn pd_torque(
        &self,
        params: &std::collections::BTreeMap<String, f64>,
        obs: &[f64],
    ) -> Vec<f64>;
}

/// One classical RK4 step of size `h` with frozen torque and push force.
pub(crate) fn rk4_step<M: ContinuousModel + ?Sized>(
    model: &M,
    x: &[f64],
    torque: &[f64],
    push: f64,
    h: f64,
) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    model.deriv(x, torque, push, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    model.deriv(&tmp, torque, push, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    model.deriv(&tmp, torque, push, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    model.deriv(&tmp, torque, push, &mut k4);

    (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Evaluates the policy, clips nothing on the way in (clipping to ±10 happens
/// inside the external client), and saturates torques on the way out.
fn eval_policy<M: ContinuousModel + ?Sized>(
    model: &M,
    runtime: &mut PolicyRuntime,
    obs: &[f64],
    torque_limit: f64,
) -> Result<Vec<f64>> {
    let mut torques = match runtime {
        PolicyRuntime::Passive => vec![0.0; model.action_dim()],
        PolicyRuntime::Pd { params } => model.pd_torque(params, obs),
        PolicyRuntime::External(client) => {
            let act = client.query(obs)?;
            if act.len() != model.action_dim() {
                return Err(Error::Protocol(format!(
                    "action length {} != model action dim {}",
                    act.len(),
                    model.action_dim()
                )));
            }
            act
        }
    };
    saturate(&mut torques, torque_limit);
    Ok(torques)
}

/// Integrates one full gait cycle: two impacts, returning at the
/// section-defining impact, once the minimum cycle time has passed.
///
/// Impacts come in pairs; the cycle closes at the first even-numbered impact
/// whose time is at least `min_cycle_time`. The push force is active during
/// `[start_time, start_time + duration)` regardless of grid or hold
/// boundaries; steps are split so the force is constant within each RK4 step.
pub(crate) fn simulate_cycle_hybrid<M: ContinuousModel + ?Sized>(
    model: &M,
    x0: &PoincareState,
    runtime: &mut PolicyRuntime,
    torque_limit: f64,
    gamma: &Disturbance,
    cfg: &SimConfig,
) -> Result<SimulationOutcome> {
    cfg.validate()?;
    let h = cfg.time_step;
    let hold_dt = cfg.control_hold_steps as f64 * h;

    let mut x = model.from_section(x0.coords());
    let mut t = 0.0f64;
    let mut impacts = 0u32;
    let mut torque = vec![0.0; model.action_dim()];
    let mut next_ctrl = 0.0f64;
    let mut trajectory: Option<Vec<(f64, Vec<f64>)>> = if cfg.record_trajectory {
        Some(vec![(0.0, x.clone())])
    } else {
        None
    };

    let push_active = !gamma.is_null && gamma.magnitude != 0.0 && gamma.duration > 0.0;
    let push_start = gamma.start_time;
    let push_end = gamma.start_time + gamma.duration;

    let fail = |cause: FailureCause, t: f64, trajectory| {
        Ok(SimulationOutcome {
            result: CycleResult::Failure(cause),
            cycle_time: t,
            trajectory,
        })
    };

    if let Some(cause) = model.failure(&x, cfg) {
        return fail(cause, 0.0, trajectory);
    }

    loop {
        if t >= cfg.timeout {
            return fail(FailureCause::Timeout, t, trajectory);
        }
        // Zero-order hold: refresh the torque at every hold boundary.
        if t + 1e-12 >= next_ctrl {
            let obs = model.observation(&x, t);
            torque = eval_policy(model, runtime, &obs, torque_limit)?;
            next_ctrl = ((t + 1e-12).div_euclid(hold_dt) + 1.0) * hold_dt;
        }
        // Segment end: next grid point, clipped by push boundaries.
        let grid_next = ((t + 1e-12).div_euclid(h) + 1.0) * h;
        let mut t_end = grid_next;
        if push_active {
            for tb in [push_start, push_end] {
                if tb > t + 1e-12 && tb < t_end - 1e-15 {
                    t_end = tb;
                }
            }
        }
        let mid = 0.5 * (t + t_end);
        let force = if push_active && mid >= push_start && mid < push_end {
            gamma.magnitude
        } else {
            0.0
        };

        let x_new = rk4_step(model, &x, &torque, force, t_end - t);
        if !finite(&x_new) {
            return fail(FailureCause::IntegrationError, t, trajectory);
        }

        let g0 = model.impact_function(&x);
        let g1 = model.impact_function(&x_new);
        if g0 > 0.0 && g1 <= 0.0 && model.impact_guard(&x_new) {
            // Bisect for the first time the event function is non-positive.
            let (t_star, x_star) =
                bisect_impact(model, &x, t, t_end, &torque, force, cfg.event_tolerance);
            if !finite(&x_star) {
                return fail(FailureCause::IntegrationError, t_star, trajectory);
            }
            let x_post = model.apply_impact(&x_star);
            impacts += 1;
            if let Some(tr) = trajectory.as_mut() {
                tr.push((t_star, x_star.clone()));
                tr.push((t_star, x_post.clone()));
            }
            if let Some(cause) = model.failure(&x_post, cfg) {
                return fail(cause, t_star, trajectory);
            }
            if impacts % 2 == 0 && t_star >= cfg.min_cycle_time {
                let section = model.section_state(&x_post);
                let next = PoincareState::new(section)?;
                return Ok(SimulationOutcome {
                    result: CycleResult::Step(next),
                    cycle_time: t_star,
                    trajectory,
                });
            }
            x = x_post;
            t = t_star;
        } else {
            if let Some(cause) = model.failure(&x_new, cfg) {
                if let Some(tr) = trajectory.as_mut() {
                    tr.push((t_end, x_new.clone()));
                }
                return fail(cause, t_end, trajectory);
            }
            if let Some(tr) = trajectory.as_mut() {
                tr.push((t_end, x_new.clone()));
            }
            x = x_new;
            t = t_end;
        }
    }
}

/// Finds the earliest time in `(t0, t1]` where the impact function becomes
/// non-positive, to within `tol` seconds. Integration inside the bracket is
/// a single RK4 step from the segment start, which keeps the located state
/// consistent with the fixed-step scheme.
fn bisect_impact<M: ContinuousModel + ?Sized>(
    model: &M,
    x0: &[f64],
    t0: f64,
    t1: f64,
    torque: &[f64],
    force: f64,
    tol: f64,
) -> (f64, Vec<f64>) {
    let mut lo = t0;
    let mut hi = t1;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let x_mid = rk4_step(model, x0, torque, force, mid - t0);
        if model.impact_function(&x_mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x_star = rk4_step(model, x0, torque, force, hi - t0);
    (hi, x_star)
}
