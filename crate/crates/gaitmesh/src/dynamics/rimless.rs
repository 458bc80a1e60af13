//! Rimless wheel on a constant slope: a point mass at the hub on massless
//! spokes, pivoting about the stance spoke like an inverted pendulum.
//!
//! The hub angle θ is measured from world vertical, increasing in the
//! direction of travel. A stance phase runs from θ = slope − α to
//! θ = slope + α (α = π / spokes); the spoke exchange conserves angular
//! momentum about the new contact, scaling the hub rate by cos 2α. The
//! Poincaré section state is the single post-impact hub rate [ω], and one
//! gait cycle spans two spoke exchanges.
//!
//! The closed-form step map (energy gain down the slope, impact loss
//! cos 2α) is exposed for use as an independent reference; the simulator
//! never calls it.

use serde::{Deserialize, Serialize};

use super::integrate::ContinuousModel;
use super::{FailureCause, SimConfig};

fn default_spokes() -> u32 {
    8
}
fn default_leg() -> f64 {
    1.0
}
fn default_mass() -> f64 {
    10.0
}
fn default_slope() -> f64 {
    0.08
}
fn default_gravity() -> f64 {
    9.81
}

/// Rimless-wheel parameters. Defaults give a stable downhill roll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RimlessParams {
    #[serde(default = "default_spokes")]
    pub spokes: u32,
    /// Spoke length, m.
    #[serde(default = "default_leg")]
    pub leg_length: f64,
    /// Hub mass, kg.
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Slope angle, rad (downhill in the direction of travel).
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

impl Default for RimlessParams {
    fn default() -> Self {
        Self {
            spokes: default_spokes(),
            leg_length: default_leg(),
            mass: default_mass(),
            slope: default_slope(),
            gravity: default_gravity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RimlessWheel {
    pub params: RimlessParams,
    /// Half the inter-spoke angle, π / spokes.
    alpha: f64,
}

impl RimlessWheel {
    pub fn new(params: RimlessParams) -> crate::Result<Self> {
        if params.spokes < 3 {
            return Err(crate::Error::InvalidInput(
                "rimless wheel needs at least 3 spokes".into(),
            ));
        }
        if !(params.leg_length > 0.0) || !(params.mass > 0.0) || !(params.gravity > 0.0) {
            return Err(crate::Error::InvalidInput(
                "rimless wheel lengths, masses and gravity must be positive".into(),
            ));
        }
        let alpha = std::f64::consts::PI / params.spokes as f64;
        Ok(Self { params, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Stance start angle, slope − α.
    pub fn theta_start(&self) -> f64 {
        self.params.slope - self.alpha
    }

    /// Stance end (impact) angle, slope + α.
    pub fn theta_end(&self) -> f64 {
        self.params.slope + self.alpha
    }

    /// Kinetic-plus-potential energy of the hub mass, J.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let (m, l) = (self.params.mass, self.params.leg_length);
        0.5 * m * l * l * x[1] * x[1] + m * self.params.gravity * l * x[0].cos()
    }

    /// Closed-form post-impact rate after one spoke step from post-impact
    /// rate `omega`, or `None` when the wheel cannot clear mid-stance.
    ///
    /// Energy balance over the stance arc plus the cos 2α impact loss.
    pub fn spoke_step_map(&self, omega: f64) -> Option<f64> {
        if omega <= 0.0 {
            return None;
        }
        let two_g_over_l = 2.0 * self.params.gravity / self.params.leg_length;
        let theta0 = self.theta_start();
        if theta0 < 0.0 {
            // must carry enough kinetic energy over vertical
            let need = two_g_over_l * (1.0 - theta0.cos());
            if omega * omega <= need {
                return None;
            }
        }
        let gain = two_g_over_l * (theta0.cos() - self.theta_end().cos());
        let pre_impact_sq = omega * omega + gain;
        Some((2.0 * self.alpha).cos() * pre_impact_sq.sqrt())
    }

    /// The post-impact rate required to just clear mid-stance (0 when the
    /// slope is steeper than α and there is no apex to clear).
    pub fn apex_threshold_omega(&self) -> f64 {
        let theta0 = self.theta_start();
        if theta0 >= 0.0 {
            return 0.0;
        }
        (2.0 * self.params.gravity / self.params.leg_length * (1.0 - theta0.cos())).sqrt()
    }

    /// Fixed point of the closed-form step map.
    pub fn limit_cycle_omega(&self) -> f64 {
        let c2 = (2.0 * self.alpha).cos().powi(2);
        let gain = 2.0 * self.params.gravity / self.params.leg_length
            * (self.theta_start().cos() - self.theta_end().cos());
        (c2 * gain / (1.0 - c2)).sqrt()
    }
}

impl ContinuousModel for RimlessWheel {

    fn action_dim(&self) -> usize {
        1
    }

    fn deriv(&self, x: &[f64], torque: &[f64], push_force: f64, out: &mut [f64]) {
        let (m, l, g) = (
            self.params.mass,
            self.params.leg_length,
            self.params.gravity,
        );
        let theta = x[0];
        out[0] = x[1];
        // inverted pendulum about the contact, horizontal push at the hub,
        // axle torque from the policy
        out[1] = g / l * theta.sin() + push_force * theta.cos() / (m * l)
            + torque[0] / (m * l * l);
    }

    fn impact_function(&self, x: &[f64]) -> f64 {
        self.theta_end() - x[0]
    }

    fn impact_guard(&self, _x: &[f64]) -> bool {
        true
    }

    fn apply_impact(&self, x: &[f64]) -> Vec<f64> {
        vec![self.theta_start(), x[1] * (2.0 * self.alpha).cos()]
    }

    fn failure(&self, x: &[f64], cfg: &SimConfig) -> Option<FailureCause> {
        let (theta, omega) = (x[0], x[1]);
        // stalled at or before the apex: gravity pulls it back
        if theta <= 0.0 && omega <= 0.0 {
            return Some(FailureCause::Fell);
        }
        // rolled backward onto the previous spoke
        if theta < self.theta_start() - 1e-9 {
            return Some(FailureCause::Fell);
        }
        // hub dropped below the configured fraction of standing height
        if theta.cos() < cfg.fell_height_fraction {
            return Some(FailureCause::Fell);
        }
        None
    }

    fn observation(&self, x: &[f64], _t: f64) -> Vec<f64> {
        x.to_vec()
    }

    fn section_state(&self, x: &[f64]) -> Vec<f64> {
        vec![x[1]]
    }

    fn from_section(&self, s: &[f64]) -> Vec<f64> {
        vec![self.theta_start(), s[0]]
    }

    fn pd_torque(
        &self,
        params: &std::collections::BTreeMap<String, f64>,
        obs: &[f64],
    ) -> Vec<f64> {
        // axle torque regulating hub rate toward omega_ref
        let kp = params.get("kp").copied().unwrap_or(0.0);
        let omega_ref = params.get("omega_ref").copied().unwrap_or(0.0);
        vec![kp * (omega_ref - obs[1])]
    }
}
