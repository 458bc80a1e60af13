//! Actuated compass-gait walker on a constant slope.
//!
//! Two rigid legs of length l = a + b joined at an actuated hip: point
//! masses m at each leg's center of mass (distance a from the foot) and m_h
//! at the hip. Angles are measured from world vertical, positive tipping in
//! the direction of travel; the stance foot is pinned at the origin of the
//! current step and the ground line drops with the slope.
//!
//! Continuous state is [θ_st, θ_sw, ω_st, ω_sw]. Heel strike is an
//! instantaneous plastic impact conserving angular momentum of the whole
//! system about the new contact and of the trailing leg about the hip; the
//! leg roles swap at that instant. The hip actuator applies one torque
//! between the legs; a push is a horizontal force at the hip.

use serde::{Deserialize, Serialize};

use super::integrate::ContinuousModel;
use super::{FailureCause, SimConfig};

fn default_leg_mass() -> f64 {
    5.0
}
fn default_hip_mass() -> f64 {
    10.0
}
fn default_a() -> f64 {
    0.5
}
fn default_b() -> f64 {
    0.5
}
fn default_slope() -> f64 {
    0.0524
}
fn default_gravity() -> f64 {
    9.81
}
fn default_min_separation() -> f64 {
    0.05
}

/// Compass-gait parameters. Defaults are the classic stable passive set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompassParams {
    /// Mass of each leg, kg.
    #[serde(default = "default_leg_mass")]
    pub leg_mass: f64,
    /// Hip mass, kg.
    #[serde(default = "default_hip_mass")]
    pub hip_mass: f64,
    /// Foot to leg center of mass, m.
    #[serde(default = "default_a")]
    pub a: f64,
    /// Leg center of mass to hip, m.
    #[serde(default = "default_b")]
    pub b: f64,
    /// Slope angle, rad.
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Interleg angle below which a ground crossing is treated as scuffing.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
}

impl Default for CompassParams {
    fn default() -> Self {
        Self {
            leg_mass: default_leg_mass(),
            hip_mass: default_hip_mass(),
            a: default_a(),
            b: default_b(),
            slope: default_slope(),
            gravity: default_gravity(),
            min_separation: default_min_separation(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompassGait {
    pub params: CompassParams,
}

impl CompassGait {
    pub fn new(params: CompassParams) -> crate::Result<Self> {
        if !(params.leg_mass > 0.0)
            || !(params.hip_mass > 0.0)
            || !(params.a > 0.0)
            || !(params.b > 0.0)
            || !(params.gravity > 0.0)
        {
            return Err(crate::Error::InvalidInput(
                "compass gait masses, lengths and gravity must be positive".into(),
            ));
        }
        Ok(Self { params })
    }

    fn leg_length(&self) -> f64 {
        self.params.a + self.params.b
    }

    /// Swing-foot clearance above the slope line through the stance foot.
    pub fn swing_clearance(&self, x: &[f64]) -> f64 {
        let l = self.leg_length();
        let xs = l * (x[0].sin() - x[1].sin());
        let ys = l * (x[0].cos() - x[1].cos());
        ys + xs * self.params.slope.tan()
    }

    /// Hip clearance above the slope line, vertical measure.
    pub fn hip_clearance(&self, x: &[f64]) -> f64 {
        let l = self.leg_length();
        l * x[0].cos() + l * x[0].sin() * self.params.slope.tan()
    }

    /// Total mechanical energy (stance-foot frame), J.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.kinetic_energy(x) + self.potential_energy(x)
    }

    pub fn kinetic_energy(&self, x: &[f64]) -> f64 {
        let (m, mh) = (self.params.leg_mass, self.params.hip_mass);
        let (a, b) = (self.params.a, self.params.b);
        let l = a + b;
        let delta = x[0] - x[1];
        let (w_st, w_sw) = (x[2], x[3]);
        0.5 * (mh * l * l + m * (a * a + l * l)) * w_st * w_st + 0.5 * m * b * b * w_sw * w_sw
            - m * l * b * w_st * w_sw * delta.cos()
    }

    pub fn potential_energy(&self, x: &[f64]) -> f64 {
        let (m, mh, g) = (self.params.leg_mass, self.params.hip_mass, self.params.gravity);
        let (a, b) = (self.params.a, self.params.b);
        let l = a + b;
        g * x[0].cos() * (mh * l + m * a + m * l) - g * m * b * x[1].cos()
    }

    /// Plastic heel-strike map: returns the post-impact state with leg roles
    /// swapped. Velocities solve the 2x2 angular-momentum balance.
    pub fn heel_strike(&self, x: &[f64]) -> Vec<f64> {
        let (m, mh) = (self.params.leg_mass, self.params.hip_mass);
        let (a, b) = (self.params.a, self.params.b);
        let l = a + b;
        let c = (x[0] - x[1]).cos();
        // about the new contact / about the hip, pre-impact coefficients
        let q11 = m * a * b - (mh * l * l + 2.0 * m * a * l) * c;
        let q12 = m * a * b;
        let q21 = m * a * b;
        let q22 = 0.0;
        // post-impact coefficients
        let p11 = m * b * l * c - (mh * l * l + m * (a * a + l * l));
        let p12 = m * b * (l * c - b);
        let p21 = m * b * l * c;
        let p22 = -m * b * b;

        let r1 = q11 * x[2] + q12 * x[3];
        let r2 = q21 * x[2] + q22 * x[3];
        let det = p11 * p22 - p12 * p21;
        let w_st_new = (r1 * p22 - p12 * r2) / det;
        let w_sw_new = (p11 * r2 - r1 * p21) / det;

        vec![x[1], x[0], w_st_new, w_sw_new]
    }
}

impl ContinuousModel for CompassGait {

    fn action_dim(&self) -> usize {
        1
    }

    fn deriv(&self, x: &[f64], torque: &[f64], push_force: f64, out: &mut [f64]) {
        let (m, mh, g) = (self.params.leg_mass, self.params.hip_mass, self.params.gravity);
        let (a, b) = (self.params.a, self.params.b);
        let l = a + b;
        let (th_st, th_sw, w_st, w_sw) = (x[0], x[1], x[2], x[3]);
        let delta = th_st - th_sw;
        let (sd, cd) = delta.sin_cos();

        let m11 = mh * l * l + m * (a * a + l * l);
        let m12 = -m * l * b * cd;
        let m22 = m * b * b;

        // hip torque u acts on the swing leg and reacts on the stance leg;
        // the push is horizontal at the hip
        let u = torque[0];
        let q_st = -u + push_force * l * th_st.cos();
        let q_sw = u;

        let b1 = q_st + m * l * b * sd * w_sw * w_sw + g * (mh * l + m * a + m * l) * th_st.sin();
        let b2 = q_sw - m * l * b * sd * w_st * w_st - g * m * b * th_sw.sin();

        let det = m11 * m22 - m12 * m12;
        out[0] = w_st;
        out[1] = w_sw;
        out[2] = (b1 * m22 - m12 * b2) / det;
        out[3] = (m11 * b2 - m12 * b1) / det;
    }

    fn impact_function(&self, x: &[f64]) -> f64 {
        self.swing_clearance(x)
    }

    fn impact_guard(&self, x: &[f64]) -> bool {
        let l = self.leg_length();
        let ahead = l * (x[0].sin() - x[1].sin()) > 0.0;
        ahead && (x[0] - x[1]).abs() >= self.params.min_separation
    }

    fn apply_impact(&self, x: &[f64]) -> Vec<f64> {
        self.heel_strike(x)
    }

    fn failure(&self, x: &[f64], cfg: &SimConfig) -> Option<FailureCause> {
        if self.hip_clearance(x) < cfg.fell_height_fraction * self.leg_length() {
            return Some(FailureCause::Fell);
        }
        None
    }

    fn observation(&self, x: &[f64], _t: f64) -> Vec<f64> {
        x.to_vec()
    }

    fn section_state(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn from_section(&self, s: &[f64]) -> Vec<f64> {
        s.to_vec()
    }

    fn pd_torque(
        &self,
        params: &std::collections::BTreeMap<String, f64>,
        obs: &[f64],
    ) -> Vec<f64> {
        // interleg tracking: drive θ_st − θ_sw toward alpha_ref; positive
        // hip torque accelerates the swing leg forward (reduces the gap)
        let kp = params.get("kp").copied().unwrap_or(0.0);
        let kd = params.get("kd").copied().unwrap_or(0.0);
        let alpha_ref = params.get("alpha_ref").copied().unwrap_or(0.0);
        let delta = obs[0] - obs[1];
        let ddelta = obs[2] - obs[3];
        vec![-(kp * (alpha_ref - delta) - kd * ddelta)]
    }
}
