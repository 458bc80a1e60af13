//! Hybrid-system simulation: continuous dynamics under a feedback policy
//! with fixed-step RK4, mid-cycle push disturbances, impact detection, and
//! failure classification — one Poincaré return (a full two-step gait
//! cycle) per call.
//!
//! Ships a rimless-wheel model, an actuated compass-gait model, a synthetic
//! scatter map for calibration, and a wire client for external policies.

mod compass;
mod integrate;
mod policy;
mod rimless;
mod synthetic;

pub use compass::{CompassGait, CompassParams};
pub use policy::{
    external_policy_query, saturate, Endpoint, ExternalPolicyClient, ExternalPolicyPool,
    PolicyKind, PolicyRuntime, PolicySpec, PooledClient, DEFAULT_DEADLINE_MS,
    DEFAULT_TORQUE_LIMIT, OBSERVATION_CLIP,
};
pub use rimless::{RimlessParams, RimlessWheel};
pub use synthetic::{SyntheticParams, SyntheticScatter};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoincareState;
use integrate::ContinuousModel;

/// A timed horizontal push. Index 0 of a profile is the null push.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Signed force, N; positive pushes in the direction of travel.
    pub magnitude: f64,
    /// Seconds into the gait cycle.
    #[serde(default)]
    pub start_time: f64,
    /// Seconds the force is held.
    #[serde(default)]
    pub duration: f64,
    /// Body the force acts on.
    #[serde(default)]
    pub target: PushTarget,
    #[serde(default)]
    pub is_null: bool,
}

/// Body identifier for the push point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PushTarget {
    /// Torso / body center of mass (the hub or hip for the built-in models).
    #[default]
    Torso,
}

impl Disturbance {
    pub fn null() -> Self {
        Self {
            magnitude: 0.0,
            start_time: 0.0,
            duration: 0.0,
            target: PushTarget::Torso,
            is_null: true,
        }
    }

    pub fn push(magnitude: f64, start_time: f64, duration: f64) -> Self {
        Self {
            magnitude,
            start_time,
            duration,
            target: PushTarget::Torso,
            is_null: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_null && self.magnitude != 0.0 {
            return Err(Error::InvalidInput(
                "a null disturbance must have magnitude 0".into(),
            ));
        }
        if self.duration < 0.0 || self.start_time < 0.0 {
            return Err(Error::InvalidInput(
                "push start time and duration must be >= 0".into(),
            ));
        }
        if !self.magnitude.is_finite() || !self.start_time.is_finite() || !self.duration.is_finite()
        {
            return Err(Error::InvalidInput("push fields must be finite".into()));
        }
        Ok(())
    }
}

/// A finite disturbance set (index 0 the null push) with its probability
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    #[serde(default)]
    pub id: String,
    pub disturbances: Vec<Disturbance>,
    pub probabilities: Vec<f64>,
}

impl DisturbanceProfile {
    /// Profile with the null push at probability `p_null` and the remaining
    /// mass split evenly over `pushes`.
    pub fn with_null(id: &str, pushes: Vec<Disturbance>, p_null: f64) -> Result<Self> {
        let k = pushes.len();
        let mut disturbances = vec![Disturbance::null()];
        disturbances.extend(pushes);
        let mut probabilities = vec![p_null];
        if k > 0 {
            probabilities.extend(std::iter::repeat((1.0 - p_null) / k as f64).take(k));
        } else if (p_null - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "no pushes given, so the null probability must be 1".into(),
            ));
        }
        let profile = Self {
            id: id.into(),
            disturbances,
            probabilities,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.disturbances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disturbances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.disturbances.is_empty() {
            return Err(Error::InvalidInput("disturbance list is empty".into()));
        }
        if self.disturbances.len() != self.probabilities.len() {
            return Err(Error::InvalidInput(format!(
                "{} disturbances but {} probabilities",
                self.disturbances.len(),
                self.probabilities.len()
            )));
        }
        if !self.disturbances[0].is_null {
            return Err(Error::InvalidInput(
                "index 0 of the profile must be the null push".into(),
            ));
        }
        for d in &self.disturbances {
            d.validate()?;
        }
        if self.probabilities.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("probabilities must be >= 0".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Why a gait cycle did not complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Fell,
    Timeout,
    IntegrationError,
}

/// Either the next Poincaré state or a classified failure.
#[derive(Debug, Clone, PartialEq)]
pub enum CycleResult {
    Step(PoincareState),
    Failure(FailureCause),
}

/// One gait-cycle simulation result.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub result: CycleResult,
    /// Model time at the section-defining impact (or at failure).
    pub cycle_time: f64,
    /// Sampled (t, continuous state) path, when recording was requested.
    pub trajectory: Option<Vec<(f64, Vec<f64>)>>,
}

impl SimulationOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self.result, CycleResult::Failure(_))
    }
}

fn default_time_step() -> f64 {
    0.002
}
fn default_hold_steps() -> u32 {
    4
}
fn default_min_cycle() -> f64 {
    0.3
}
fn default_timeout() -> f64 {
    8.0
}
fn default_fell_fraction() -> f64 {
    0.5
}
fn default_event_tol() -> f64 {
    1e-10
}

/// Integrator and episode settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// RK4 step, s.
    #[serde(default = "default_time_step")]
    pub time_step: f64,
    /// Integrator steps per control update (zero-order hold).
    #[serde(default = "default_hold_steps")]
    pub control_hold_steps: u32,
    /// Impacts before this time never close the cycle, s.
    #[serde(default = "default_min_cycle")]
    pub min_cycle_time: f64,
    /// Episode wall-model time limit, s.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Torso height fraction below which the walker has fallen.
    #[serde(default = "default_fell_fraction")]
    pub fell_height_fraction: f64,
    /// Impact-time bisection tolerance, s.
    #[serde(default = "default_event_tol")]
    pub event_tolerance: f64,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_step: default_time_step(),
            control_hold_steps: default_hold_steps(),
            min_cycle_time: default_min_cycle(),
            timeout: default_timeout(),
            fell_height_fraction: default_fell_fraction(),
            event_tolerance: default_event_tol(),
            record_trajectory: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return Err(Error::Config("time_step must be positive".into()));
        }
        if self.control_hold_steps == 0 {
            return Err(Error::Config("control_hold_steps must be >= 1".into()));
        }
        if self.min_cycle_time < 0.0 {
            return Err(Error::Config("min_cycle_time must be >= 0".into()));
        }
        if self.timeout <= self.min_cycle_time {
            return Err(Error::Config("timeout must exceed min_cycle_time".into()));
        }
        if !(self.fell_height_fraction > 0.0 && self.fell_height_fraction < 1.0) {
            return Err(Error::Config(
                "fell_height_fraction must be in (0, 1)".into(),
            ));
        }
        if !(self.event_tolerance > 0.0) {
            return Err(Error::Config("event_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Declarative model selection for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    RimlessWheel(RimlessParams),
    CompassGait(CompassParams),
    SyntheticScatter(SyntheticParams),
}

impl ModelSpec {
    pub fn model_id(&self) -> &'static str {
        match self {
            Self::RimlessWheel(_) => "rimless-wheel",
            Self::CompassGait(_) => "compass-gait",
            Self::SyntheticScatter(_) => "synthetic-scatter",
        }
    }
}

/// A built-in dynamics model.
#[derive(Debug, Clone)]
pub enum Model {
    RimlessWheel(RimlessWheel),
    CompassGait(CompassGait),
    SyntheticScatter(SyntheticScatter),
}

static SIM_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of gait-cycle simulations performed by this process.
///
/// Lets callers and tests verify that analysis paths never re-simulate.
pub fn simulation_call_count() -> u64 {
    SIM_CALLS.load(Ordering::Relaxed)
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::RimlessWheel(p) => Ok(Self::RimlessWheel(RimlessWheel::new(p.clone())?)),
            ModelSpec::CompassGait(p) => Ok(Self::CompassGait(CompassGait::new(p.clone())?)),
            ModelSpec::SyntheticScatter(p) => {
                Ok(Self::SyntheticScatter(SyntheticScatter::new(p.clone())?))
            }
        }
    }

    /// Builds a model by id with default parameters.
    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "rimless-wheel" => Ok(Self::RimlessWheel(RimlessWheel::new(
                RimlessParams::default(),
            )?)),
            "compass-gait" => Ok(Self::CompassGait(CompassGait::new(CompassParams::default())?)),
            "synthetic-scatter" => Ok(Self::SyntheticScatter(SyntheticScatter::new(
                SyntheticParams::default(),
            )?)),
            other => Err(Error::UnknownModel(other.into())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::RimlessWheel(_) => "rimless-wheel",
            Self::CompassGait(_) => "compass-gait",
            Self::SyntheticScatter(_) => "synthetic-scatter",
        }
    }

    /// Dimension of the Poincaré-section state.
    pub fn section_dim(&self) -> usize {
        match self {
            Self::RimlessWheel(_) => 1,
            Self::CompassGait(_) => 4,
            Self::SyntheticScatter(m) => m.ambient_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Self::RimlessWheel(m) => m.action_dim(),
            Self::CompassGait(m) => m.action_dim(),
            Self::SyntheticScatter(_) => 0,
        }
    }

    /// A reasonable default initial section state.
    pub fn default_initial(&self) -> PoincareState {
        let coords = match self {
            Self::RimlessWheel(m) => vec![m.limit_cycle_omega()],
            // passive limit cycle of the default parameter set, found by
            // iterating the return map to convergence
            Self::CompassGait(_) => vec![
                -0.218_699_145_3,
                0.323_499_145_4,
                1.092_522_156_4,
                0.377_019_189_5,
            ],
            Self::SyntheticScatter(m) => m.center(),
        };
        PoincareState::new(coords).expect("default initial state is finite")
    }

    /// Simulates one gait cycle with an already-connected policy runtime.
    pub fn simulate_cycle(
        &self,
        x0: &PoincareState,
        runtime: &mut PolicyRuntime,
        torque_limit: f64,
        gamma: &Disturbance,
        cfg: &SimConfig,
    ) -> Result<SimulationOutcome> {
        if x0.dim() != self.section_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.section_dim(),
                got: x0.dim(),
            });
        }
        gamma.validate()?;
        SIM_CALLS.fetch_add(1, Ordering::Relaxed);
        match self {
            Self::RimlessWheel(m) => {
                integrate::simulate_cycle_hybrid(m, x0, runtime, torque_limit, gamma, cfg)
            }
            Self::CompassGait(m) => {
                integrate::simulate_cycle_hybrid(m, x0, runtime, torque_limit, gamma, cfg)
            }
            Self::SyntheticScatter(m) => {
                cfg.validate()?;
                let next = m.successor(x0.coords(), gamma);
                Ok(SimulationOutcome {
                    result: CycleResult::Step(PoincareState::new(next)?),
                    cycle_time: 0.5,
                    trajectory: None,
                })
            }
        }
    }

    /// Classifies a continuous-time model state, `None` when nominal.
    pub fn classify_failure(
        &self,
        state: &[f64],
        elapsed: f64,
        cfg: &SimConfig,
    ) -> Option<FailureCause> {
        if state.iter().any(|v| !v.is_finite()) {
            return Some(FailureCause::IntegrationError);
        }
        if elapsed > cfg.timeout {
            return Some(FailureCause::Timeout);
        }
        match self {
            Self::RimlessWheel(m) => m.failure(state, cfg),
            Self::CompassGait(m) => m.failure(state, cfg),
            Self::SyntheticScatter(_) => None,
        }
    }
}

/// Simulates one gait cycle from a policy spec, connecting a fresh policy
/// runtime for the call. Meshing uses [`Model::simulate_cycle`] with pooled
/// runtimes instead.
pub fn simulate_gait_cycle(
    x0: &PoincareState,
    policy: &PolicySpec,
    gamma: &Disturbance,
    model: &Model,
    cfg: &SimConfig,
) -> Result<SimulationOutcome> {
    let mut runtime = PolicyRuntime::connect(policy)?;
    model.simulate_cycle(x0, &mut runtime, policy.torque_limit, gamma, cfg)
}

/// Failure classification of a full continuous-time state after `elapsed`
/// seconds of the current cycle.
pub fn detect_failure(
    model: &Model,
    state: &[f64],
    elapsed: f64,
    cfg: &SimConfig,
) -> Option<FailureCause> {
    model.classify_failure(state, elapsed, cfg)
}

#[cfg(test)]
mod tests;
