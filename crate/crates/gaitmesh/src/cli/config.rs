//! Declarative run configuration: one TOML file describes the model, the
//! policy, the disturbance profile, integrator settings, meshing thresholds,
//! and analysis selections. Unknown keys are rejected, and every run writes
//! back a resolved copy whose digest is embedded in all outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    Disturbance, DisturbanceProfile, ModelSpec, PolicySpec, SimConfig,
};
use crate::error::{Error, Result};
use crate::markov::SweepWeights;

fn default_state_cap() -> usize {
    1_000_000
}
fn default_dangerous() -> f64 {
    crate::markov::DANGEROUS_DEFAULT_THRESHOLD
}
fn default_gap_ratio() -> f64 {
    0.1
}
fn default_pca_k() -> usize {
    3
}

/// Push list plus the probability distribution; the null push at index 0 is
/// implicit and carries the first probability entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub id: String,
    /// One entry per disturbance, the first being the null push.
    pub probabilities: Vec<f64>,
    #[serde(default)]
    pub pushes: Vec<PushConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushConfig {
    pub magnitude: f64,
    pub start_time: f64,
    pub duration: f64,
}

impl ProfileConfig {
    pub fn to_profile(&self) -> Result<DisturbanceProfile> {
        if self.probabilities.len() != self.pushes.len() + 1 {
            return Err(Error::Config(format!(
                "{} probabilities for {} pushes plus the null push",
                self.probabilities.len(),
                self.pushes.len()
            )));
        }
        let mut disturbances = vec![Disturbance::null()];
        disturbances.extend(
            self.pushes
                .iter()
                .map(|p| Disturbance::push(p.magnitude, p.start_time, p.duration)),
        );
        let profile = DisturbanceProfile {
            id: self.id.clone(),
            disturbances,
            probabilities: self.probabilities.clone(),
        };
        profile.validate()?;
        Ok(profile)
    }
}

/// Meshing threshold(s) and exploration bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    /// Lumping threshold for `build`.
    #[serde(default)]
    pub d_tr: Option<f64>,
    /// Threshold list for `dims`.
    #[serde(default)]
    pub d_tr_sweep: Vec<f64>,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    /// Optional per-coordinate metric weights.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

/// Analysis selections shared by analyze / sweep / project.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Controller index the analyses fix.
    #[serde(default)]
    pub controller: usize,
    #[serde(default = "default_dangerous")]
    pub dangerous_threshold: f64,
    /// (1−λ₂) ≤ ratio·(1−|λ₃|) validates the eigenvalue MFPT.
    #[serde(default = "default_gap_ratio")]
    pub gap_ratio: f64,
    /// Sensitivity-sweep weights.
    #[serde(default)]
    pub sweep: SweepWeights,
    /// Principal components for `project`.
    #[serde(default = "default_pca_k")]
    pub pca_k: usize,
    /// Raw coordinate axes for slice projections.
    #[serde(default)]
    pub axes: Option<Vec<usize>>,
    /// Emit full φ and m vectors in analysis JSON.
    #[serde(default)]
    pub full_vectors: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            controller: 0,
            dangerous_threshold: default_dangerous(),
            gap_ratio: default_gap_ratio(),
            sweep: SweepWeights::default(),
            pca_k: default_pca_k(),
            axes: None,
            full_vectors: false,
        }
    }
}

/// The whole declarative run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Controllers explored along the table's controller axis.
    pub policies: Vec<PolicySpec>,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub sim: SimConfig,
    pub build: BuildConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Section coordinates of the meshing seed; the model default when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        self.profile.to_profile()?;
        self.sim.validate()?;
        if let Some(d) = self.build.d_tr {
            if !(d > 0.0) {
                return Err(Error::Config("build.d_tr must be positive".into()));
            }
        }
        if self.analysis.pca_k == 0 {
            return Err(Error::Config("analysis.pca_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical TOML rendering of the resolved configuration.
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    /// SHA-256 of the resolved configuration text.
    pub fn digest(&self) -> Result<String> {
        let text = self.resolved_toml()?;
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
id = "rimless-wheel"

[[policies]]
id = "passive"
kind = "passive"

[profile]
id = "null-only"
probabilities = [1.0]

[build]
d_tr = 0.01
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.model_id(), "rimless-wheel");
        assert_eq!(cfg.profile.to_profile().unwrap().len(), 1);
        assert_eq!(cfg.sim.time_step, 0.002);
        assert!(cfg.digest().unwrap().len() == 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\nnot_a_key = 1\n");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
        let bad2 = MINIMAL.replace("[build]", "[build]\nbogus = 2");
        assert!(toml::from_str::<RunConfig>(&bad2).is_err());
    }

    #[test]
    fn bad_probability_sum_is_rejected_before_any_simulation() {
        let bad = MINIMAL.replace("probabilities = [1.0]", "probabilities = [0.9]");
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
initial_state = [-0.22, 0.32, 1.09, 0.38]
seeds = [7]
threads = 2

[model]
id = "compass-gait"
slope = 0.05

[[policies]]
id = "pd"
kind = "pd-tracking"
torque_limit = 80.0
[policies.params]
kp = 2.0
kd = 0.5
alpha_ref = 0.5

[profile]
id = "two-push"
probabilities = [0.8, 0.1, 0.1]
[[profile.pushes]]
magnitude = 300.0
start_time = 0.1
duration = 0.008
[[profile.pushes]]
magnitude = -300.0
start_time = 0.1
duration = 0.008

[sim]
time_step = 0.001
min_cycle_time = 0.45

[build]
d_tr = 0.05
d_tr_sweep = [0.05, 0.08, 0.12]
state_cap = 5000

[analysis]
controller = 0
dangerous_threshold = 0.95
pca_k = 2
full_vectors = true
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        let re: RunConfig = toml::from_str(&cfg.resolved_toml().unwrap()).unwrap();
        assert_eq!(cfg.digest().unwrap(), re.digest().unwrap());
        assert_eq!(re.profile.pushes.len(), 2);
        assert_eq!(re.sim.time_step, 0.001);
    }
}
