//! Section-space geometry: the distance metric used for lumping, the mesh
//! container, reachable-manifold dimensionality estimation, and PCA
//! projection for visualization export.
//!
//! All operations here are pure functions over immutable inputs and are safe
//! to call from many threads at once.

mod pca;

pub use pca::{pca_project, PcaProjection};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A post-impact state vector on the Poincaré section.
///
/// Coordinates are model-defined (joint angles in rad, velocities in rad/s,
/// heights in m). All coordinates are finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareState {
    coords: Vec<f64>,
}

impl PoincareState {
    /// Builds a state, rejecting NaN/Inf coordinates and zero dimension.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("state has zero dimension".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite state coordinate: {bad}"
            )));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Identifies the configuration a mesh was built from.
///
/// The digest ties analysis outputs back to the exact build inputs so that
/// a profile override can be checked against the bundle it is applied to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub policy_id: String,
    pub profile_id: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    /// SHA-256 over a canonical rendering of the provenance fields.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model_id.as_bytes());
        h.update([0]);
        h.update(self.policy_id.as_bytes());
        h.update([0]);
        h.update(self.profile_id.as_bytes());
        h.update([0]);
        for s in &self.seeds {
            h.update(s.to_le_bytes());
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ordered set of Poincaré states with index 0 reserved as the absorbing
/// failure sentinel (its coordinates are unused).
///
/// Invariant: any two distinct non-failure states are strictly farther apart
/// than `d_tr` under the mesh metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    states: Vec<PoincareState>,
    d_tr: f64,
    /// Per-coordinate metric weights; `None` means the plain Euclidean metric.
    weights: Option<Vec<f64>>,
    provenance: Provenance,
}

impl Mesh {
    /// Creates a mesh holding the failure sentinel plus one initial state.
    pub fn with_initial(
        initial: PoincareState,
        d_tr: f64,
        weights: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(d_tr > 0.0) || !d_tr.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lumping threshold must be positive, got {d_tr}"
            )));
        }
        if let Some(w) = &weights {
            if w.len() != initial.dim() {
                return Err(Error::DimensionMismatch {
                    expected: initial.dim(),
                    got: w.len(),
                });
            }
            if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::InvalidInput(
                    "metric weights must be finite and positive".into(),
                ));
            }
        }
        let sentinel = PoincareState {
            coords: vec![0.0; initial.dim()],
        };
        Ok(Self {
            states: vec![sentinel, initial],
            d_tr,
            weights,
            provenance,
        })
    }

    /// Rebuilds a mesh from raw parts (used when loading a bundle). The
    /// separation invariant is the caller's responsibility; `verify_separation`
    /// re-checks it exhaustively.
    pub fn from_parts(
        states: Vec<PoincareState>,
        d_tr: f64,
        weights: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidInput(
                "a mesh needs the failure sentinel plus at least one state".into(),
            ));
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidInput(
                "all mesh states must share one dimension".into(),
            ));
        }
        if !(d_tr > 0.0) {
            return Err(Error::InvalidInput("d_tr must be positive".into()));
        }
        Ok(Self {
            states,
            d_tr,
            weights,
            provenance,
        })
    }

    /// Total state count including the failure sentinel.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Never true: a mesh always holds the sentinel plus one state.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn d_tr(&self) -> f64 {
        self.d_tr
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The state at `index`; index 0 is the failure sentinel.
    pub fn state(&self, index: usize) -> &PoincareState {
        &self.states[index]
    }

    /// Non-failure states with their mesh indices.
    pub fn non_failure(&self) -> impl Iterator<Item = (usize, &PoincareState)> {
        self.states.iter().enumerate().skip(1)
    }

    /// Appends a state after checking it keeps the separation invariant.
    pub fn append(&mut self, s: PoincareState) -> Result<usize> {
        let (d_min, _) = distance_to_mesh(&s, self)?;
        if d_min <= self.d_tr {
            return Err(Error::InvalidInput(format!(
                "state violates mesh separation: d_min {d_min} <= d_tr {}",
                self.d_tr
            )));
        }
        self.states.push(s);
        Ok(self.states.len() - 1)
    }

    /// Append used by the mesh builder, which has already computed the
    /// nearest-neighbor distance for the lumping decision.
    pub(crate) fn append_with_distance(&mut self, s: PoincareState, d_min: f64) -> usize {
        debug_assert!(d_min > self.d_tr);
        debug_assert_eq!(s.dim(), self.dim());
        self.states.push(s);
        self.states.len() - 1
    }

    /// Exhaustively verifies pairwise separation of non-failure states.
    pub fn verify_separation(&self) -> bool {
        let w = self.weights.as_deref();
        for i in 1..self.states.len() {
            for j in (i + 1)..self.states.len() {
                let d = weighted_distance(self.states[i].coords(), self.states[j].coords(), w);
                if d <= self.d_tr {
                    return false;
                }
            }
        }
        true
    }
}

/// Weighted Euclidean distance; weights scale coordinate differences before
/// squaring. `None` weights mean all-ones.
pub fn weighted_distance(a: &[f64], b: &[f64], weights: Option<&[f64]>) -> f64 {
    let sq = match weights {
        None => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
        Some(w) => a
            .iter()
            .zip(b)
            .zip(w)
            .map(|((x, y), wk)| {
                let d = wk * (x - y);
                d * d
            })
            .sum::<f64>(),
    };
    sq.sqrt()
}

/// Nearest non-failure mesh state under the mesh metric.
///
/// Returns the minimum distance and the index attaining it; ties break to
/// the lowest index. Reference implementation is an exhaustive linear scan.
pub fn distance_to_mesh(s: &PoincareState, mesh: &Mesh) -> Result<(f64, usize)> {
    if s.dim() != mesh.dim() {
        return Err(Error::DimensionMismatch {
            expected: mesh.dim(),
            got: s.dim(),
        });
    }
    if mesh.len() < 2 {
        return Err(Error::InvalidInput("mesh has no non-failure states".into()));
    }
    let w = mesh.weights();
    let mut best = f64::INFINITY;
    let mut best_idx = 0usize;
    for (i, m) in mesh.non_failure() {
        let d = weighted_distance(s.coords(), m.coords(), w);
        if d < best {
            best = d;
            best_idx = i;
        }
    }
    Ok((best, best_idx))
}

/// Result of the log-log mesh-growth fit.
///
/// If mesh points occupy an n-dimensional subspace then N ∝ d_tr⁻ⁿ, so a
/// line fit of log N against log d_tr has slope −n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    /// The (d_tr, N) pairs the fit used.
    pub samples: Vec<(f64, usize)>,
    /// Fitted slope of log N vs log d_tr.
    pub slope: f64,
    /// Fitted intercept (log C in N = C·d_tr^slope).
    pub intercept: f64,
    /// Estimated manifold dimension, −slope.
    pub n_hat: f64,
    /// Coefficient of determination of the log-log fit.
    pub r_squared: f64,
}

/// Least-squares line fit of log N against log d_tr.
pub fn estimate_dimension(samples: &[(f64, usize)]) -> Result<DimensionFit> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "dimension fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    for &(d, n) in samples {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidInput(format!(
                "thresholds must be positive and finite, got {d}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidInput("mesh sizes must be >= 1".into()));
        }
    }
    let xs: Vec<f64> = samples.iter().map(|&(d, _)| d.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, n)| (n as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput(
            "thresholds must not all be equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res.abs() < 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(DimensionFit {
        samples: samples.to_vec(),
        slope,
        intercept,
        n_hat: -slope,
        r_squared,
    })
}
