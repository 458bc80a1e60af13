//! Synthetic return map for calibration and self-tests: every simulated
//! cycle lands on a fresh pseudo-random point of a k-dimensional unit cube
//! isometrically embedded in the ambient section space.
//!
//! The successor depends only on (current state, disturbance, seed), so the
//! map is deterministic and never fails — meshing it sweeps out exactly a
//! k-dimensional region, which makes it the reference workload for the
//! dimensionality-recovery analysis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Disturbance;

fn default_ambient() -> usize {
    13
}
fn default_intrinsic() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    /// Section dimension the cube is embedded in.
    #[serde(default = "default_ambient")]
    pub ambient_dim: usize,
    /// Dimension of the scattered cube.
    #[serde(default = "default_intrinsic")]
    pub intrinsic_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            ambient_dim: default_ambient(),
            intrinsic_dim: default_intrinsic(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScatter {
    pub params: SyntheticParams,
    /// Orthonormal embedding of the cube axes into the ambient space.
    basis: Vec<Vec<f64>>,
}

impl SyntheticScatter {
    pub fn new(params: SyntheticParams) -> crate::Result<Self> {
        let (k, dim) = (params.intrinsic_dim, params.ambient_dim);
        if k == 0 || k > dim {
            return Err(crate::Error::InvalidInput(format!(
                "intrinsic dim {k} must be in 1..=ambient dim {dim}"
            )));
        }
        // Seeded random directions, Gram-Schmidt orthonormalized, so the
        // cube is not axis-aligned in the ambient space.
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5ca77e12);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        while basis.len() < k {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for u in &basis {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for vi in &mut v {
                    *vi /= norm;
                }
                basis.push(v);
            }
        }
        Ok(Self { params, basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.params.ambient_dim
    }

    /// Deterministic successor: cube coordinates drawn from a stream keyed
    /// by the current state, the disturbance, and the model seed.
    pub fn successor(&self, coords: &[f64], gamma: &Disturbance) -> Vec<f64> {
        let mut key = fnv1a(self.params.seed.to_le_bytes().as_slice(), 0xcbf29ce484222325);
        for c in coords {
            key = fnv1a(&c.to_bits().to_le_bytes(), key);
        }
        for field in [gamma.magnitude, gamma.start_time, gamma.duration] {
            key = fnv1a(&field.to_bits().to_le_bytes(), key);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let cube: Vec<f64> = (0..self.params.intrinsic_dim)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let mut out = vec![0.0; self.params.ambient_dim];
        for (u, basis_vec) in cube.iter().zip(&self.basis) {
            for (o, bv) in out.iter_mut().zip(basis_vec) {
                *o += u * bv;
            }
        }
        out
    }

    /// Center of the embedded cube, a convenient initial state.
    pub fn center(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.params.ambient_dim];
        for basis_vec in &self.basis {
            for (o, bv) in out.iter_mut().zip(basis_vec) {
                *o += 0.5 * bv;
            }
        }
        out
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
