//! Principal component analysis over normalized Poincaré states.
//!
//! States are normalized per coordinate (zero mean, unit variance; constant
//! coordinates get scale 1), the covariance of the normalized cloud is
//! eigendecomposed with cyclic Jacobi rotations, and the top-k directions
//! are reported with their variance shares.

use serde::{Deserialize, Serialize};

use super::PoincareState;
use crate::error::{Error, Result};

/// PCA output: orthonormal basis, variance shares, projected states, and the
/// normalization that was applied before projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// k orthonormal basis vectors, each of the input dimension.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance captured per component, non-increasing.
    pub variance_explained: Vec<f64>,
    /// One k-vector per input state.
    pub projected: Vec<Vec<f64>>,
    /// Per-coordinate mean subtracted before projection.
    pub mean: Vec<f64>,
    /// Per-coordinate scale divided out before projection (1 for constant coordinates).
    pub scale: Vec<f64>,
}

/// Projects states onto their top-k principal directions.
///
/// Requires at least k+1 states and k ≤ dim. Component signs are fixed so
/// each component's largest-magnitude entry is positive, which keeps output
/// files deterministic.
pub fn pca_project(states: &[PoincareState], k: usize) -> Result<PcaProjection> {
    if states.is_empty() {
        return Err(Error::InvalidInput("no states to project".into()));
    }
    let dim = states[0].dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidInput(format!(
            "component count k={k} must be in 1..=dim ({dim})"
        )));
    }
    if states.len() < k + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least k+1 = {} states, got {}",
            k + 1,
            states.len()
        )));
    }
    if states.iter().any(|s| s.dim() != dim) {
        return Err(Error::InvalidInput(
            "all states must share one dimension".into(),
        ));
    }

    let n = states.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in states {
        for (m, c) in mean.iter_mut().zip(s.coords()) {
            *m += c;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for s in states {
        for ((v, c), m) in var.iter_mut().zip(s.coords()).zip(&mean) {
            let d = c - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| if v.sqrt() > 1e-15 { v.sqrt() } else { 1.0 })
        .collect();

    // Normalized data, row per state.
    let z: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            s.coords()
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((c, m), sc)| (c - m) / sc)
                .collect()
        })
        .collect();

    // Covariance of the normalized cloud (population normalization, so
    // non-constant coordinates have diagonal exactly 1).
    let mut cov = vec![vec![0.0; dim]; dim];
    for row in &z {
        for i in 0..dim {
            for j in i..dim {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }

    let (mut eigvals, mut eigvecs) = jacobi_eigen(&cov);

    // Sort descending by eigenvalue; clamp tiny negatives from roundoff.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    eigvals = order.iter().map(|&i| eigvals[i].max(0.0)).collect();
    eigvecs = order.iter().map(|&i| eigvecs[i].clone()).collect();

    let total: f64 = eigvals.iter().sum();
    let mut components = Vec::with_capacity(k);
    let mut variance_explained = Vec::with_capacity(k);
    for c in 0..k {
        let mut v = eigvecs[c].clone();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if v[pivot] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        variance_explained.push(if total > 0.0 { eigvals[c] / total } else { 0.0 });
        components.push(v);
    }

    let projected: Vec<Vec<f64>> = z
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|comp| row.iter().zip(comp).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();

    Ok(PcaProjection {
        components,
        variance_explained,
        projected,
        mean,
        scale,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues, eigenvectors) with eigenvectors as rows, unordered.
/// Rotations keep the eigenvector set orthonormal to machine precision.
fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    // v[r] accumulates the r-th eigenvector.
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let off = |m: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[i][j] * m[i][j];
            }
        }
        s
    };
    let initial = off(&m).max(1e-300);
    for _sweep in 0..100 {
        if off(&m) <= initial * 1e-28 + 1e-300 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[i][p];
                    let miq = m[i][q];
                    m[i][p] = c * mip - s * miq;
                    m[i][q] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[p][j];
                    let mqj = m[q][j];
                    m[p][j] = c * mpj - s * mqj;
                    m[q][j] = s * mpj + c * mqj;
                }
                for j in 0..n {
                    let vpj = v[p][j];
                    let vqj = v[q][j];
                    v[p][j] = c * vpj - s * vqj;
                    v[q][j] = s * vpj + c * vqj;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    (eigvals, v)
}
