//! Metastability analysis of the meshed walker: stochastic transition
//! matrix assembly and the spectral / first-passage metrics built on it.
//!
//! The failure state is absorbing at index 0, which forces λ₁ = 1 and makes
//! the non-failure block T̂ carry the rest of the spectrum. λ₂ is the
//! per-step survival probability once initial conditions are forgotten; the
//! metastable distribution φ is the dominant left eigenvector of T̂; the
//! MFPT vector solves (I − T̂)·m̂ = 1; and the system-wide MFPT is the
//! φ-weighted mean of m̂, with 1/(1−λ₂) as its spectral shortcut.

mod power;
mod solve;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DisturbanceProfile;
use crate::error::{Error, Result};
use crate::meshing::DeterministicTransitionTable;

/// Values above this report as +infinity, matching the convention that an
/// unreachable failure state has infinite MFPT.
pub const INFINITY_CUTOFF: f64 = 1e15;
/// λ₂ at least 1 − this is treated as exactly 1 (never-failing).
pub const LAMBDA_ONE_TOL: f64 = 1e-12;

/// Sparse row-major stochastic transition matrix with absorbing row 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    /// Controller index the matrix was assembled for.
    pub controller: usize,
    /// Profile id it was assembled from.
    pub profile_id: String,
}

impl StochasticMatrix {
    /// Builds from per-row (column, probability) lists, validating the
    /// stochastic-with-absorbing-failure structure.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        controller: usize,
        profile_id: String,
    ) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidInput(
                "need the failure state plus at least one state".into(),
            ));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            let mut last_col: Option<usize> = None;
            for &(j, p) in row {
                if j >= n {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: column {j} out of range"
                    )));
                }
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: probability {p} outside [0, 1]"
                    )));
                }
                if let Some(prev) = last_col {
                    if j <= prev {
                        return Err(Error::InvalidInput(format!(
                            "row {i}: columns must be strictly increasing"
                        )));
                    }
                }
                last_col = Some(j);
                if p > 0.0 {
                    col_idx.push(j as u32);
                    values.push(p);
                    sum += p;
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
            row_ptr.push(col_idx.len());
        }
        let m = Self {
            n,
            row_ptr,
            col_idx,
            values,
            controller,
            profile_id,
        };
        // absorbing failure: row 0 must be exactly e0
        let (cols, vals) = m.row(0);
        if cols != [0u32] || vals.len() != 1 || (vals[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "row 0 must be the unit vector on the failure state".into(),
            ));
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Non-failure block dimension.
    pub fn n_sub(&self) -> usize {
        self.n - 1
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// T(i, j) by binary search within the row.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// y = T̂·x over the non-failure block (x, y indexed from state 1).
    pub fn sub_matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n - 1);
        for (yi, i) in y.iter_mut().zip(1..self.n) {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= 1 {
                    acc += v * x[j as usize - 1];
                }
            }
            *yi = acc;
        }
    }

    /// y = T̂ᵀ·x over the non-failure block.
    pub fn sub_matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n - 1);
        y.fill(0.0);
        for i in 1..self.n {
            let xi = x[i - 1];
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= 1 {
                    y[j as usize - 1] += v * xi;
                }
            }
        }
    }

    /// Dense copy of the non-failure block, row-major.
    pub fn sub_dense(&self) -> Vec<Vec<f64>> {
        let m = self.n - 1;
        let mut out = vec![vec![0.0; m]; m];
        for i in 1..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= 1 {
                    out[i - 1][j as usize - 1] = v;
                }
            }
        }
        out
    }

    /// Coordinate-format (row, col, prob) triplets of stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(&j, &v)| (i, j as usize, v))
        })
    }
}

/// Builds the stochastic matrix for one controller from the deterministic
/// table and a disturbance distribution: T(i,j) = Σ_γ P(γ)·[T_det(i,ξ,γ)=j],
/// with row 0 pinned to the absorbing unit vector. Only realized successors
/// are stored.
pub fn assemble_stochastic(
    table: &DeterministicTransitionTable,
    controller: usize,
    profile: &DisturbanceProfile,
) -> Result<StochasticMatrix> {
    profile.validate()?;
    if controller >= table.n_controllers() {
        return Err(Error::InvalidInput(format!(
            "controller {controller} out of range ({} controllers)",
            table.n_controllers()
        )));
    }
    if profile.len() != table.n_disturbances() {
        return Err(Error::DimensionMismatch {
            expected: table.n_disturbances(),
            got: profile.len(),
        });
    }
    let n = table.n_states();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    rows.push(vec![(0, 1.0)]);
    for i in 1..n {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (d, &p) in profile.probabilities.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let succ = table.get(i, controller, d).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "transition table has an unset entry at ({i}, {controller}, {d}); \
                     truncated builds cannot be analyzed"
                ))
            })?;
            *acc.entry(succ).or_insert(0.0) += p;
        }
        rows.push(acc.into_iter().collect());
    }
    StochasticMatrix::from_rows(rows, controller, profile.id.clone())
}

fn default_mfpt_tol() -> f64 {
    1e-10
}
fn default_dense_threshold() -> usize {
    2000
}

/// Solver settings for the MFPT linear system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfptOptions {
    /// Accepted relative residual; the solver targets well below this.
    #[serde(default = "default_mfpt_tol")]
    pub tolerance: f64,
    /// Blocks up to this size fall back to a dense LU when BiCGSTAB stalls.
    #[serde(default = "default_dense_threshold")]
    pub dense_threshold: usize,
}

impl Default for MfptOptions {
    fn default() -> Self {
        Self {
            tolerance: default_mfpt_tol(),
            dense_threshold: default_dense_threshold(),
        }
    }
}

/// States from which failure is unreachable, plus the states that can reach
/// them with positive probability: both sets have infinite expected
/// first-passage time.
fn infinite_mfpt_states(t: &StochasticMatrix) -> Vec<bool> {
    let n = t.n();
    // reverse adjacency over positive-probability edges
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 1..n {
        let (cols, _) = t.row(i);
        for &j in cols {
            rev[j as usize].push(i as u32);
        }
    }
    // failure-reachable set: reverse BFS from state 0
    let mut reaches_failure = vec![false; n];
    reaches_failure[0] = true;
    let mut stack: Vec<u32> = rev[0].clone();
    while let Some(i) = stack.pop() {
        if reaches_failure[i as usize] {
            continue;
        }
        reaches_failure[i as usize] = true;
        stack.extend(rev[i as usize].iter().copied());
    }
    // infinite set: cannot reach failure, or can reach such a state
    let mut infinite = vec![false; n];
    let mut seeds: Vec<u32> = Vec::new();
    for i in 1..n {
        if !reaches_failure[i] {
            infinite[i] = true;
            seeds.push(i as u32);
        }
    }
    while let Some(i) = seeds.pop() {
        for &p in &rev[i as usize] {
            if p != 0 && !infinite[p as usize] {
                infinite[p as usize] = true;
                seeds.push(p);
            }
        }
    }
    infinite
}

/// Mean first-passage vector m with m[0] = 0, solving (I − T̂)·m̂ = 1 on
/// the block where failure is reachable with probability one. Entries are
/// +infinity where some trajectory never fails.
pub fn mfpt_vector(t: &StochasticMatrix) -> Result<Vec<f64>> {
    mfpt_vector_with(t, &MfptOptions::default())
}

pub fn mfpt_vector_with(t: &StochasticMatrix, opts: &MfptOptions) -> Result<Vec<f64>> {
    let n = t.n();
    let infinite = infinite_mfpt_states(t);
    let finite_idx: Vec<usize> = (1..n).filter(|&i| !infinite[i]).collect();
    let mut m = vec![f64::INFINITY; n];
    m[0] = 0.0;
    if finite_idx.is_empty() {
        return Ok(m);
    }

    // compact the finite block
    let mut compact = vec![usize::MAX; n];
    for (k, &i) in finite_idx.iter().enumerate() {
        compact[i] = k;
    }
    let nf = finite_idx.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        // out = (I − T̂_FF)·x
        for (k, &i) in finite_idx.iter().enumerate() {
            let (cols, vals) = t.row(i);
            let mut acc = x[k];
            for (&j, &v) in cols.iter().zip(vals) {
                let cj = compact[j as usize];
                if cj != usize::MAX {
                    acc -= v * x[cj];
                }
            }
            out[k] = acc;
        }
    };
    let b = vec![1.0; nf];
    let target = (opts.tolerance * 1e-3).max(1e-14);
    let report = solve::bicgstab(&apply, &b, target, 4 * nf + 200);
    let solution = if report.relative_residual <= opts.tolerance {
        report.x
    } else if nf <= opts.dense_threshold {
        // dense fallback: materialize I − T̂_FF
        let mut rows = vec![vec![0.0; nf]; nf];
        for (k, &i) in finite_idx.iter().enumerate() {
            rows[k][k] = 1.0;
            let (cols, vals) = t.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let cj = compact[j as usize];
                if cj != usize::MAX {
                    rows[k][cj] -= v;
                }
            }
        }
        solve::dense_solve(rows, &b)?
    } else {
        return Err(Error::NonConvergence {
            method: "mfpt BiCGSTAB",
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    };
    for (k, &i) in finite_idx.iter().enumerate() {
        m[i] = if solution[k] > INFINITY_CUTOFF {
            f64::INFINITY
        } else {
            solution[k]
        };
    }
    Ok(m)
}

/// Metastable distribution: dominant left eigenvector of T̂ normalized to
/// sum 1, entrywise non-negative.
pub fn metastable_distribution(t: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = t.n_sub();
    let (_, phi, _) = power::left_dominant(|x, y| t.sub_matvec_t(x, y), n)?;
    Ok(phi)
}

/// λ₂ (the per-step survival probability in the metastable regime), a
/// numerical bound on |λ₃|, and whether the spectral gap validates the
/// system-wide MFPT shortcut: (1 − λ₂) ≤ `gap_ratio`·(1 − |λ₃|).
pub fn lambda2(t: &StochasticMatrix, gap_ratio: f64) -> Result<(f64, f64, bool)> {
    let n = t.n_sub();
    let (lam_r, x_right) = power::right_dominant(|x, y| t.sub_matvec(x, y), n)?;
    let (lam_l, y_left, _) = power::left_dominant(|x, y| t.sub_matvec_t(x, y), n)?;
    // the two routes agree up to iteration tolerance; keep the left value,
    // which is residual-checked
    let lambda2 = if lam_l > 0.0 { lam_l } else { lam_r };
    let lambda3 =
        power::lambda3_bound(|x, y| t.sub_matvec(x, y), n, lambda2, &x_right, &y_left);
    let gap_ok = (1.0 - lambda2) <= gap_ratio * (1.0 - lambda3).max(0.0);
    Ok((lambda2, lambda3, gap_ok))
}

/// Eq-9-style spectral MFPT: 1/(1−λ₂), +infinity at λ₂ = 1.
pub fn mfpt_from_lambda2(lambda2: f64) -> f64 {
    if lambda2 >= 1.0 - LAMBDA_ONE_TOL {
        f64::INFINITY
    } else {
        1.0 / (1.0 - lambda2)
    }
}

/// System-wide MFPT: the φ-weighted mean of the per-state MFPTs.
/// `phi` indexes non-failure states; `m` is the full vector with m[0] = 0.
pub fn system_mfpt(phi: &[f64], m: &[f64]) -> Result<f64> {
    if phi.len() + 1 != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len().saturating_sub(1),
            got: phi.len(),
        });
    }
    let mut acc = 0.0;
    for (i, &p) in phi.iter().enumerate() {
        if p > 0.0 {
            let mi = m[i + 1];
            if mi.is_infinite() {
                return Ok(f64::INFINITY);
            }
            acc += p * mi;
        }
    }
    Ok(if acc > INFINITY_CUTOFF {
        f64::INFINITY
    } else {
        acc
    })
}

/// Probability of surviving exactly n−1 steps and failing on the n-th:
/// λ₂ⁿ⁻¹·(1−λ₂).
pub fn n_step_failure_prob(lambda2: f64, n: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda2) {
        return Err(Error::InvalidInput(format!(
            "lambda2 {lambda2} outside [0, 1]"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    Ok(lambda2.powi((n - 1) as i32) * (1.0 - lambda2))
}

/// States with next-step failure probability strictly above the threshold.
pub fn dangerous_states(t: &StochasticMatrix, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    Ok((1..t.n()).filter(|&i| t.prob(i, 0) > threshold).collect())
}

/// Default next-step failure threshold for dangerous-state extraction.
pub const DANGEROUS_DEFAULT_THRESHOLD: f64 = 0.99;

fn default_p_null() -> f64 {
    0.4
}
fn default_p_interest() -> f64 {
    0.5
}
fn default_gap_ratio() -> f64 {
    0.1
}

/// Weighting scheme for the disturbance-sensitivity sweep: the null push
/// keeps `p_null`, the disturbance of interest gets `p_interest`, and the
/// remainder splits evenly over the other pushes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepWeights {
    #[serde(default = "default_p_null")]
    pub p_null: f64,
    #[serde(default = "default_p_interest")]
    pub p_interest: f64,
}

impl Default for SweepWeights {
    fn default() -> Self {
        Self {
            p_null: default_p_null(),
            p_interest: default_p_interest(),
        }
    }
}

/// Per-disturbance system MFPT as that disturbance becomes the likely one.
///
/// For each non-null disturbance d, reassembles the stochastic matrix with
/// the sweep weighting centered on d and computes M_exact. Per-disturbance
/// failures are reported in their slot without aborting the sweep; results
/// are gathered in disturbance-index order.
pub fn sensitivity_sweep(
    table: &DeterministicTransitionTable,
    controller: usize,
    base_profile: &DisturbanceProfile,
    weights: &SweepWeights,
) -> Result<Vec<(usize, Result<f64>)>> {
    base_profile.validate()?;
    let k = base_profile.len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "sensitivity sweep needs at least one non-null disturbance".into(),
        ));
    }
    let remainder = 1.0 - weights.p_null - weights.p_interest;
    if weights.p_null < 0.0 || weights.p_interest <= 0.0 || remainder < -1e-12 {
        return Err(Error::InvalidInput(format!(
            "sweep weights (p_null {}, p_interest {}) must be non-negative and sum at most 1",
            weights.p_null, weights.p_interest
        )));
    }
    if k == 2 && remainder.abs() > 1e-12 {
        return Err(Error::InvalidInput(
            "with a single push the null and interest weights must sum to 1".into(),
        ));
    }
    let share = if k > 2 {
        remainder / (k - 2) as f64
    } else {
        0.0
    };

    let results: Vec<(usize, Result<f64>)> = (1..k)
        .into_par_iter()
        .map(|d| {
            let mut probabilities = vec![share; k];
            probabilities[0] = weights.p_null;
            probabilities[d] = weights.p_interest;
            let profile = DisturbanceProfile {
                id: format!("{}-interest-{d}", base_profile.id),
                disturbances: base_profile.disturbances.clone(),
                probabilities,
            };
            let m_sys = (|| {
                let t = assemble_stochastic(table, controller, &profile)?;
                let phi = metastable_distribution(&t)?;
                let m = mfpt_vector(&t)?;
                system_mfpt(&phi, &m)
            })();
            (d, m_sys)
        })
        .collect();
    Ok(results)
}

/// Full spectral summary of one stochastic matrix.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub lambda2: f64,
    /// Numerical magnitude bound on the remaining sub-block spectrum.
    pub lambda3_bound: f64,
    /// True when the spectral gap makes the eigenvalue MFPT trustworthy.
    pub gap_ok: bool,
    /// Metastable distribution over non-failure states, sums to 1.
    pub phi: Vec<f64>,
    /// Per-state MFPT in gait cycles, m[0] = 0.
    pub m: Vec<f64>,
    /// φ-weighted system MFPT.
    pub m_exact: f64,
    /// Spectral system MFPT, 1/(1−λ₂).
    pub m_eigen: f64,
    /// False when the deflated spectrum indicates another eigenvalue at λ₂
    /// (multiple metastable classes; φ is then one dominant class).
    pub phi_unique: bool,
}

/// Computes the whole summary with default solver settings.
pub fn spectral_summary(t: &StochasticMatrix) -> Result<SpectralSummary> {
    spectral_summary_with(t, &MfptOptions::default(), default_gap_ratio())
}

pub fn spectral_summary_with(
    t: &StochasticMatrix,
    opts: &MfptOptions,
    gap_ratio: f64,
) -> Result<SpectralSummary> {
    let (lambda2, lambda3_bound, gap_ok) = lambda2(t, gap_ratio)?;
    let phi = metastable_distribution(t)?;
    let m = mfpt_vector_with(t, opts)?;
    let m_exact = system_mfpt(&phi, &m)?;
    let m_eigen = mfpt_from_lambda2(lambda2);
    let phi_unique = lambda3_bound < lambda2 - 1e-9;
    Ok(SpectralSummary {
        lambda2,
        lambda3_bound,
        gap_ok,
        phi,
        m,
        m_exact,
        m_eigen,
        phi_unique,
    })
}

#[cfg(test)]
mod tests;
