//! Power iteration on the non-failure block T̂.
//!
//! The absorbing structure pins the full matrix's dominant eigenvalue at 1,
//! so T̂'s spectrum is exactly {λ₂, λ₃, …}: a plain power iteration on the
//! block yields λ₂ without deflating the known λ₁ = 1. A single Wielandt
//! deflation step then bounds |λ₃| for the spectral-gap validity check.

use crate::error::{Error, Result};

/// Eigenvalue stabilization tolerance for the power iteration.
pub(crate) const EIG_TOL: f64 = 1e-12;
/// Iteration budget.
pub(crate) const MAX_POWER_ITER: usize = 100_000;
/// Eigenpair residual driven by the iteration, ‖φᵀT̂ − λ₂φᵀ‖₁. Well below
/// the 1e-9 the summaries promise, so the vector itself is accurate to
/// 1e-9 even through a modest spectral gap.
pub(crate) const PHI_RESIDUAL_TOL: f64 = 1e-12;

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Dominant left eigenpair of T̂ via power iteration from a uniform start.
///
/// Returns (λ, φ, residual) with φ entrywise non-negative and summing to 1.
pub(crate) fn left_dominant<F>(apply_t: F, n: usize) -> Result<(f64, Vec<f64>, f64)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut y = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut lambda_prev = f64::NAN;
    for it in 1..=MAX_POWER_ITER {
        apply_t(&y, &mut next);
        let lambda = l1(&next); // y ≥ 0 and T̂ ≥ 0, so ‖yᵀT̂‖₁ = Σ entries
        if lambda < 1e-300 {
            // every state dies immediately: any distribution is a
            // 0-eigenvector; keep the uniform start
            return Ok((0.0, y, 0.0));
        }
        for x in &mut next {
            *x /= lambda;
        }
        // residual of the normalized candidate
        let mut check = vec![0.0; n];
        apply_t(&next, &mut check);
        let lam2 = l1(&check);
        let residual: f64 = check
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - lam2 * b).abs())
            .sum();
        std::mem::swap(&mut y, &mut next);
        if (lambda - lambda_prev).abs() <= EIG_TOL && residual <= PHI_RESIDUAL_TOL {
            return Ok((lam2, y, residual));
        }
        lambda_prev = lambda;
        if it == MAX_POWER_ITER {
            return Err(Error::NonConvergence {
                method: "left power iteration",
                iterations: it,
                residual,
            });
        }
    }
    unreachable!()
}

/// Dominant right eigenpair magnitude of T̂.
pub(crate) fn right_dominant<F>(apply: F, n: usize) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut lambda_prev = f64::NAN;
    for it in 1..=MAX_POWER_ITER {
        apply(&x, &mut next);
        let lambda = l1(&next);
        if lambda < 1e-300 {
            return Ok((0.0, x));
        }
        for v in &mut next {
            *v /= lambda;
        }
        std::mem::swap(&mut x, &mut next);
        if (lambda - lambda_prev).abs() <= EIG_TOL {
            return Ok((lambda, x));
        }
        lambda_prev = lambda;
        if it == MAX_POWER_ITER {
            return Err(Error::NonConvergence {
                method: "right power iteration",
                iterations: it,
                residual: (lambda - lambda_prev).abs(),
            });
        }
    }
    unreachable!()
}

/// Magnitude bound on the remaining spectrum after removing λ₂.
///
/// Wielandt deflation with the computed right/left eigenvectors: iterate
/// B = T̂ − λ₂·x·yᵀ/(yᵀx) and report the stabilized growth ratio. This is a
/// numerical bound for the gap check, not a certified eigenvalue.
pub(crate) fn lambda3_bound<F>(
    apply: F,
    n: usize,
    lambda2: f64,
    x_right: &[f64],
    y_left: &[f64],
) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    if n <= 1 || lambda2 <= 0.0 {
        return 0.0;
    }
    let yx: f64 = y_left.iter().zip(x_right).map(|(a, b)| a * b).sum();
    if yx.abs() < 1e-300 {
        // defective pairing; no usable deflation
        return lambda2;
    }
    let apply_deflated = |v: &[f64], out: &mut [f64]| {
        apply(v, out);
        let yv: f64 = y_left.iter().zip(v).map(|(a, b)| a * b).sum();
        let scale = lambda2 * yv / yx;
        for (o, xr) in out.iter_mut().zip(x_right) {
            *o -= scale * xr;
        }
    };

    // signed start with no special alignment
    let mut v: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / n as f64)
        .collect();
    let mut next = vec![0.0; n];
    let mut ratio = 0.0;
    let mut prev_ratio = f64::NAN;
    for _ in 0..500 {
        apply_deflated(&v, &mut next);
        let norm = l1(&next);
        let vnorm = l1(&v);
        if norm < 1e-300 || vnorm < 1e-300 {
            return 0.0;
        }
        ratio = norm / vnorm;
        for x in &mut next {
            *x /= norm;
        }
        std::mem::swap(&mut v, &mut next);
        if (ratio - prev_ratio).abs() <= 1e-9 {
            break;
        }
        prev_ratio = ratio;
    }
    ratio.min(lambda2)
}
