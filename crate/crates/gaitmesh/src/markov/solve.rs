//! Linear solvers for the mean first-passage system (I − T̂)·m = 1:
//! BiCGSTAB on the implicit sparse operator, with a dense LU fallback for
//! small blocks when the iteration stalls.

use crate::error::{Error, Result};

/// Result of an iterative solve, with the achieved relative residual.
pub(crate) struct SolveReport {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BiCGSTAB for A·x = b with `apply` computing A·v.
///
/// Runs until the 2-norm residual falls below `tol_target`·‖b‖ or the
/// iteration budget is spent; returns the best iterate seen either way.
pub(crate) fn bicgstab<F>(
    apply: F,
    b: &[f64],
    tol_target: f64,
    max_iter: usize,
) -> SolveReport
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut best_x = x.clone();
    let mut best_res = norm(&r) / b_norm;
    if best_res <= tol_target {
        return SolveReport {
            x,
            relative_residual: best_res,
            iterations: 0,
        };
    }

    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            break; // breakdown; return best iterate
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho_new / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / b_norm <= tol_target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return SolveReport {
                x,
                relative_residual: norm(&s) / b_norm,
                iterations: it,
            };
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
        }
        for i in 0..n {
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / b_norm;
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= tol_target {
            return SolveReport {
                x,
                relative_residual: res,
                iterations: it,
            };
        }
        rho = rho_new;
    }

    SolveReport {
        x: best_x,
        relative_residual: best_res,
        iterations: max_iter,
    }
}

/// Dense LU solve of A·x = b where A is given row-major.
pub(crate) fn dense_solve(a_rows: Vec<Vec<f64>>, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| a_rows[i][j]);
    let rhs = nalgebra::DVector::from_column_slice(b);
    a.lu()
        .solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::NonConvergence {
            method: "dense LU",
            iterations: 0,
            residual: f64::NAN,
        })
}
