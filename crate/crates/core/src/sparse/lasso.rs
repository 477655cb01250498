//! Lasso by cyclic coordinate descent on standardized predictors.
//!
//! With `D = diag(Σ̂_{−i,−i})`, the predictors are rescaled to unit variance
//! and the objective becomes, in covariance form,
//!
//! ```text
//! ½ σ̂_ii − cᵀα + ½ αᵀGα + λ|α|₁,   G = D^{−1/2} Σ̂ D^{−1/2},  c = D^{−1/2} b
//! ```
//!
//! The returned coefficients are `β̂ = D^{−1/2} α̂`.

use nalgebra::DMatrix;

use super::{soft_threshold, SubProblem};
use crate::error::{Error, Result};

/// Largest coordinate change at convergence.
pub const TOLERANCE: f64 = 1e-7;
/// Full-sweep cap.
pub const MAX_SWEEPS: usize = 10_000;

/// Minimizes `½ αᵀGα − cᵀα + λ|α|₁` for a Gram matrix `g` with unit diagonal.
/// Starts from zero and sweeps coordinates in order.
pub fn coordinate_descent(g: &DMatrix<f64>, c: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let m = c.len();
    let mut alpha = vec![0.0; m];
    // g_alpha = G α, kept current as coordinates move.
    let mut g_alpha = vec![0.0; m];
    for _ in 0..MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..m {
            let gjj = g[(j, j)];
            let partial = c[j] - (g_alpha[j] - gjj * alpha[j]);
            let next = soft_threshold(partial, lambda) / gjj;
            let delta = next - alpha[j];
            if delta != 0.0 {
                alpha[j] = next;
                for (k, ga) in g_alpha.iter_mut().enumerate() {
                    *ga += g[(k, j)] * delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta <= TOLERANCE {
            return Ok(alpha);
        }
    }
    Err(Error::NoConvergence("lasso coordinate descent"))
}

/// Standardized Gram matrix and correlation vector of a nodewise problem.
pub fn standardize(sp: &SubProblem) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = sp.b.len();
    if let Some(j) = sp.d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroVariance { column: j });
    }
    let s: Vec<f64> = sp.d.iter().map(|v| v.sqrt()).collect();
    let g = DMatrix::from_fn(m, m, |r, c| if r == c { 1.0 } else { sp.gram[(r, c)] / (s[r] * s[c]) });
    let c = sp.b.iter().zip(&s).map(|(b, s)| b / s).collect();
    Ok((g, c))
}

pub(super) fn solve_nodewise(sp: &SubProblem, lambda: f64) -> Result<Vec<f64>> {
    let (g, c) = standardize(sp)?;
    let alpha = coordinate_descent(&g, &c, lambda)?;
    Ok(alpha.iter().zip(&sp.d).map(|(a, d)| a / d.sqrt()).collect())
}

/// Objective value at standardized coefficients `alpha`, up to the constant
/// `½σ̂_ii`.
pub fn objective(g: &DMatrix<f64>, c: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let m = c.len();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += alpha[i] * g[(i, j)] * alpha[j];
        }
    }
    let lin: f64 = c.iter().zip(alpha).map(|(c, a)| c * a).sum();
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    0.5 * quad - lin + lambda * l1
}

/// Largest violation of the Lasso optimality conditions at `alpha`.
pub fn kkt_violation(g: &DMatrix<f64>, c: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let m = c.len();
    (0..m)
        .map(|j| {
            let grad: f64 = (0..m).map(|k| g[(j, k)] * alpha[k]).sum::<f64>() - c[j];
            if alpha[j] != 0.0 {
                (grad + lambda * alpha[j].signum()).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
