//! Dantzig selector as a linear program.
//!
//! ```text
//! minimize |α|₁  subject to  |D^{−1/2} Σ̂ α − D^{−1/2} b|_∞ ≤ λ
//! ```
//!
//! With `α = u − v`, `u, v ≥ 0`, this is an LP in `2m` variables with `2m`
//! inequality rows, solved by a dense two-phase tableau simplex using Bland's
//! rule. The final basis is re-solved by LU so the returned point is not
//! carrying accumulated tableau round-off.

use nalgebra::{DMatrix, DVector};

use super::SubProblem;
use crate::error::{Error, Result};

/// Pivot cap across both phases.
pub const MAX_PIVOTS: usize = 1_000_000;

const COST_EPS: f64 = 1e-11;
const PIVOT_EPS: f64 = 1e-11;

/// `minimize cᵀx` subject to `A x ≤ h`, `x ≥ 0`.
pub fn minimize_leq(a: &DMatrix<f64>, h: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let rows = a.nrows();
    let nx = a.ncols();
    assert_eq!(h.len(), rows);
    assert_eq!(c.len(), nx);
    let negative: Vec<usize> = (0..rows).filter(|&i| h[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = nx + rows + n_art;
    let rhs = cols;

    let mut t = vec![vec![0.0; cols + 1]; rows];
    let mut basis = vec![0usize; rows];
    let mut art = 0;
    for i in 0..rows {
        let sign = if h[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nx {
            t[i][j] = sign * a[(i, j)];
        }
        t[i][nx + i] = sign;
        t[i][rhs] = sign * h[i];
        if sign < 0.0 {
            t[i][nx + rows + art] = 1.0;
            basis[i] = nx + rows + art;
            art += 1;
        } else {
            basis[i] = nx + i;
        }
    }

    let mut tab = Tableau {
        t,
        basis,
        obj: vec![0.0; cols + 1],
        pivots: 0,
    };

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[nx + rows..].iter_mut().for_each(|v| *v = 1.0);
        tab.set_objective(&cost);
        tab.run(cols)?;
        let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if -tab.obj[rhs] > 1e-9 * scale {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..rows {
            if tab.basis[r] >= nx + rows {
                if let Some(j) = (0..nx + rows).find(|&j| tab.t[r][j].abs() > 1e-9) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..nx].copy_from_slice(c);
    tab.set_objective(&cost);
    tab.run(nx + rows)?;

    let mut x = vec![0.0; nx];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < nx {
            x[b] = tab.t[r][rhs].max(0.0);
        }
    }
    if let Some(refined) = refine(a, h, &tab.basis, nx) {
        x = refined;
    }
    Ok(x)
}

/// Re-solves `[A I] z = h` restricted to the final basis.
fn refine(a: &DMatrix<f64>, h: &[f64], basis: &[usize], nx: usize) -> Option<Vec<f64>> {
    let rows = a.nrows();
    if basis.iter().any(|&b| b >= nx + rows) {
        return None;
    }
    let bmat = DMatrix::from_fn(rows, rows, |i, k| {
        let j = basis[k];
        if j < nx {
            a[(i, j)]
        } else if j - nx == i {
            1.0
        } else {
            0.0
        }
    });
    let z = bmat.lu().solve(&DVector::from_column_slice(h))?;
    if z.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return None;
    }
    let mut x = vec![0.0; nx];
    for (k, &j) in basis.iter().enumerate() {
        if j < nx {
            x[j] = z[k].max(0.0);
        }
    }
    Some(x)
}

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced costs; the last entry is minus the objective value.
    obj: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn set_objective(&mut self, cost: &[f64]) {
        let width = self.obj.len();
        self.obj[..cost.len()].copy_from_slice(cost);
        self.obj[cost.len()..].iter_mut().for_each(|v| *v = 0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = if b < cost.len() { cost[b] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..width {
                    self.obj[j] -= cb * self.t[r][j];
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let width = self.obj.len();
        let p = self.t[r][col];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for j in 0..width {
                        row[j] -= f * pivot_row[j];
                    }
                    row[col] = 0.0;
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for j in 0..width {
                self.obj[j] -= f * pivot_row[j];
            }
            self.obj[col] = 0.0;
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Bland's rule over the first `allowed` columns.
    fn run(&mut self, allowed: usize) -> Result<()> {
        let rhs = self.obj.len() - 1;
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(Error::NoConvergence("dantzig simplex"));
            }
            let Some(col) = (0..allowed).find(|&j| self.obj[j] < -COST_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_EPS {
                    let ratio = row[rhs].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Domain("linear program is unbounded".into()));
            };
            self.pivot(r, col);
        }
    }
}

/// Solves `minimize |α|₁` subject to `|Mα − r|_∞ ≤ λ`.
pub fn solve_linf_constrained(m: &DMatrix<f64>, r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let k = r.len();
    if r.iter().all(|v| v.abs() <= lambda) {
        return Ok(vec![0.0; k]);
    }
    let a = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let sign_row = if i < k { 1.0 } else { -1.0 };
        let sign_col = if j < k { 1.0 } else { -1.0 };
        sign_row * sign_col * m[(i % k, j % k)]
    });
    let h: Vec<f64> = (0..2 * k)
        .map(|i| if i < k { r[i] + lambda } else { lambda - r[i - k] })
        .collect();
    let x = minimize_leq(&a, &h, &vec![1.0; 2 * k])?;
    Ok((0..k).map(|j| x[j] - x[k + j]).collect())
}

/// `D^{−1/2} Σ̂` and `D^{−1/2} b` for a nodewise problem.
pub fn scaled_system(sp: &SubProblem) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if let Some(j) = sp.d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroVariance { column: j });
    }
    let s: Vec<f64> = sp.d.iter().map(|v| v.sqrt()).collect();
    let k = s.len();
    let m = DMatrix::from_fn(k, k, |i, j| sp.gram[(i, j)] / s[i]);
    let r = sp.b.iter().zip(&s).map(|(b, s)| b / s).collect();
    Ok((m, r))
}

pub(super) fn solve_nodewise(sp: &SubProblem, lambda: f64) -> Result<Vec<f64>> {
    let (m, r) = scaled_system(sp)?;
    solve_linf_constrained(&m, &r, lambda)
}

/// `|Mα − r|_∞`.
pub fn constraint_residual(m: &DMatrix<f64>, r: &[f64], alpha: &[f64]) -> f64 {
    (0..r.len())
        .map(|i| {
            let s: f64 = (0..alpha.len()).map(|j| m[(i, j)] * alpha[j]).sum();
            (s - r[i]).abs()
        })
        .fold(0.0, f64::max)
}
