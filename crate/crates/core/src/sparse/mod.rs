//! Nodewise sparse regression within a region.
//!
//! Each component `i` of a region is regressed on the remaining components
//! with either the Lasso or the Dantzig selector, both tuned by
//! `λ_i(δ) = δ·(σ̂_ii · log q / n)^{1/2}`. The residuals of these fits feed the
//! residual max-correlation test.

pub mod dantzig;
pub mod lasso;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::ComponentPanel;

/// Estimator used for the nodewise regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Lasso,
    Dantzig,
}

impl Solver {
    /// `δ = 2.02` for the Lasso and `δ = 2` for the Dantzig selector.
    pub fn default_delta(self) -> f64 {
        match self {
            Solver::Lasso => 2.02,
            Solver::Dantzig => 2.0,
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Lasso => "lasso",
            Solver::Dantzig => "dantzig",
        })
    }
}

/// One fitted nodewise regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseFit {
    /// Index of the response column within the region.
    pub component: usize,
    /// Coefficients on the other columns, in column order with `component`
    /// skipped.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub lambda: f64,
    pub method: Solver,
}

/// Moments of a panel shared by every nodewise fit on it.
#[derive(Debug, Clone)]
pub struct NodewiseDesign {
    centered: DMatrix<f64>,
    means: Vec<f64>,
    /// `1/n` sample covariance of all columns.
    cov: DMatrix<f64>,
}

/// The regression of one column on the rest, in covariance form.
#[derive(Debug, Clone)]
pub struct SubProblem {
    /// `Σ̂_{−i,−i}`.
    pub gram: DMatrix<f64>,
    /// Covariance between the other columns and column `i`.
    pub b: Vec<f64>,
    /// Diagonal of `gram`.
    pub d: Vec<f64>,
    pub sigma_ii: f64,
}

impl NodewiseDesign {
    pub fn new(panel: &ComponentPanel) -> Result<Self> {
        let n = panel.n();
        let q = panel.q();
        let means: Vec<f64> = (0..q).map(|j| panel.mean(j)).collect();
        let centered = DMatrix::from_fn(n, q, |r, c| panel.data()[(r, c)] - means[c]);
        let cov = centered.tr_mul(&centered) / n as f64;
        for j in 0..q {
            if !(cov[(j, j)] > 0.0) {
                return Err(Error::ZeroVariance { column: j });
            }
        }
        Ok(Self { centered, means, cov })
    }

    pub fn n(&self) -> usize {
        self.centered.nrows()
    }

    pub fn q(&self) -> usize {
        self.centered.ncols()
    }

    fn others(&self, i: usize) -> Vec<usize> {
        (0..self.q()).filter(|&j| j != i).collect()
    }

    pub fn sub_problem(&self, i: usize) -> SubProblem {
        let idx = self.others(i);
        let m = idx.len();
        let gram = DMatrix::from_fn(m, m, |r, c| self.cov[(idx[r], idx[c])]);
        let b = idx.iter().map(|&j| self.cov[(j, i)]).collect();
        let d = idx.iter().map(|&j| self.cov[(j, j)]).collect();
        SubProblem {
            gram,
            b,
            d,
            sigma_ii: self.cov[(i, i)],
        }
    }

    /// `λ_i(δ)` for column `i`.
    pub fn lambda(&self, i: usize, delta: f64) -> Result<f64> {
        lambda_rule(self.cov[(i, i)], self.q(), self.n(), delta)
    }

    /// Fits column `i` at an explicit penalty level.
    pub fn fit_with_lambda(&self, i: usize, lambda: f64, method: Solver) -> Result<NodewiseFit> {
        if i >= self.q() {
            return Err(Error::Domain(format!("column {i} out of range")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("negative penalty {lambda}")));
        }
        let sp = self.sub_problem(i);
        let beta = match method {
            Solver::Lasso => lasso::solve_nodewise(&sp, lambda)?,
            Solver::Dantzig => dantzig::solve_nodewise(&sp, lambda)?,
        };
        Ok(self.assemble(i, beta, lambda, method))
    }

    pub fn fit(&self, i: usize, delta: f64, method: Solver) -> Result<NodewiseFit> {
        let lambda = self.lambda(i, delta)?;
        self.fit_with_lambda(i, lambda, method)
    }

    fn assemble(&self, i: usize, beta: Vec<f64>, lambda: f64, method: Solver) -> NodewiseFit {
        let idx = self.others(i);
        let n = self.n();
        let mut residuals: Vec<f64> = self.centered.column(i).iter().copied().collect();
        let mut intercept = self.means[i];
        for (&j, &bj) in idx.iter().zip(&beta) {
            if bj != 0.0 {
                let col = self.centered.column(j);
                for k in 0..n {
                    residuals[k] -= col[k] * bj;
                }
                intercept -= self.means[j] * bj;
            }
        }
        NodewiseFit {
            component: i,
            beta,
            intercept,
            residuals,
            lambda,
            method,
        }
    }

    /// Residual panel: column `i` holds the residuals of regressing column `i`
    /// on the others. A single-column region yields its centered column.
    pub fn residual_panel(&self, method: Solver, delta: f64) -> Result<ComponentPanel> {
        if self.q() == 1 {
            return ComponentPanel::new(self.centered.clone());
        }
        let fits: Vec<NodewiseFit> = (0..self.q())
            .into_par_iter()
            .map(|i| self.fit(i, delta, method))
            .collect::<Result<_>>()?;
        let n = self.n();
        ComponentPanel::new(DMatrix::from_fn(n, self.q(), |r, c| fits[c].residuals[r]))
    }
}

fn lambda_rule(sigma_ii: f64, q: usize, n: usize, delta: f64) -> Result<f64> {
    if q < 2 {
        return Err(Error::Domain(format!(
            "tuning rule needs at least two components, got {q}"
        )));
    }
    if !(sigma_ii > 0.0) {
        return Err(Error::ZeroVariance { column: 0 });
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("negative delta {delta}")));
    }
    Ok(delta * (sigma_ii * (q as f64).ln() / n as f64).sqrt())
}

/// `λ_i(δ) = δ·(σ̂_ii · log q / n)^{1/2}` with the `1/n` variance of column `i`.
pub fn tuning_lambda(panel: &ComponentPanel, i: usize, delta: f64) -> Result<f64> {
    if i >= panel.q() {
        return Err(Error::Domain(format!("column {i} out of range")));
    }
    let v = panel.variance(i);
    if !(v > 0.0) {
        return Err(Error::ZeroVariance { column: i });
    }
    lambda_rule(v, panel.q(), panel.n(), delta)
}

pub fn lasso_fit(panel: &ComponentPanel, i: usize, delta: f64) -> Result<NodewiseFit> {
    NodewiseDesign::new(panel)?.fit(i, delta, Solver::Lasso)
}

pub fn dantzig_fit(panel: &ComponentPanel, i: usize, delta: f64) -> Result<NodewiseFit> {
    NodewiseDesign::new(panel)?.fit(i, delta, Solver::Dantzig)
}

pub fn nodewise_residual_panel(panel: &ComponentPanel, method: Solver, delta: f64) -> Result<ComponentPanel> {
    NodewiseDesign::new(panel)?.residual_panel(method, delta)
}

/// Soft-thresholding operator `sign(x)·max(|x| − t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
