//! Pairwise tests of `H₀: Cor(X_s, X_t) = 0` between two regions.
//!
//! Test I takes the largest squared cross correlation of the raw components,
//! Test II the same statistic on nodewise-regression residuals, and Test III a
//! Fisher z-test on the correlation of the two first principal components.
//! Tests I and II share the corrected maximum
//!
//! ```text
//! T = n · max_{i,j} ρ̂²_ij − 2 log d + log log d,   d = q_s q_t,
//! ```
//!
//! compared against the Gumbel quantile from [`crate::null_dist`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, SymmetricMatrix};
use crate::null_dist::{gumbel_quantile, gumbel_sf, normal_cdf, normal_quantile};
use crate::panel::{ComponentPanel, RegionLayout};
use crate::sparse::{NodewiseDesign, Solver};

/// Fisher z statistics are clamped to `±FISHER_Z_CLAMP` so that perfectly
/// correlated scores still produce a finite value.
pub const FISHER_Z_CLAMP: f64 = 38.0;

/// Which test to run on a region pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "lowercase")]
pub enum TestMethod {
    /// Test I: marginal max correlation.
    Test1,
    /// Test II: max correlation of nodewise residuals.
    Test2 { solver: Solver, delta: f64 },
    /// Test III: Fisher z on first principal components.
    Test3,
}

impl TestMethod {
    /// Test II with the solver's default `δ`.
    pub fn residual(solver: Solver) -> Self {
        TestMethod::Test2 {
            solver,
            delta: solver.default_delta(),
        }
    }

    /// `1`, `2` or `3`.
    pub fn number(&self) -> u8 {
        match self {
            TestMethod::Test1 => 1,
            TestMethod::Test2 { .. } => 2,
            TestMethod::Test3 => 3,
        }
    }

    /// Whether the null law is the Gumbel limit (Tests I and II).
    pub fn is_extreme_value(&self) -> bool {
        !matches!(self, TestMethod::Test3)
    }
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestMethod::Test1 => f.write_str("test1"),
            TestMethod::Test2 { solver, delta } => write!(f, "test2[{solver},{delta}]"),
            TestMethod::Test3 => f.write_str("test3"),
        }
    }
}

/// Result of one pairwise test.
///
/// For Tests I and II `reject == (statistic > threshold)` and
/// `p_value = 1 − F(statistic)`. For Test III the statistic is the signed
/// Fisher z value `atanh ρ̂`, the threshold is `z_{α/2}/√(n − 3)`, and
/// `reject == (|statistic| > threshold)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// Zero-based region indices, `s < t` when produced by a scan.
    pub pair: (usize, usize),
    pub statistic: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub reject: bool,
    pub method: TestMethod,
    pub d_st: usize,
    /// Component pair attaining the maximum; ties go to the smallest `(i, j)`.
    pub argmax: Option<(usize, usize)>,
}

/// A region reduced to what a test needs: centered columns scaled to unit
/// Euclidean norm, so cross products are correlations.
#[derive(Debug, Clone)]
pub struct PreparedRegion {
    unit: DMatrix<f64>,
    q: usize,
}

impl PreparedRegion {
    pub fn n(&self) -> usize {
        self.unit.nrows()
    }

    /// Number of original components, which fixes `d_st` even for Test III.
    pub fn q(&self) -> usize {
        self.q
    }
}

fn centered(panel: &ComponentPanel) -> DMatrix<f64> {
    let means: Vec<f64> = (0..panel.q()).map(|j| panel.mean(j)).collect();
    DMatrix::from_fn(panel.n(), panel.q(), |r, c| panel.data()[(r, c)] - means[c])
}

/// Scales already-centered columns to unit norm.
fn unit_columns(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let ss: f64 = col.iter().map(|v| v * v).sum();
        if !(ss > 0.0) {
            return Err(Error::ZeroVariance { column: j });
        }
        col /= ss.sqrt();
    }
    Ok(m)
}

/// Centered scores on the leading eigenvector of the sample covariance, with
/// the loading signed so its largest-magnitude entry is positive.
pub fn first_principal_scores(panel: &ComponentPanel) -> Result<Vec<f64>> {
    let c = centered(panel);
    if panel.q() == 1 {
        return Ok(c.column(0).iter().copied().collect());
    }
    let cov = c.tr_mul(&c) / panel.n() as f64;
    let eig = symmetric_eigen(&SymmetricMatrix::from_lower(cov))?;
    if !(eig.values[0] > 0.0) {
        return Err(Error::ZeroVariance { column: 0 });
    }
    let mut v = eig.vectors.column(0).into_owned();
    let lead = v.iamax();
    if v[lead] < 0.0 {
        v.neg_mut();
    }
    Ok((&c * v).iter().copied().collect())
}

/// Reduces a region for `method`. Test II fits the nodewise regressions here,
/// once per region.
pub fn prepare(panel: &ComponentPanel, method: TestMethod) -> Result<PreparedRegion> {
    let unit = match method {
        TestMethod::Test1 => unit_columns(centered(panel))?,
        TestMethod::Test2 { solver, delta } => {
            // Residual columns are centered by construction.
            let res = NodewiseDesign::new(panel)?.residual_panel(solver, delta)?;
            unit_columns(res.into_inner())?
        }
        TestMethod::Test3 => {
            let s = first_principal_scores(panel)?;
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            unit_columns(DMatrix::from_iterator(s.len(), 1, s.iter().map(|v| v - mean)))?
        }
    };
    Ok(PreparedRegion { unit, q: panel.q() })
}

/// `n·m − 2 log d + log log d` for a maximum squared correlation `m`.
pub fn corrected_max(max_sq: f64, n: usize, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "need q_s·q_t ≥ 2 for the log log correction, got {d}"
        )));
    }
    let d = d as f64;
    Ok(n as f64 * max_sq - 2.0 * d.ln() + d.ln().ln())
}

/// Largest squared entry of a correlation matrix and its first position in
/// row-major order.
pub fn max_squared(corr: &DMatrix<f64>) -> (f64, (usize, usize)) {
    let mut best = f64::NEG_INFINITY;
    let mut at = (0, 0);
    for i in 0..corr.nrows() {
        for j in 0..corr.ncols() {
            let r = corr[(i, j)].clamp(-1.0, 1.0);
            if r * r > best {
                best = r * r;
                at = (i, j);
            }
        }
    }
    (best, at)
}

/// Runs `method` on two prepared regions.
pub fn test_prepared(
    a: &PreparedRegion,
    b: &PreparedRegion,
    pair: (usize, usize),
    alpha: f64,
    method: TestMethod,
) -> Result<TestOutcome> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "panels have {} and {} scans",
            a.n(),
            b.n()
        )));
    }
    let n = a.n();
    let d_st = a.q * b.q;
    let corr = a.unit.tr_mul(&b.unit);
    match method {
        TestMethod::Test1 | TestMethod::Test2 { .. } => {
            let threshold = gumbel_quantile(alpha)?;
            let (m, at) = max_squared(&corr);
            let statistic = corrected_max(m, n, d_st)?;
            Ok(TestOutcome {
                pair,
                statistic,
                p_value: gumbel_sf(statistic),
                threshold,
                reject: statistic > threshold,
                method,
                d_st,
                argmax: Some(at),
            })
        }
        TestMethod::Test3 => {
            if n < 4 {
                return Err(Error::Domain(format!("Fisher z needs n ≥ 4, got {n}")));
            }
            let root = (n as f64 - 3.0).sqrt();
            let threshold = normal_quantile(1.0 - alpha / 2.0)? / root;
            let rho = corr[(0, 0)].clamp(-1.0, 1.0);
            let statistic = rho.atanh().clamp(-FISHER_Z_CLAMP, FISHER_Z_CLAMP);
            Ok(TestOutcome {
                pair,
                statistic,
                p_value: (2.0 * normal_cdf(-root * statistic.abs())).min(1.0),
                threshold,
                reject: statistic.abs() > threshold,
                method,
                d_st,
                argmax: None,
            })
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level {alpha} outside (0, 1)")))
    }
}

fn run_pair(a: &ComponentPanel, b: &ComponentPanel, alpha: f64, method: TestMethod) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "panels have {} and {} scans",
            a.n(),
            b.n()
        )));
    }
    if method.is_extreme_value() && a.q() * b.q() < 2 {
        corrected_max(0.0, a.n(), a.q() * b.q())?;
    }
    test_prepared(&prepare(a, method)?, &prepare(b, method)?, (0, 1), alpha, method)
}

/// Test I on two regions.
pub fn test1(a: &ComponentPanel, b: &ComponentPanel, alpha: f64) -> Result<TestOutcome> {
    run_pair(a, b, alpha, TestMethod::Test1)
}

/// Test II on two regions with nodewise fits tuned by `δ`.
pub fn test2(a: &ComponentPanel, b: &ComponentPanel, alpha: f64, solver: Solver, delta: f64) -> Result<TestOutcome> {
    run_pair(a, b, alpha, TestMethod::Test2 { solver, delta })
}

/// Test III on two regions.
pub fn test3(a: &ComponentPanel, b: &ComponentPanel, alpha: f64) -> Result<TestOutcome> {
    run_pair(a, b, alpha, TestMethod::Test3)
}

/// All pairs `s < t` in the order `(0,1), (0,2), …, (p−2,p−1)`.
pub fn region_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|s| (s + 1..p).map(move |t| (s, t))).collect()
}

/// Tests every region pair at the per-pair level `alpha`. Each region is
/// prepared once and shared by all pairs it takes part in.
pub fn pairwise_scan(
    layout: &RegionLayout,
    panels: &[ComponentPanel],
    alpha: f64,
    method: TestMethod,
) -> Result<Vec<TestOutcome>> {
    check_alpha(alpha)?;
    if panels.len() != layout.p() {
        return Err(Error::LayoutMismatch(format!(
            "layout has {} regions but {} panels were given",
            layout.p(),
            panels.len()
        )));
    }
    for (s, (panel, &w)) in panels.iter().zip(layout.widths()).enumerate() {
        if panel.q() != w {
            return Err(Error::LayoutMismatch(format!(
                "region {} has width {w} in the layout but {} columns",
                layout.names()[s],
                panel.q()
            )));
        }
    }
    let prepared: Vec<PreparedRegion> = panels.par_iter().map(|p| prepare(p, method)).collect::<Result<_>>()?;
    scan_prepared(&prepared, alpha, method)
}

/// [`pairwise_scan`] on regions that are already prepared.
pub fn scan_prepared(prepared: &[PreparedRegion], alpha: f64, method: TestMethod) -> Result<Vec<TestOutcome>> {
    region_pairs(prepared.len())
        .into_par_iter()
        .map(|(s, t)| test_prepared(&prepared[s], &prepared[t], (s, t), alpha, method))
        .collect()
}
