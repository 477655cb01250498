//! Signal conditioning applied before testing: de-meaning, linear de-trending,
//! AR(1) whitening and per-region principal component summaries.
//!
//! The pipeline order is fixed: de-mean, de-trend, whiten, then PCA.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sample_covariance, symmetric_eigen, SymmetricMatrix};
use crate::panel::{mean, ComponentPanel};

/// Bound on the magnitude of an estimated AR(1) coefficient.
pub const PHI_CLIP: f64 = 0.999;

/// Default cumulative explained-variance fraction for PCA summaries.
pub const DEFAULT_PCA_FRACTION: f64 = 0.9;

fn zero_variance_check(before_ss: f64, after: &[f64], column: usize) -> Result<()> {
    let after_ss: f64 = after.iter().map(|v| v * v).sum();
    if before_ss == 0.0 || after_ss <= 1e-24 * before_ss {
        return Err(Error::ZeroVariance { column });
    }
    Ok(())
}

/// Subtracts each column's sample mean.
pub fn center(panel: &ComponentPanel) -> Result<ComponentPanel> {
    let mut out = panel.data().clone();
    for j in 0..panel.q() {
        let m = panel.mean(j);
        out.column_mut(j).iter_mut().for_each(|v| *v -= m);
        let ss: f64 = panel.column(j).iter().map(|v| v * v).sum();
        zero_variance_check(ss.max(f64::MIN_POSITIVE), out.column(j).as_slice(), j)?;
    }
    ComponentPanel::new(out)
}

/// Removes each column's mean and its least-squares linear trend in the scan
/// index.
pub fn center_and_detrend(panel: &ComponentPanel) -> Result<ComponentPanel> {
    let n = panel.n();
    let t_bar = (n as f64 - 1.0) / 2.0;
    let tt: f64 = (0..n).map(|k| (k as f64 - t_bar).powi(2)).sum();
    let mut out = panel.data().clone();
    for j in 0..panel.q() {
        let col = panel.column(j);
        let m = mean(col);
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let slope = col
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 - t_bar) * (v - m))
            .sum::<f64>()
            / tt;
        for (k, v) in out.column_mut(j).iter_mut().enumerate() {
            *v = (*v - m) - slope * (k as f64 - t_bar);
        }
        // Re-center to absorb rounding in the slope term.
        let m2 = mean(out.column(j).as_slice());
        out.column_mut(j).iter_mut().for_each(|v| *v -= m2);
        zero_variance_check(ss, out.column(j).as_slice(), j)?;
    }
    ComponentPanel::new(out)
}

/// Lag-1 sample autocorrelation of a centered series, clipped to
/// `(-PHI_CLIP, PHI_CLIP)`.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let denom: f64 = x.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
    (num / denom).clamp(-PHI_CLIP, PHI_CLIP)
}

/// Applies the AR(1) prewhitening filter with known per-column coefficients:
/// row 0 becomes `x_0 √(1 − φ²)` and row `k ≥ 1` becomes `x_k − φ x_{k−1}`.
pub fn ar1_filter(panel: &ComponentPanel, phi: &[f64]) -> Result<ComponentPanel> {
    if phi.len() != panel.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} columns",
            phi.len(),
            panel.q()
        )));
    }
    let n = panel.n();
    let mut out = DMatrix::zeros(n, panel.q());
    for (j, &f) in phi.iter().enumerate() {
        let x = panel.column(j);
        out[(0, j)] = x[0] * (1.0 - f * f).sqrt();
        for k in 1..n {
            out[(k, j)] = x[k] - f * x[k - 1];
        }
    }
    ComponentPanel::new(out)
}

/// Estimates a lag-1 coefficient per column and applies [`ar1_filter`].
/// Input columns are expected to be centered.
pub fn ar1_whiten(panel: &ComponentPanel) -> Result<(ComponentPanel, Vec<f64>)> {
    let phi: Vec<f64> = (0..panel.q()).map(|j| lag1_autocorrelation(panel.column(j))).collect();
    let out = ar1_filter(panel, &phi)?;
    for j in 0..out.q() {
        if !(out.variance(j) > 0.0) {
            return Err(Error::ZeroVariance { column: j });
        }
    }
    Ok((out, phi))
}

/// Result of summarizing a region by its leading principal components.
#[derive(Debug, Clone)]
pub struct PcaSummary {
    /// Scores on the selected components (`n × k_selected`).
    pub components: ComponentPanel,
    /// Loading vectors as columns (`q × k_selected`).
    pub loadings: DMatrix<f64>,
    /// Explained fraction of every eigen-direction, non-increasing.
    pub explained_variance_fractions: Vec<f64>,
    pub k_selected: usize,
}

/// Projects a centered panel onto the fewest leading eigenvectors of its
/// covariance whose cumulative explained fraction reaches `var_fraction`.
/// Each loading vector is signed so its largest-magnitude entry is positive.
pub fn pca_summarize(panel: &ComponentPanel, var_fraction: f64) -> Result<PcaSummary> {
    if !(var_fraction > 0.0 && var_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "variance fraction {var_fraction} outside (0, 1]"
        )));
    }
    let cov = SymmetricMatrix::from_lower(sample_covariance(panel, panel)?);
    let eig = symmetric_eigen(&cov)?;
    let values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance { column: 0 });
    }
    let fractions: Vec<f64> = values.iter().map(|v| v / total).collect();
    let mut cumulative = 0.0;
    let mut k_selected = fractions.len();
    for (k, f) in fractions.iter().enumerate() {
        cumulative += f;
        if cumulative >= var_fraction - 1e-12 {
            k_selected = k + 1;
            break;
        }
    }

    let q = panel.q();
    let mut loadings = eig.vectors.columns(0, k_selected).into_owned();
    for c in 0..k_selected {
        let mut best = 0;
        for r in 1..q {
            if loadings[(r, c)].abs() > loadings[(best, c)].abs() {
                best = r;
            }
        }
        if loadings[(best, c)] < 0.0 {
            loadings.column_mut(c).neg_mut();
        }
    }
    let scores = panel.data() * &loadings;
    Ok(PcaSummary {
        components: ComponentPanel::new(scores)?,
        loadings,
        explained_variance_fractions: fractions,
        k_selected,
    })
}

/// Which conditioning steps [`preprocess`] applies. De-meaning always runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub detrend: bool,
    pub whiten: bool,
    /// Cumulative variance fraction for a per-region PCA summary.
    pub pca_fraction: Option<f64>,
}

pub fn preprocess(panels: &[ComponentPanel], opts: &PreprocessOptions) -> Result<Vec<ComponentPanel>> {
    panels
        .iter()
        .map(|p| {
            let mut out = if opts.detrend {
                center_and_detrend(p)?
            } else {
                center(p)?
            };
            if opts.whiten {
                out = ar1_whiten(&out)?.0;
                out = center(&out)?;
            }
            if let Some(frac) = opts.pca_fraction {
                out = pca_summarize(&out, frac)?.components;
            }
            Ok(out)
        })
        .collect()
}
