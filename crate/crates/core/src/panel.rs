//! Observation panels and the partition of columns into regions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of scans a panel may hold.
pub const MIN_SCANS: usize = 4;

/// An `n × q` block of observations: `n` independent scans of the `q`
/// summarized components of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPanel {
    data: DMatrix<f64>,
}

impl ComponentPanel {
    /// Wraps a matrix, checking shape and finiteness. Column variances are
    /// checked separately by [`ComponentPanel::validate`].
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < MIN_SCANS {
            return Err(Error::Domain(format!(
                "panel needs at least {MIN_SCANS} scans, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::Domain("panel has no components".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, column) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::Parse {
                row,
                column,
                message: "non-finite value".into(),
            });
        }
        Ok(Self { data })
    }

    /// Builds a panel from column vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("ragged columns".into()));
        }
        let q = columns.len();
        Self::new(DMatrix::from_fn(n, q, |r, c| columns[c][r]))
    }

    /// Builds a panel from row-major values.
    pub fn from_row_slice(n: usize, q: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * q {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n}x{q} panel",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, q, values))
    }

    /// Checks that every column has strictly positive sample variance.
    pub fn validate(self) -> Result<Self> {
        for j in 0..self.q() {
            if !(self.variance(j) > 0.0) {
                return Err(Error::ZeroVariance { column: j });
            }
        }
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn q(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub fn mean(&self, j: usize) -> f64 {
        mean(self.column(j))
    }

    /// Sample variance of column `j` with the `1/n` divisor.
    pub fn variance(&self, j: usize) -> f64 {
        let col = self.column(j);
        let m = mean(col);
        col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64
    }

    /// Multiplies column `j` by `factor`.
    pub fn scale_column(&mut self, j: usize, factor: f64) {
        self.data.column_mut(j).iter_mut().for_each(|v| *v *= factor);
    }

    /// Returns a panel holding the listed columns, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let n = self.n();
        Self::new(DMatrix::from_fn(n, columns.len(), |r, c| self.data[(r, columns[c])]))
    }

    /// Column-wise concatenation of panels sharing `n`.
    pub fn hstack(panels: &[ComponentPanel]) -> Result<Self> {
        let n = panels.first().ok_or(Error::EmptyInput("no panels to stack"))?.n();
        if panels.iter().any(|p| p.n() != n) {
            return Err(Error::DimensionMismatch("panels differ in n".into()));
        }
        let q: usize = panels.iter().map(ComponentPanel::q).sum();
        let mut out = DMatrix::zeros(n, q);
        let mut offset = 0;
        for p in panels {
            out.columns_mut(offset, p.q()).copy_from(p.data());
            offset += p.q();
        }
        Self::new(out)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Named partition of the global column index set into regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLayout {
    names: Vec<String>,
    widths: Vec<usize>,
}

impl RegionLayout {
    pub fn new(names: Vec<String>, widths: Vec<usize>) -> Result<Self> {
        if names.len() != widths.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} names for {} widths",
                names.len(),
                widths.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::EmptyInput("layout has no regions"));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(Error::LayoutMismatch(format!("region `{}` has width 0", names[i])));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::LayoutMismatch(format!("duplicate region name `{name}`")));
            }
        }
        Ok(Self { names, widths })
    }

    /// Layout with regions named `R1..Rp`.
    pub fn anonymous(widths: Vec<usize>) -> Result<Self> {
        let names = (1..=widths.len()).map(|i| format!("R{i}")).collect();
        Self::new(names, widths)
    }

    pub fn p(&self) -> usize {
        self.widths.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn total_width(&self) -> usize {
        self.widths.iter().sum()
    }

    /// First global column of each region.
    pub fn offsets(&self) -> Vec<usize> {
        self.widths
            .iter()
            .scan(0, |acc, &w| {
                let start = *acc;
                *acc += w;
                Some(start)
            })
            .collect()
    }

    /// Splits an `n × Σq` matrix into one panel per region.
    pub fn split(&self, data: &DMatrix<f64>) -> Result<Vec<ComponentPanel>> {
        if data.ncols() != self.total_width() {
            return Err(Error::LayoutMismatch(format!(
                "layout widths sum to {} but data has {} columns",
                self.total_width(),
                data.ncols()
            )));
        }
        self.offsets()
            .iter()
            .zip(&self.widths)
            .map(|(&start, &w)| ComponentPanel::new(data.columns(start, w).into_owned()))
            .collect()
    }
}
