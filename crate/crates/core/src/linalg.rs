//! Dense numerical primitives: sample moments, Cholesky, symmetric eigen.
//!
//! All moments use the `1/n` divisor.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::panel::ComponentPanel;

/// Iteration cap handed to the symmetric QR eigensolver.
pub const EIGEN_MAX_ITER: usize = 10_000;

/// A square matrix whose entries satisfy `m[(i, j)] == m[(j, i)]` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m`, requiring exact symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        for j in 0..m.ncols() {
            for i in j + 1..m.nrows() {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::Domain(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m))
    }

    /// Copies the lower triangle of `m` onto its upper triangle.
    pub fn from_lower(mut m: DMatrix<f64>) -> Self {
        assert!(m.is_square());
        m.fill_upper_triangle_with_lower_triangle();
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets `(i, j)` and `(j, i)` together.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    /// Adds `shift` to every diagonal entry.
    pub fn add_ridge(&mut self, shift: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)] += shift;
        }
    }

    /// `D^{1/2} M D^{1/2}` for a diagonal `D` given by `d`.
    pub fn scale_by_sqrt_diag(&self, d: &[f64]) -> Self {
        let s: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
        let m = DMatrix::from_fn(self.dim(), self.dim(), |i, j| s[i] * self.0[(i, j)] * s[j]);
        Self(m)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn centered_columns(p: &ComponentPanel) -> Vec<Vec<f64>> {
    (0..p.q())
        .map(|j| {
            let col = p.column(j);
            let m = crate::panel::mean(col);
            col.iter().map(|v| v - m).collect()
        })
        .collect()
}

/// Cross covariance with entry `(i, j) = (1/n) Σ_k (a_ki − ā_i)(b_kj − b̄_j)`.
pub fn sample_covariance(a: &ComponentPanel, b: &ComponentPanel) -> Result<DMatrix<f64>> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "panels have {} and {} scans",
            a.n(),
            b.n()
        )));
    }
    let n = a.n() as f64;
    let ca = centered_columns(a);
    let cb = centered_columns(b);
    Ok(DMatrix::from_fn(a.q(), b.q(), |i, j| dot(&ca[i], &cb[j]) / n))
}

/// Pearson correlation between every column of `a` and every column of `b`.
pub fn sample_correlation(a: &ComponentPanel, b: &ComponentPanel) -> Result<DMatrix<f64>> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!(
            "panels have {} and {} scans",
            a.n(),
            b.n()
        )));
    }
    let n = a.n() as f64;
    let ca = centered_columns(a);
    let cb = centered_columns(b);
    let va = variances(&ca, n)?;
    let vb = variances(&cb, n)?;
    Ok(DMatrix::from_fn(a.q(), b.q(), |i, j| {
        let r = (dot(&ca[i], &cb[j]) / n) / (va[i] * vb[j]).sqrt();
        r.clamp(-1.0, 1.0)
    }))
}

fn variances(cols: &[Vec<f64>], n: f64) -> Result<Vec<f64>> {
    cols.iter()
        .enumerate()
        .map(|(j, c)| {
            let v = dot(c, c) / n;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::ZeroVariance { column: j })
            }
        })
        .collect()
}

/// Lower-triangular `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    let a = m.matrix();
    let d = m.dim();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Eigenpairs of a symmetric matrix, values in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let eig = SymmetricEigen::try_new(m.matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    let mut order: Vec<usize> = (0..m.dim()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.dim(), m.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Smallest eigenvalue.
pub fn min_eigenvalue(m: &SymmetricMatrix) -> Result<f64> {
    let eig = SymmetricEigen::try_new(m.matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    Ok(eig.eigenvalues.min())
}

/// Inverse by LU with partial pivoting.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(rng: &mut ChaCha8Rng, n: usize, q: usize) -> ComponentPanel {
        let v: Vec<f64> = (0..n * q).map(|_| rng.random_range(-2.0..2.0)).collect();
        ComponentPanel::from_row_slice(n, q, &v).unwrap()
    }

    #[test]
    fn covariance_uses_n_divisor() {
        let a = ComponentPanel::from_columns(&[vec![1.0, -1.0, 1.0, -1.0]]).unwrap();
        assert_eq!(sample_covariance(&a, &a).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn covariance_of_copied_column_equals_variances() {
        let col = vec![0.3, 1.2, -0.7, 2.2, 0.1];
        let a = ComponentPanel::from_columns(std::slice::from_ref(&col)).unwrap();
        let b = ComponentPanel::from_columns(&[vec![9.0, 8.0, 1.0, 0.0, 3.0], col]).unwrap();
        let c = sample_covariance(&a, &b).unwrap();
        assert_relative_eq!(c[(0, 1)], a.variance(0), epsilon = 1e-14);
        assert_relative_eq!(c[(0, 1)], b.variance(1), epsilon = 1e-14);
    }

    #[test]
    fn covariance_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_panel(&mut rng, 5, 2);
        let b = random_panel(&mut rng, 5, 3);
        let c = sample_covariance(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for k in 0..5 {
                    ma += a.data()[(k, i)];
                    mb += b.data()[(k, j)];
                }
                ma /= 5.0;
                mb /= 5.0;
                let mut s = 0.0;
                for k in 0..5 {
                    s += (a.data()[(k, i)] - ma) * (b.data()[(k, j)] - mb);
                }
                assert_relative_eq!(c[(i, j)], s / 5.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn covariance_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_panel(&mut rng, 5, 2);
        let b = random_panel(&mut rng, 6, 2);
        assert!(matches!(sample_covariance(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn correlation_of_copies_and_negations() {
        let col = vec![0.3, 1.2, -0.7, 2.2];
        let neg: Vec<f64> = col.iter().map(|v| -v).collect();
        let a = ComponentPanel::from_columns(std::slice::from_ref(&col)).unwrap();
        let b = ComponentPanel::from_columns(&[col, neg]).unwrap();
        let r = sample_correlation(&a, &b).unwrap();
        assert_relative_eq!(r[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 1)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn correlation_matches_covariance_then_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_panel(&mut rng, 6, 2);
        let b = random_panel(&mut rng, 6, 2);
        let c = sample_covariance(&a, &b).unwrap();
        let r = sample_correlation(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = c[(i, j)] / (a.variance(i) * b.variance(j)).sqrt();
                assert!((r[(i, j)] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn self_correlation_has_exact_unit_diagonal_and_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_panel(&mut rng, 9, 5);
            let r = sample_correlation(&a, &a).unwrap();
            for i in 0..5 {
                assert_eq!(r[(i, i)], 1.0);
            }
            let sym = SymmetricMatrix::new(r).unwrap();
            assert!(min_eigenvalue(&sym).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn correlation_zero_variance() {
        let a = ComponentPanel::from_columns(&[vec![1.0; 4]]).unwrap();
        let b = ComponentPanel::from_columns(&[vec![1.0, 2.0, 3.0, 5.0]]).unwrap();
        assert_eq!(
            sample_correlation(&a, &b).unwrap_err(),
            Error::ZeroVariance { column: 0 }
        );
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));

        let m = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let l = cholesky(&m).unwrap();
        assert_relative_eq!(l[(0, 0)], 2.0);
        assert_relative_eq!(l[(1, 0)], 1.0);
        assert_relative_eq!(l[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);

        let bad = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert_eq!(cholesky(&bad).unwrap_err(), Error::NotPositiveDefinite { pivot: 1 });
    }

    #[test]
    fn cholesky_reconstructs_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [1, 3, 8, 20] {
            let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let m = SymmetricMatrix::from_lower(&g * g.transpose() + DMatrix::identity(d, d) * 0.1);
            let l = cholesky(&m).unwrap();
            let back = &l * l.transpose();
            let rel = (&back - m.matrix()).norm() / m.matrix().norm();
            assert!(rel <= 1e-10, "relative error {rel}");
        }
    }

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let e = symmetric_eigen(&SymmetricMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_relative_eq!(e.vectors[(0, 0)].abs(), 1.0);
        assert_relative_eq!(e.vectors[(2, 1)].abs(), 1.0);
        assert_relative_eq!(e.vectors[(1, 2)].abs(), 1.0);
    }

    #[test]
    fn eigen_of_rank_one() {
        let u = nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let m = SymmetricMatrix::from_lower(&u * u.transpose());
        let e = symmetric_eigen(&m).unwrap();
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert!(e.values[1].abs() < 1e-14 && e.values[2].abs() < 1e-14);
    }

    #[test]
    fn eigen_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let m = SymmetricMatrix::from_lower(&g + g.transpose());
        let e = symmetric_eigen(&m).unwrap();
        let norm = m.matrix().norm();
        for k in 0..6 {
            let v = e.vectors.column(k);
            let resid = (m.matrix() * v - v * e.values[k]).norm();
            assert!(resid <= 1e-8 * norm);
        }
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(6, 6)).amax() <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn symmetric_matrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymmetricMatrix::new(m).is_err());
    }
}
