//! Sample PCA through the `n x n` dual Gram matrix.
//!
//! For a `p x n` data matrix `X` (observations in columns) the nonzero
//! eigenvalues of `X X^T / c` and `X^T X / c` coincide. With `u_j` the unit
//! dual eigenvectors and `d_j` the eigenvalues of `X^T X / c`:
//!
//! * primal eigenvectors `v_j = X u_j / sqrt(c d_j)`,
//! * raw scores `s_j = v_j^T X = sqrt(c d_j) u_j`,
//! * standardized scores `z_j = s_j / sqrt(d_j) = sqrt(c) u_j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, sym_eigen_desc};
use crate::par;

/// Divisor of the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divisor {
    N,
    NMinusOne,
}

/// Centering and divisor used to form the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalization {
    pub centered: bool,
    pub divisor: Divisor,
}

impl Default for Normalization {
    /// Uncentered with divisor `n`, the convention of the limit theory (`E x = 0`).
    fn default() -> Self {
        Normalization {
            centered: false,
            divisor: Divisor::N,
        }
    }
}

impl Normalization {
    /// Centered with divisor `n - 1`, the usual sample covariance.
    pub fn sample_covariance() -> Self {
        Normalization {
            centered: true,
            divisor: Divisor::NMinusOne,
        }
    }

    pub fn divisor_value(&self, n: usize) -> f64 {
        match self.divisor {
            Divisor::N => n as f64,
            Divisor::NMinusOne => (n - 1) as f64,
        }
    }
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    for c in 0..x.ncols() {
        for r in 0..x.nrows() {
            if !x[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// `X` with every variable (row) centered across observations when requested.
pub fn prepare(x: &DMatrix<f64>, norm: Normalization) -> DMatrix<f64> {
    if !norm.centered {
        return x.clone();
    }
    let n = x.ncols() as f64;
    let means: Vec<f64> = (0..x.nrows()).map(|r| x.row(r).sum() / n).collect();
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - means[r])
}

/// `X^T X / c` (after optional centering).
pub fn dual_gram(x: &DMatrix<f64>, norm: Normalization) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::spec(format!("dual Gram needs n >= 2, got {n}")));
    }
    check_finite(x)?;
    let xc = prepare(x, norm);
    Ok(gram_of(&xc, norm.divisor_value(n)))
}

fn gram_of(xc: &DMatrix<f64>, divisor: f64) -> DMatrix<f64> {
    let n = xc.ncols();
    // Upper triangle row by row in parallel, mirrored afterwards.
    let rows = par::map_indexed(n, |i| {
        let ci = xc.column(i);
        let ci = ci.as_slice();
        (i..n)
            .map(|j| dot(ci, xc.column(j).as_slice()) / divisor)
            .collect::<Vec<f64>>()
    });
    let mut g = DMatrix::<f64>::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    g
}

/// A component whose eigenvalue vanished; its standardized scores were zeroed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroEigenvalue {
    pub component: usize,
    pub eigenvalue: f64,
}

/// Result of [`pca_decompose`].
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// All `min(p, n)` sample eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `n x k` dual eigenvectors.
    pub dual_vectors: DMatrix<f64>,
    /// `k x n` standardized scores.
    pub std_scores: DMatrix<f64>,
    /// `k x n` raw scores.
    pub raw_scores: DMatrix<f64>,
    pub normalization: Normalization,
    pub warnings: Vec<ZeroEigenvalue>,
}

impl PcaResult {
    pub fn k(&self) -> usize {
        self.dual_vectors.ncols()
    }

    /// `p x k` primal eigenvectors `X u_j / |X u_j|`; zero columns for degenerate components.
    pub fn primal_vectors(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let xc = prepare(x, self.normalization);
        let mut v = &xc * &self.dual_vectors;
        for mut col in v.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        for w in &self.warnings {
            v.column_mut(w.component).fill(0.0);
        }
        v
    }
}

/// Top-`k` sample PCA of `x` through the dual Gram matrix.
///
/// Dual eigenvectors are sign-normalised so that their largest-magnitude entry
/// is positive (the first such entry on exact ties).
pub fn pca_decompose(x: &DMatrix<f64>, k: usize, norm: Normalization) -> Result<PcaResult> {
    let (p, n) = x.shape();
    let gram = dual_gram(x, norm)?;
    let max_k = p.min(if norm.centered { n - 1 } else { n });
    if k == 0 || k > max_k {
        return Err(Error::OutOfRange {
            index: k,
            limit: max_k,
        });
    }
    let (values, vectors) = sym_eigen_desc(&gram);
    let eigenvalues: Vec<f64> = values.iter().take(p.min(n)).map(|v| v.max(0.0)).collect();
    let c = norm.divisor_value(n);
    let top = eigenvalues[0];
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE) * n as f64;

    let mut dual = DMatrix::<f64>::zeros(n, k);
    let mut std_scores = DMatrix::<f64>::zeros(k, n);
    let mut raw_scores = DMatrix::<f64>::zeros(k, n);
    let mut warnings = Vec::new();
    for j in 0..k {
        let mut u: Vec<f64> = vectors.column(j).iter().copied().collect();
        let pivot = u.iter().enumerate().fold((0, 0.0f64), |best, (i, v)| {
            if v.abs() > best.1.abs() {
                (i, *v)
            } else {
                best
            }
        });
        if pivot.1 < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
        dual.column_mut(j).copy_from_slice(&u);
        let d = eigenvalues[j];
        if d <= tol {
            warnings.push(ZeroEigenvalue {
                component: j,
                eigenvalue: d,
            });
            continue;
        }
        let s = (c * d).sqrt();
        for i in 0..n {
            raw_scores[(j, i)] = s * u[i];
            std_scores[(j, i)] = c.sqrt() * u[i];
        }
    }
    Ok(PcaResult {
        eigenvalues,
        dual_vectors: dual,
        std_scores,
        raw_scores,
        normalization: norm,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const N_MINUS_ONE_UNCENTERED: Normalization = Normalization {
        centered: false,
        divisor: Divisor::NMinusOne,
    };

    #[test]
    fn hand_gram() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        let g = dual_gram(&x, N_MINUS_ONE_UNCENTERED).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let g = dual_gram(&x, Normalization::default()).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let zero = DMatrix::<f64>::zeros(3, 4);
        assert_eq!(
            dual_gram(&zero, Normalization::default()).unwrap(),
            DMatrix::zeros(4, 4)
        );
    }

    #[test]
    fn gram_errors() {
        let mut x = DMatrix::<f64>::zeros(3, 4);
        x[(1, 2)] = f64::NAN;
        assert!(matches!(
            dual_gram(&x, Normalization::default()),
            Err(Error::NonFinite { row: 1, col: 2 })
        ));
        assert!(dual_gram(&DMatrix::zeros(3, 1), Normalization::default()).is_err());
    }

    #[test]
    fn hand_decomposition() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        let r = pca_decompose(&x, 1, N_MINUS_ONE_UNCENTERED).unwrap();
        assert!((r.eigenvalues[0] - 4.0).abs() < 1e-12);
        let h = 2f64.sqrt() / 2.0;
        assert!((r.std_scores[(0, 0)] - h).abs() < 1e-12);
        assert!((r.std_scores[(0, 1)] + h).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_rows_descending() {
        // Rows with squared norms 4 and 1, orthogonal.
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 0.5, -0.5, 0.5, -0.5]);
        let r = pca_decompose(&x, 2, N_MINUS_ONE_UNCENTERED).unwrap();
        assert!((r.eigenvalues[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn k_range_and_zero_eigenvalues() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(pca_decompose(&x, 3, Normalization::default()).is_err());
        assert!(pca_decompose(&x, 0, Normalization::default()).is_err());
        let r = pca_decompose(&x, 2, Normalization::default()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.warnings[0].component, 1);
        assert!(r.std_scores.row(1).iter().all(|v| *v == 0.0));
        let tall = DMatrix::from_fn(4, 3, |r, c| ((r * 3 + c) * (r + 2)) as f64);
        assert!(pca_decompose(&tall, 3, Normalization::default()).is_ok());
        assert!(pca_decompose(&tall, 3, Normalization::sample_covariance()).is_err());
    }

    #[test]
    fn standardized_norms() {
        let x = DMatrix::from_fn(7, 5, |r, c| {
            (((r * 7 + c * 3) * 2_654_435_761usize) % 1000) as f64 / 1000.0
        });
        let r = pca_decompose(&x, 4, Normalization::sample_covariance()).unwrap();
        for j in 0..4 {
            let nrm: f64 = r.std_scores.row(j).iter().map(|v| v * v).sum();
            assert!((nrm - 4.0).abs() < 1e-8);
        }
        let r = pca_decompose(&x, 4, Normalization::default()).unwrap();
        for j in 0..4 {
            let nrm: f64 = r.std_scores.row(j).iter().map(|v| v * v).sum();
            assert!((nrm - 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn full_reconstruction() {
        let x = DMatrix::from_fn(6, 4, |r, c| ((r * 4 + c) as f64 * 1.3).cos());
        let r = pca_decompose(&x, 4, Normalization::default()).unwrap();
        let v = r.primal_vectors(&x);
        let recon = &v * &r.raw_scores;
        assert!((recon - &x).abs().max() < 1e-8);
    }
}
