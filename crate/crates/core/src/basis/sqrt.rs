//! Symmetric square roots of positive semidefinite matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix_serde;

/// Eigenvalues below this fraction of the largest one are clamped before rooting.
pub const EIGEN_CLAMP: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// `M^{1/2}` and `M^{-1/2}` of a symmetric PSD matrix, both symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtPair {
    #[serde(with = "matrix_serde")]
    pub sqrt: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub inv_sqrt: DMatrix<f64>,
    /// Ratio of the largest to the smallest (clamped) eigenvalue.
    pub condition_number: f64,
}

/// Square root pair of `m` via its symmetric eigendecomposition.
///
/// Eigenvalues under `1e-12 * lambda_max` are raised to that threshold, so the
/// inverse root stays finite for nearly singular Gram matrices.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<SqrtPair> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "psd_sqrt needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("psd_sqrt of an empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("psd_sqrt: non-finite entry".into()));
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let asymmetry = (m - m.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    let norm = lambda_max.abs().max(lambda_min.abs());
    if lambda_min < -EIGEN_CLAMP * norm {
        return Err(Error::NotPsd { min_eigenvalue: lambda_min });
    }
    if !(lambda_max > 0.0) {
        return Err(Error::Singular("psd_sqrt of the zero matrix".into()));
    }
    let floor = EIGEN_CLAMP * lambda_max;
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    let smallest = clamped.iter().copied().fold(f64::INFINITY, f64::min);

    let v = &eig.eigenvectors;
    let scaled = |f: &dyn Fn(f64) -> f64| {
        let mut vs = v.clone();
        for (j, &l) in clamped.iter().enumerate() {
            vs.column_mut(j).scale_mut(f(l));
        }
        let out = &vs * v.transpose();
        (&out + out.transpose()) * 0.5
    };
    Ok(SqrtPair {
        sqrt: scaled(&|l| l.sqrt()),
        inv_sqrt: scaled(&|l| 1.0 / l.sqrt()),
        condition_number: lambda_max / smallest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_roots_to_identity() {
        let i = DMatrix::<f64>::identity(4, 4);
        let p = psd_sqrt(&i).unwrap();
        assert!((&p.sqrt - &i).norm() < 1e-14);
        assert!((&p.inv_sqrt - &i).norm() < 1e-14);
        assert!((p.condition_number - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_case() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let p = psd_sqrt(&m).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let want_inv = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0 / 3.0]);
        assert!((&p.sqrt - want).norm() < 1e-14);
        assert!((&p.inv_sqrt - want_inv).norm() < 1e-14);
    }

    #[test]
    fn rejects_negative_definite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn clamps_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = psd_sqrt(&m).unwrap();
        assert!((&p.sqrt * &p.sqrt - &m).norm() < 1e-10);
        assert!(p.condition_number > 1e11);
        assert!(p.inv_sqrt.iter().all(|v| v.is_finite()));
    }
}
