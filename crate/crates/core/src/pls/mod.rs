//! Multivariate partial least squares (PLS2) regression.
//!
//! Two extraction schemes are provided:
//!
//! * [`nipals_fit`] deflates the predictor and response blocks after every
//!   component (Wold's inner iteration).
//! * [`simpls_fit`] deflates the cross-covariance matrix instead, projecting
//!   it onto the orthogonal complement of the loadings found so far.
//!
//! Both center their inputs, pin the sign of each weight vector so that its
//! largest-magnitude entry is positive, and stop early with
//! [`PlsModel::truncated`] set when no covariance is left to explain.

mod nipals;
mod simpls;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, matrix_serde, subtract_row};

pub use nipals::nipals_fit;
pub use simpls::simpls_fit;

/// Relative size under which a covariance or residual counts as exhausted.
pub(crate) const EXHAUSTED: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlsAlgorithm {
    Nipals,
    Simpls,
}

impl std::fmt::Display for PlsAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlsAlgorithm::Nipals => "nipals",
            PlsAlgorithm::Simpls => "simpls",
        })
    }
}

/// A fitted PLS regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub algorithm: PlsAlgorithm,
    /// Components actually extracted.
    pub n_components: usize,
    /// Components asked for.
    pub requested: usize,
    /// Set when extraction stopped before `requested` components.
    pub truncated: bool,
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    /// Unit-norm weight vectors, `p x h`.
    #[serde(with = "matrix_serde")]
    pub weights: DMatrix<f64>,
    /// Scores `N x h`; mutually orthogonal columns.
    #[serde(with = "matrix_serde")]
    pub scores: DMatrix<f64>,
    /// Predictor loadings, `p x h`.
    #[serde(with = "matrix_serde")]
    pub x_loadings: DMatrix<f64>,
    /// Response loadings, `q x h`.
    #[serde(with = "matrix_serde")]
    pub y_loadings: DMatrix<f64>,
    /// Regression coefficients on centered data, `p x q`.
    #[serde(with = "matrix_serde")]
    pub coefficients: DMatrix<f64>,
    /// In-sample fitted responses, `N x q`.
    #[serde(with = "matrix_serde")]
    pub fitted: DMatrix<f64>,
}

impl PlsModel {
    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn n_targets(&self) -> usize {
        self.y_mean.len()
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} features, input has {} columns",
                self.n_features(),
                x_new.ncols()
            )));
        }
        let centered = subtract_row(x_new, &self.x_mean);
        let mut out = centered * &self.coefficients;
        for mut row in out.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.y_mean) {
                *v += m;
            }
        }
        Ok(out)
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }
}

pub fn pls_predict(model: &PlsModel, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict(x_new)
}

pub fn pls_coefficients(model: &PlsModel) -> &DMatrix<f64> {
    model.coefficients()
}

/// Fits with the chosen algorithm.
pub fn pls_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    h: usize,
    algorithm: PlsAlgorithm,
) -> Result<PlsModel> {
    match algorithm {
        PlsAlgorithm::Nipals => nipals_fit(x, y, h),
        PlsAlgorithm::Simpls => simpls_fit(x, y, h),
    }
}

pub(crate) fn validate(x: &DMatrix<f64>, y: &DMatrix<f64>, h: usize) -> Result<()> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows, Y has {}",
            y.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("PLS needs at least two observations".into()));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::InvalidInput("PLS needs at least one column in X and Y".into()));
    }
    let max_h = (n - 1).min(x.ncols());
    if h < 1 || h > max_h {
        return Err(Error::InvalidInput(format!(
            "number of components {h} outside 1..={max_h}"
        )));
    }
    if !all_finite(x) || !all_finite(y) {
        return Err(Error::InvalidInput("non-finite value in X or Y".into()));
    }
    Ok(())
}

/// Flips `v` in place so its largest-magnitude entry (first on ties) is
/// positive. Returns the sign applied.
pub(crate) fn pin_sign(v: &mut nalgebra::DVector<f64>) -> f64 {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
        -1.0
    } else {
        1.0
    }
}

/// Shared tail of both fits: assemble matrices, coefficients and fitted values.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    algorithm: PlsAlgorithm,
    requested: usize,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    xc: &DMatrix<f64>,
    weights: Vec<nalgebra::DVector<f64>>,
    scores: Vec<nalgebra::DVector<f64>>,
    x_loadings: Vec<nalgebra::DVector<f64>>,
    y_loadings: Vec<nalgebra::DVector<f64>>,
    coefficients: DMatrix<f64>,
) -> PlsModel {
    let (n, p, q) = (xc.nrows(), x_mean.len(), y_mean.len());
    let h = weights.len();
    let stack = |cols: &[nalgebra::DVector<f64>], rows: usize| {
        if cols.is_empty() {
            DMatrix::zeros(rows, 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    let mut fitted = xc * &coefficients;
    for mut row in fitted.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&y_mean) {
            *v += m;
        }
    }
    PlsModel {
        algorithm,
        n_components: h,
        requested,
        truncated: h < requested,
        x_mean,
        y_mean,
        weights: stack(&weights, p),
        scores: stack(&scores, n),
        x_loadings: stack(&x_loadings, p),
        y_loadings: stack(&y_loadings, q),
        coefficients,
        fitted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn predict_at_mean_returns_y_mean() {
        let x = random(20, 4, 1);
        let y = random(20, 3, 2);
        for alg in [PlsAlgorithm::Nipals, PlsAlgorithm::Simpls] {
            let m = pls_fit(&x, &y, 3, alg).unwrap();
            let xm = DMatrix::from_fn(5, 4, |_, j| m.x_mean[j]);
            let pred = m.predict(&xm).unwrap();
            for i in 0..5 {
                for j in 0..3 {
                    assert!((pred[(i, j)] - m.y_mean[j]).abs() < 1e-14);
                }
            }
            assert!((m.predict(&x).unwrap() - &m.fitted).amax() < 1e-12);
            assert!(m.predict(&random(2, 5, 3)).is_err());
        }
    }

    #[test]
    fn predict_matches_naive_loops() {
        let x = random(15, 5, 4);
        let y = random(15, 2, 5);
        let m = simpls_fit(&x, &y, 4).unwrap();
        let xn = random(7, 5, 6);
        let pred = m.predict(&xn).unwrap();
        for i in 0..7 {
            for j in 0..2 {
                let mut acc = m.y_mean[j];
                for k in 0..5 {
                    acc += (xn[(i, k)] - m.x_mean[k]) * m.coefficients[(k, j)];
                }
                assert!((acc - pred[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn component_count_validated() {
        let x = random(5, 8, 7);
        let y = random(5, 1, 8);
        assert!(nipals_fit(&x, &y, 0).is_err());
        assert!(nipals_fit(&x, &y, 5).is_err());
        assert!(simpls_fit(&x, &y, 4).is_ok());
        assert!(simpls_fit(&x, &random(4, 1, 1), 2).is_err());
    }

    #[test]
    fn zero_response_truncates_immediately() {
        let x = random(10, 3, 9);
        let y = DMatrix::zeros(10, 2);
        for alg in [PlsAlgorithm::Nipals, PlsAlgorithm::Simpls] {
            let m = pls_fit(&x, &y, 2, alg).unwrap();
            assert_eq!(m.n_components, 0);
            assert!(m.truncated);
            assert!(m.coefficients.iter().all(|&v| v == 0.0));
            assert_eq!(m.coefficients.shape(), (3, 2));
        }
    }

    #[test]
    fn json_round_trip() {
        let m = nipals_fit(&random(9, 3, 1), &random(9, 2, 2), 2).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"algorithm\":\"nipals\""));
        let back: PlsModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
