//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Smallest accepted ratio between the squared extreme Cholesky pivots.
const PIVOT_RATIO_FLOOR: f64 = 1e-14;

/// Cholesky factorization that also rejects numerically singular matrices.
pub(crate) fn guarded_cholesky(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(a).ok_or_else(|| Error::Singular(format!("{what}: not positive definite")))?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || (min / max).powi(2) < PIVOT_RATIO_FLOOR {
        return Err(Error::Singular(format!(
            "{what}: pivot ratio {:.3e} below {PIVOT_RATIO_FLOOR:e}",
            if max > 0.0 { (min / max).powi(2) } else { 0.0 }
        )));
    }
    Ok(chol)
}

/// `n` equally spaced points on `[lower, upper]` with both endpoints pinned exactly.
pub fn linspace(lower: f64, upper: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lower + upper)],
        _ => {
            let step = (upper - lower) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { upper } else { lower + step * i as f64 })
                .collect()
        }
    }
}

/// Logarithmically spaced grid from `10^lo` to `10^hi` (inclusive).
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo, hi, n).into_iter().map(|e| 10f64.powf(e)).collect()
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    (0..m.ncols())
        .map(|j| m.column(j).iter().sum::<f64>() / n)
        .collect()
}

pub(crate) fn subtract_row(m: &DMatrix<f64>, row: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - row[j])
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Serde adapter storing a matrix as `{rows, cols, data}` with row-major data.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct RowMajor {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        RowMajor { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rm = RowMajor::deserialize(d)?;
        if rm.rows * rm.cols != rm.data.len() {
            return Err(D::Error::custom(format!(
                "matrix {}x{} needs {} values, got {}",
                rm.rows,
                rm.cols,
                rm.rows * rm.cols,
                rm.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rm.rows, rm.cols, &rm.data))
    }
}
