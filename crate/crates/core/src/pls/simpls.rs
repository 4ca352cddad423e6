use nalgebra::{DMatrix, DVector};

use super::{assemble, pin_sign, validate, PlsAlgorithm, PlsModel, EXHAUSTED};
use crate::error::Result;
use crate::linalg::{column_means, subtract_row};

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 1000;

/// Dominant left singular vector of `s` by power iteration on `S Sᵀ`,
/// started from the normalized column of `s` with the largest norm.
pub(crate) fn dominant_left_singular(s: &DMatrix<f64>) -> Option<DVector<f64>> {
    let start = (0..s.ncols())
        .map(|j| (j, s.column(j).norm_squared()))
        .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b })
        .0;
    let mut r: DVector<f64> = s.column(start).into_owned();
    let n0 = r.norm();
    if !(n0 > 0.0) {
        return None;
    }
    r /= n0;
    for _ in 0..POWER_MAX_ITER {
        let mut next = s * s.tr_mul(&r);
        let nn = next.norm();
        if !(nn > 0.0) {
            return None;
        }
        next /= nn;
        let delta = (&next - &r).norm();
        r = next;
        if delta < POWER_TOL {
            break;
        }
    }
    Some(r)
}

/// PLS2 by SIMPLS: deflates the cross-product `XᵀY` instead of the data.
pub fn simpls_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, h: usize) -> Result<PlsModel> {
    validate(x, y, h)?;
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let xc = subtract_row(x, &x_mean);
    let yc = subtract_row(y, &y_mean);
    let x_scale = xc.norm();

    let mut s = xc.tr_mul(&yc);
    let s_scale = s.norm();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let (mut ws, mut rs, mut ts, mut ps, mut qs) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());

    for _ in 0..h {
        if !(s_scale > 0.0) || s.norm() <= EXHAUSTED * s_scale {
            break;
        }
        let Some(mut r) = dominant_left_singular(&s) else { break };
        pin_sign(&mut r);
        let mut t = &xc * &r;
        let tn = t.norm();
        if !(tn > EXHAUSTED * x_scale) {
            break;
        }
        t /= tn;
        let rotation = &r / tn;
        let p = xc.tr_mul(&t);
        let q = yc.tr_mul(&t);

        let mut v = p.clone();
        // Modified Gram-Schmidt, applied twice for numerical orthogonality.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let vn = v.norm();
        if !(vn > 0.0) {
            break;
        }
        v /= vn;
        let vts = s.tr_mul(&v);
        s -= &v * vts.transpose();
        basis.push(v);

        ws.push(r);
        rs.push(rotation);
        ts.push(t);
        ps.push(p);
        qs.push(q);
    }

    let coefficients = if rs.is_empty() {
        DMatrix::zeros(x.ncols(), y.ncols())
    } else {
        DMatrix::from_columns(&rs) * DMatrix::from_columns(&qs).transpose()
    };
    Ok(assemble(
        PlsAlgorithm::Simpls,
        h,
        x_mean,
        y_mean,
        &xc,
        ws,
        ts,
        ps,
        qs,
        coefficients,
    ))
}
