use nalgebra::{DMatrix, DVector};

use super::{assemble, pin_sign, validate, PlsAlgorithm, PlsModel, EXHAUSTED};
use crate::error::{Error, Result};
use crate::linalg::{column_means, subtract_row};

const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITER: usize = 500;

/// PLS2 by NIPALS with deflation of both blocks.
pub fn nipals_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, h: usize) -> Result<PlsModel> {
    validate(x, y, h)?;
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let xc = subtract_row(x, &x_mean);
    let yc = subtract_row(y, &y_mean);
    let x_scale = xc.norm();
    let y_scale = yc.norm();

    let mut xr = xc.clone();
    let mut yr = yc.clone();
    let (mut ws, mut ts, mut ps, mut cs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    'components: for _ in 0..h {
        if !(y_scale > 0.0) || yr.norm() <= EXHAUSTED * y_scale {
            break;
        }
        // Start from the response column with the largest residual variance.
        let start = (0..yr.ncols())
            .map(|j| (j, yr.column(j).norm_squared()))
            .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b })
            .0;
        let mut u: DVector<f64> = yr.column(start).into_owned();
        let mut t_old: Option<DVector<f64>> = None;
        let (mut w, mut t, mut c);
        let mut iter = 0;
        loop {
            let xtu = xr.tr_mul(&u);
            let nx = xtu.norm();
            if !(nx > EXHAUSTED * x_scale * u.norm()) {
                break 'components;
            }
            w = xtu / nx;
            t = &xr * &w;
            let tt = t.norm_squared();
            if !(tt > 0.0) {
                break 'components;
            }
            c = yr.tr_mul(&t) / tt;
            let cc = c.norm_squared();
            if !(cc > 0.0) {
                break 'components;
            }
            u = &yr * &c / cc;
            iter += 1;
            let converged = t_old
                .as_ref()
                .is_some_and(|old| (&t - old).norm() < INNER_TOL * t.norm());
            if converged || iter >= INNER_MAX_ITER {
                break;
            }
            t_old = Some(t.clone());
        }
        let sign = pin_sign(&mut w);
        if sign < 0.0 {
            t.neg_mut();
            c.neg_mut();
        }
        let tt = t.norm_squared();
        let p = xr.tr_mul(&t) / tt;
        xr -= &t * p.transpose();
        yr -= &t * c.transpose();
        ws.push(w);
        ts.push(t);
        ps.push(p);
        cs.push(c);
    }

    let coefficients = coefficients_from(&ws, &ps, &cs, x.ncols(), y.ncols())?;
    Ok(assemble(
        PlsAlgorithm::Nipals,
        h,
        x_mean,
        y_mean,
        &xc,
        ws,
        ts,
        ps,
        cs,
        coefficients,
    ))
}

/// `B = W (PᵀW)⁻¹ Cᵀ`.
fn coefficients_from(
    ws: &[DVector<f64>],
    ps: &[DVector<f64>],
    cs: &[DVector<f64>],
    p: usize,
    q: usize,
) -> Result<DMatrix<f64>> {
    if ws.is_empty() {
        return Ok(DMatrix::zeros(p, q));
    }
    let w = DMatrix::from_columns(ws);
    let pl = DMatrix::from_columns(ps);
    let c = DMatrix::from_columns(cs);
    let ptw = pl.tr_mul(&w);
    let m = ptw
        .lu()
        .solve(&c.transpose())
        .ok_or_else(|| Error::Singular("PᵀW is singular".into()))?;
    Ok(w * m)
}
