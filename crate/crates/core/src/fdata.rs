//! Curves in basis-coefficient form.
//!
//! [`smooth_curves`] turns discretely sampled curves into coefficients by
//! penalized least squares with a curvature penalty, choosing one shared
//! smoothing parameter for the whole set by generalized cross-validation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, column_means, logspace, matrix_serde, subtract_row};

/// Derivative order of the roughness penalty.
pub const PENALTY_DERIV: usize = 2;

/// Denominators `alpha + lambda * gamma` below this are treated as singular.
const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservations {
    pub argvals: Vec<f64>,
    /// `N x J`, one row per curve.
    #[serde(with = "matrix_serde")]
    pub obs: DMatrix<f64>,
}

/// `N` curves sharing one basis, stored as an `N x K` coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    basis: BasisSystem,
    #[serde(with = "matrix_serde")]
    coef: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<RawObservations>,
}

impl CurveSet {
    pub fn new(basis: BasisSystem, coef: DMatrix<f64>) -> Result<Self> {
        if coef.ncols() != basis.n_basis() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient matrix has {} columns, basis has {} functions",
                coef.ncols(),
                basis.n_basis()
            )));
        }
        if coef.nrows() == 0 {
            return Err(Error::InvalidInput("a curve set needs at least one curve".into()));
        }
        if !linalg::all_finite(&coef) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { basis, coef, raw: None })
    }

    pub fn with_raw(mut self, argvals: Vec<f64>, obs: DMatrix<f64>) -> Result<Self> {
        check_argvals(&argvals, &self.basis)?;
        if obs.nrows() != self.coef.nrows() || obs.ncols() != argvals.len() {
            return Err(Error::DimensionMismatch(format!(
                "raw observations {}x{} do not match {} curves on {} argvals",
                obs.nrows(),
                obs.ncols(),
                self.coef.nrows(),
                argvals.len()
            )));
        }
        self.raw = Some(RawObservations { argvals, obs });
        Ok(self)
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn coef(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub fn raw(&self) -> Option<&RawObservations> {
        self.raw.as_ref()
    }

    pub fn n_curves(&self) -> usize {
        self.coef.nrows()
    }

    /// Curves `start..end` (raw observations follow along).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_curves() {
            return Err(Error::InvalidInput(format!(
                "bad curve range {start}..{end} of {}",
                self.n_curves()
            )));
        }
        let coef = self.coef.rows(start, end - start).into_owned();
        let raw = self.raw.as_ref().map(|r| RawObservations {
            argvals: r.argvals.clone(),
            obs: r.obs.rows(start, end - start).into_owned(),
        });
        Ok(Self { basis: self.basis.clone(), coef, raw })
    }

    /// Columnwise mean of the coefficients, i.e. the coefficients of the mean curve.
    pub fn mean_curve(&self) -> Vec<f64> {
        column_means(&self.coef)
    }

    /// Subtracts the mean curve; returns the centered set and the mean.
    pub fn center(&self) -> Result<(CurveSet, Vec<f64>)> {
        if self.n_curves() < 2 {
            return Err(Error::InvalidInput("centering needs at least two curves".into()));
        }
        let mean = self.mean_curve();
        let coef = subtract_row(&self.coef, &mean);
        Ok((CurveSet { basis: self.basis.clone(), coef, raw: None }, mean))
    }

    /// Curve values on `grid`, `N x grid.len()`.
    pub fn eval(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let e = self.basis.eval_basis(grid, 0)?;
        Ok(&self.coef * e.transpose())
    }

    /// Adds the curve with coefficients `shift` to every curve.
    pub fn shifted(&self, shift: &[f64]) -> Result<CurveSet> {
        if shift.len() != self.basis.n_basis() {
            return Err(Error::DimensionMismatch("shift length differs from basis size".into()));
        }
        let neg: Vec<f64> = shift.iter().map(|v| -v).collect();
        CurveSet::new(self.basis.clone(), subtract_row(&self.coef, &neg))
    }
}

pub fn mean_curve(cs: &CurveSet) -> Vec<f64> {
    cs.mean_curve()
}

pub fn center(cs: &CurveSet) -> Result<(CurveSet, Vec<f64>)> {
    cs.center()
}

pub fn eval_curves(cs: &CurveSet, grid: &[f64]) -> Result<DMatrix<f64>> {
    cs.eval(grid)
}

fn check_argvals(argvals: &[f64], basis: &BasisSystem) -> Result<()> {
    if argvals.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("argvals must be strictly increasing".into()));
    }
    if let Some(&x) = argvals.iter().find(|&&x| !basis.contains(x)) {
        let (lower, upper) = basis.domain();
        return Err(Error::OutsideDomain { point: x, lower, upper });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothReport {
    pub lambda: f64,
    /// `(lambda, gcv)` for every accepted grid value, in grid order.
    pub gcv_curve: Vec<(f64, f64)>,
    /// Trace of the hat matrix at the chosen lambda.
    pub edf: f64,
}

/// Zero followed by 41 log-spaced values from `1e-10` to `1e4`.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend(logspace(-10.0, 4.0, 41));
    grid
}

/// The penalized system `EᵀE + λ PᵀP` diagonalized once for all λ.
///
/// With `[E; P] = Q R` and `Q_P = Q[J..]`, eigenvectors `V` of `Q_Pᵀ Q_P`
/// give `EᵀE = Rᵀ V diag(α) Vᵀ R` and `PᵀP = Rᵀ V diag(γ) Vᵀ R`,
/// so the system for any λ is diagonal in the `V R` coordinates.
struct PenalizedSystem {
    r: DMatrix<f64>,
    v: DMatrix<f64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    /// `Q_E V`, `J x K`.
    z: DMatrix<f64>,
}

impl PenalizedSystem {
    fn new(e: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Self> {
        let (j, k) = (e.nrows(), e.ncols());
        let mut stacked = DMatrix::zeros(j + p.nrows(), k);
        stacked.rows_mut(0, j).copy_from(e);
        stacked.rows_mut(j, p.nrows()).copy_from(p);
        let qr = stacked.qr();
        let q = qr.q();
        let r = qr.r();
        let diag = r.diagonal();
        let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(max > 0.0) || min < 1e-12 * max {
            return Err(Error::SmoothingFailed(
                "evaluation and penalty matrices share a null space".into(),
            ));
        }
        let q_e = q.rows(0, j).into_owned();
        let q_p = q.rows(j, p.nrows()).into_owned();
        let eig = SymmetricEigen::new(q_p.transpose() * &q_p);
        let v = eig.eigenvectors;
        let z = &q_e * &v;
        let alpha = (0..k).map(|i| z.column(i).norm_squared()).collect();
        let qpv = &q_p * &v;
        let gamma = (0..k).map(|i| qpv.column(i).norm_squared()).collect();
        Ok(Self { r, v, alpha, gamma, z })
    }

    fn denominators(&self, lambda: f64) -> Option<Vec<f64>> {
        let d: Vec<f64> = self
            .alpha
            .iter()
            .zip(&self.gamma)
            .map(|(a, g)| a + lambda * g)
            .collect();
        if d.iter().any(|&x| !(x > SINGULAR_FLOOR)) {
            None
        } else {
            Some(d)
        }
    }
}

/// Penalized least-squares smoothing of `obs` (`N x J`, one curve per row)
/// sampled at `argvals`, with λ picked from `lambda_grid` by GCV.
pub fn smooth_curves(
    obs: &DMatrix<f64>,
    argvals: &[f64],
    bs: &BasisSystem,
    lambda_grid: &[f64],
) -> Result<(CurveSet, SmoothReport)> {
    let j = argvals.len();
    if j < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 sample points, got {j}")));
    }
    if obs.ncols() != j {
        return Err(Error::DimensionMismatch(format!(
            "observations have {} columns but there are {j} argvals",
            obs.ncols()
        )));
    }
    if obs.nrows() == 0 {
        return Err(Error::InvalidInput("no curves to smooth".into()));
    }
    if !linalg::all_finite(obs) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(
            "lambda grid must be nonempty, finite and nonnegative".into(),
        ));
    }
    check_argvals(argvals, bs)?;

    let e = bs.eval_basis(argvals, 0)?;
    let pen = bs.penalty_factor(PENALTY_DERIV.min(bs.order() - 1))?;
    let sys = PenalizedSystem::new(&e, &pen)?;

    let jf = j as f64;
    // K x N projections of the data.
    let w = sys.z.transpose() * obs.transpose();
    let mut gcv_curve = Vec::with_capacity(lambda_grid.len());
    let mut best: Option<(f64, f64, f64, Vec<f64>)> = None;
    for &lambda in lambda_grid {
        let Some(d) = sys.denominators(lambda) else { continue };
        let trace: f64 = sys.alpha.iter().zip(&d).map(|(a, di)| a / di).sum();
        let resid_df = jf - trace;
        if resid_df <= 1e-8 * jf {
            continue;
        }
        let mut scaled = w.clone();
        for (i, di) in d.iter().enumerate() {
            scaled.row_mut(i).scale_mut(1.0 / di);
        }
        let fitted = &sys.z * &scaled;
        let mut sse_total = 0.0;
        for i in 0..obs.nrows() {
            let mut sse = 0.0;
            for g in 0..j {
                let r = obs[(i, g)] - fitted[(g, i)];
                sse += r * r;
            }
            sse_total += jf * sse;
        }
        let gcv = sse_total / (resid_df * resid_df);
        if !gcv.is_finite() {
            continue;
        }
        gcv_curve.push((lambda, gcv));
        if best.as_ref().is_none_or(|b| gcv < b.1) {
            best = Some((lambda, gcv, trace, d));
        }
    }
    let Some((lambda, _, edf, d)) = best else {
        return Err(Error::SmoothingFailed(
            "penalized normal equations singular for every lambda in the grid".into(),
        ));
    };
    let mut scaled = w;
    for (i, di) in d.iter().enumerate() {
        scaled.row_mut(i).scale_mut(1.0 / di);
    }
    let rhs = &sys.v * scaled;
    let coef_t = sys
        .r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::SmoothingFailed("triangular solve failed".into()))?;
    let cs = CurveSet::new(bs.clone(), coef_t.transpose())?.with_raw(argvals.to_vec(), obs.clone())?;
    Ok((cs, SmoothReport { lambda, gcv_curve, edf }))
}

/// Smooths with every candidate basis size and keeps the one with the
/// smallest minimized GCV score. Returns the chosen size alongside.
pub fn select_nbasis(
    obs: &DMatrix<f64>,
    argvals: &[f64],
    domain: (f64, f64),
    order: usize,
    candidates: &[usize],
    lambda_grid: &[f64],
) -> Result<(CurveSet, SmoothReport, usize)> {
    let mut best: Option<(CurveSet, SmoothReport, usize, f64)> = None;
    let mut last_err = None;
    for &k in candidates {
        let bs = BasisSystem::uniform(domain.0, domain.1, k, order)?;
        match smooth_curves(obs, argvals, &bs, lambda_grid) {
            Ok((cs, rep)) => {
                let score = rep
                    .gcv_curve
                    .iter()
                    .find(|(l, _)| *l == rep.lambda)
                    .map(|(_, g)| *g)
                    .unwrap_or(f64::INFINITY);
                if best.as_ref().is_none_or(|b| score < b.3) {
                    best = Some((cs, rep, k, score));
                }
            }
            Err(err) => last_err = Some(err),
        }
    }
    match best {
        Some((cs, rep, k, _)) => Ok((cs, rep, k)),
        None => Err(last_err.unwrap_or_else(|| Error::InvalidInput("no candidate basis sizes".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_bspline;
    use crate::linalg::linspace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coef(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn exact_recovery_without_penalty() {
        let bs = make_bspline((0.0, 1.0), 12, 4).unwrap();
        let c = random_coef(6, 12, 1);
        let x = linspace(0.0, 1.0, 40);
        let obs = &c * bs.eval_basis(&x, 0).unwrap().transpose();
        let (cs, rep) = smooth_curves(&obs, &x, &bs, &[0.0]).unwrap();
        assert_eq!(rep.lambda, 0.0);
        assert!((cs.coef() - &c).amax() < 1e-8);
        assert!((rep.edf - 12.0).abs() < 1e-8);
    }

    #[test]
    fn huge_penalty_gives_line_fit() {
        let bs = make_bspline((0.0, 1.0), 15, 4).unwrap();
        let x = linspace(0.0, 1.0, 60);
        let obs = DMatrix::from_fn(3, 60, |i, g| {
            (6.0 * x[g]).sin() + i as f64 * x[g] * x[g] + 0.3 * i as f64
        });
        let (cs, _) = smooth_curves(&obs, &x, &bs, &[1e12]).unwrap();
        let fitted = cs.eval(&x).unwrap();
        for i in 0..3 {
            // Straight-line least squares fit.
            let xm = x.iter().sum::<f64>() / 60.0;
            let ym = obs.row(i).sum() / 60.0;
            let sxy: f64 = (0..60).map(|g| (x[g] - xm) * (obs[(i, g)] - ym)).sum();
            let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
            let slope = sxy / sxx;
            for g in 0..60 {
                let line = ym + slope * (x[g] - xm);
                assert!((fitted[(i, g)] - line).abs() < 1e-3, "i={i} g={g}");
            }
        }
    }

    #[test]
    fn chosen_lambda_minimizes_curve_and_solves_normal_equations() {
        let bs = make_bspline((-1.0, 1.0), 10, 4).unwrap();
        let x = linspace(-0.99, 0.98, 35);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = DMatrix::from_fn(8, 35, |_, g| x[g].powi(3) + 0.1 * rng.random_range(-1.0..1.0));
        let (cs, rep) = smooth_curves(&obs, &x, &bs, &default_lambda_grid()).unwrap();
        let min = rep.gcv_curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let at = rep.gcv_curve.iter().find(|p| p.0 == rep.lambda).unwrap().1;
        assert_eq!(at, min);
        assert!(rep.gcv_curve.iter().all(|p| p.1.is_finite() && p.1 >= 0.0));
        assert!(rep.edf > 0.0 && rep.edf <= 10.0);

        let e = bs.eval_basis(&x, 0).unwrap();
        let r = bs.penalty_matrix(2).unwrap();
        let a = e.transpose() * &e + &r * rep.lambda;
        let lhs = &a * cs.coef().transpose();
        let rhs = e.transpose() * obs.transpose();
        assert!((lhs - &rhs).amax() < 1e-8 * rhs.amax());
    }

    #[test]
    fn singular_everywhere_is_an_error() {
        // Fewer points than functions and no penalty: EᵀE is singular.
        let bs = make_bspline((0.0, 1.0), 12, 4).unwrap();
        let x = linspace(0.0, 1.0, 5);
        let obs = DMatrix::from_element(2, 5, 1.0);
        assert!(matches!(
            smooth_curves(&obs, &x, &bs, &[0.0]),
            Err(Error::SmoothingFailed(_))
        ));
        // ... but a positive lambda regularizes it.
        assert!(smooth_curves(&obs, &x, &bs, &[0.0, 1e-3]).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let bs = make_bspline((0.0, 1.0), 6, 4).unwrap();
        let obs = DMatrix::from_element(2, 4, 1.0);
        assert!(smooth_curves(&obs, &[0.0, 0.5, 0.4, 1.0], &bs, &[0.0]).is_err());
        assert!(smooth_curves(&obs, &[0.0, 0.5, 0.6, 1.2], &bs, &[0.0]).is_err());
        assert!(smooth_curves(&obs, &[0.0, 0.5, 0.6, 1.0], &bs, &[]).is_err());
        assert!(smooth_curves(&obs, &[0.0, 0.5, 0.6, 1.0], &bs, &[-1.0]).is_err());
        let two = DMatrix::from_element(2, 2, 1.0);
        assert!(smooth_curves(&two, &[0.0, 1.0], &bs, &[0.0]).is_err());
    }

    #[test]
    fn mean_and_center() {
        let bs = make_bspline((0.0, 1.0), 5, 3).unwrap();
        let c = random_coef(1, 5, 3);
        let single = CurveSet::new(bs.clone(), c.clone()).unwrap();
        assert_eq!(single.mean_curve(), c.row(0).iter().copied().collect::<Vec<_>>());
        assert!(single.center().is_err());

        let pm = DMatrix::from_fn(2, 5, |i, j| if i == 0 { c[(0, j)] } else { -c[(0, j)] });
        let cs = CurveSet::new(bs.clone(), pm).unwrap();
        assert!(cs.mean_curve().iter().all(|&v| v == 0.0));

        let constant = DMatrix::from_fn(4, 5, |_, j| c[(0, j)]);
        let (centered, mean) = CurveSet::new(bs.clone(), constant).unwrap().center().unwrap();
        assert!(centered.coef().iter().all(|&v| v == 0.0));
        assert_eq!(mean, c.row(0).iter().copied().collect::<Vec<_>>());

        let cs = CurveSet::new(bs, random_coef(30, 5, 4)).unwrap();
        let (once, _) = cs.center().unwrap();
        let (twice, m2) = once.center().unwrap();
        assert!((once.coef() - twice.coef()).amax() < 1e-14);
        assert!(m2.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn eval_constant_coefficients_is_one() {
        let bs = make_bspline((0.0, 2.0), 9, 4).unwrap();
        let grid = linspace(0.0, 2.0, 31);
        let ones = CurveSet::new(bs.clone(), DMatrix::from_element(3, 9, 1.0)).unwrap();
        assert!(ones.eval(&grid).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let zeros = CurveSet::new(bs, DMatrix::zeros(3, 9)).unwrap();
        assert!(zeros.eval(&grid).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_curves_have_zero_pointwise_mean() {
        let bs = make_bspline((0.0, 1.0), 8, 4).unwrap();
        let (centered, _) = CurveSet::new(bs, random_coef(25, 8, 11)).unwrap().center().unwrap();
        let vals = centered.eval(&linspace(0.0, 1.0, 41)).unwrap();
        for g in 0..41 {
            assert!(vals.column(g).mean().abs() < 1e-10);
        }
    }

    #[test]
    fn select_nbasis_prefers_adequate_basis() {
        let x = linspace(0.0, 1.0, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs = DMatrix::from_fn(10, 80, |_, g| {
            (8.0 * x[g]).sin() + 0.05 * rng.random_range(-1.0..1.0)
        });
        let (cs, _, k) = select_nbasis(&obs, &x, (0.0, 1.0), 4, &[4, 12, 20], &default_lambda_grid()).unwrap();
        assert_ne!(k, 4);
        assert_eq!(cs.basis().n_basis(), k);
    }

    #[test]
    fn json_round_trip() {
        let bs = make_bspline((0.0, 1.0), 5, 3).unwrap();
        let cs = CurveSet::new(bs, random_coef(3, 5, 2)).unwrap();
        let s = serde_json::to_string(&cs).unwrap();
        assert!(!s.contains("raw"));
        let back: CurveSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cs);
    }
}
