//! Function-on-function regression.
//!
//! With response coefficients `C` (basis `φ`, Gram `Φ`) and predictor
//! coefficients `D_m` (bases `ψ_m`, Grams `ζ_m`), all centered, the model is
//! fitted as the matrix regression of `C Φ^{1/2}` on `[D_1 ζ_1^{1/2}, …]`.
//! Euclidean inner products of these rows equal L2 inner products of the
//! curves. The fitted `Ξ̂` is mapped back to coefficient surfaces
//! `β_m(s,t) = ψ_m(s)ᵀ B_m φ(t)` with `B_m = ζ_m^{-1/2} Ξ̂_m Φ^{-1/2}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, GramMatrix, SqrtPair};
use crate::error::{Error, Result};
use crate::fdata::CurveSet;
use crate::linalg::{linspace, logspace, matrix_serde, subtract_row};
use crate::pls::{pls_fit, PlsAlgorithm, PlsModel};

/// Number of PLS components used when none is given.
pub const DEFAULT_COMPONENTS: usize = 5;
/// Evaluation grid size for AMSE when none is given.
pub const DEFAULT_AMSE_GRID: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Nipals,
    Simpls,
    Ridge,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::Nipals, FitMethod::Simpls, FitMethod::Ridge];

    fn pls_algorithm(self) -> Option<PlsAlgorithm> {
        match self {
            FitMethod::Nipals => Some(PlsAlgorithm::Nipals),
            FitMethod::Simpls => Some(PlsAlgorithm::Simpls),
            FitMethod::Ridge => None,
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Nipals => "nipals",
            FitMethod::Simpls => "simpls",
            FitMethod::Ridge => "ridge",
        })
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nipals" => Ok(FitMethod::Nipals),
            "simpls" => Ok(FitMethod::Simpls),
            "ridge" => Ok(FitMethod::Ridge),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// A Gram matrix together with its square-root pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub gram: GramMatrix,
    pub roots: SqrtPair,
}

impl Metric {
    pub fn of(basis: &BasisSystem) -> Result<Self> {
        let gram = basis.gram_matrix();
        let roots = gram.sqrt_pair()?;
        Ok(Self { gram, roots })
    }
}

/// Means removed while building a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeans {
    pub response: Vec<f64>,
    pub predictors: Vec<Vec<f64>>,
}

/// The matrix regression problem behind a function-on-function fit.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    /// `N x Σ K_m`, block `m` is `D_m ζ_m^{1/2}`.
    pub xd: DMatrix<f64>,
    /// `N x K_Y`, `C Φ^{1/2}`.
    pub yd: DMatrix<f64>,
    pub offsets: Vec<usize>,
    pub widths: Vec<usize>,
    pub response_metric: Metric,
    pub predictor_metrics: Vec<Metric>,
}

fn check_predictors(predictors: &[CurveSet], n: usize) -> Result<()> {
    if predictors.is_empty() {
        return Err(Error::InvalidInput("at least one predictor is required".into()));
    }
    for (m, p) in predictors.iter().enumerate() {
        if p.n_curves() != n {
            return Err(Error::DimensionMismatch(format!(
                "predictor {m} has {} curves, expected {n}",
                p.n_curves()
            )));
        }
    }
    Ok(())
}

/// Centers every variable and applies the Gram square roots.
pub fn build_design(response: &CurveSet, predictors: &[CurveSet]) -> Result<(DesignBundle, DesignMeans)> {
    let n = response.n_curves();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two curves".into()));
    }
    check_predictors(predictors, n)?;

    let response_metric = Metric::of(response.basis())?;
    let (c, response_mean) = response.center()?;
    let yd = c.coef() * &response_metric.roots.sqrt;

    let widths: Vec<usize> = predictors.iter().map(|p| p.basis().n_basis()).collect();
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();
    let total: usize = widths.iter().sum();
    let mut xd = DMatrix::zeros(n, total);
    let mut predictor_metrics = Vec::with_capacity(predictors.len());
    let mut predictor_means = Vec::with_capacity(predictors.len());
    for (m, p) in predictors.iter().enumerate() {
        let metric = Metric::of(p.basis())?;
        let (d, mean) = p.center()?;
        let block = d.coef() * &metric.roots.sqrt;
        xd.columns_mut(offsets[m], widths[m]).copy_from(&block);
        predictor_metrics.push(metric);
        predictor_means.push(mean);
    }
    Ok((
        DesignBundle { xd, yd, offsets, widths, response_metric, predictor_metrics },
        DesignMeans { response: response_mean, predictors: predictor_means },
    ))
}

/// Options for the ridge baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    /// Penalties as multiples of `trace(XdᵀXd) / p`, searched by GCV.
    pub relative_grid: Vec<f64>,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        let mut grid = vec![0.0];
        grid.extend(logspace(-8.0, 4.0, 25));
        Self { relative_grid: grid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub theta: f64,
    pub gcv_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Estimator {
    Pls(Box<PlsModel>),
    Ridge(RidgeFit),
}

/// Ridge regression of `yd` on `xd` with the penalty picked by GCV.
/// Returns the coefficient matrix and the fit summary.
pub fn ridge_fit(xd: &DMatrix<f64>, yd: &DMatrix<f64>, opts: &RidgeOptions) -> Result<(DMatrix<f64>, RidgeFit)> {
    let (n, p) = xd.shape();
    if yd.nrows() != n {
        return Err(Error::DimensionMismatch("design and response row counts differ".into()));
    }
    let scale = xd.norm_squared() / p as f64;
    if !(scale > 0.0) {
        return Ok((DMatrix::zeros(p, yd.ncols()), RidgeFit { theta: 0.0, gcv_curve: Vec::new() }));
    }
    let svd = xd.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sig = &svd.singular_values;
    let sig_max2 = sig.max().powi(2);
    let uty = u.tr_mul(yd);
    let nf = n as f64;

    let mut gcv_curve = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &tau in &opts.relative_grid {
        let theta = tau * scale;
        let denoms: Vec<f64> = sig.iter().map(|s| s * s + theta).collect();
        if denoms.iter().any(|d| !(*d > 1e-12 * sig_max2)) {
            continue;
        }
        let shrink: Vec<f64> = sig.iter().zip(&denoms).map(|(s, d)| s * s / d).collect();
        let trace: f64 = shrink.iter().sum();
        if nf - trace <= 1e-8 * nf {
            continue;
        }
        let mut fitted_proj = uty.clone();
        for (i, f) in shrink.iter().enumerate() {
            fitted_proj.row_mut(i).scale_mut(*f);
        }
        let rss = (yd - u * fitted_proj).norm_squared();
        let gcv = nf * rss / (nf - trace).powi(2);
        if !gcv.is_finite() {
            continue;
        }
        gcv_curve.push((theta, gcv));
        if best.is_none_or(|b| gcv < b.1) {
            best = Some((theta, gcv));
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::Singular("ridge normal equations singular for every penalty in the grid".into())
    })?;
    let mut scaled = uty;
    for (i, s) in sig.iter().enumerate() {
        scaled.row_mut(i).scale_mut(s / (s * s + theta));
    }
    Ok((v_t.transpose() * scaled, RidgeFit { theta, gcv_curve }))
}

/// One functional predictor of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorBlock {
    pub basis: BasisSystem,
    pub mean: Vec<f64>,
    pub metric: Metric,
    pub offset: usize,
    /// `K_m x K_Y` coefficient matrix of `β_m`.
    #[serde(with = "matrix_serde")]
    pub coef: DMatrix<f64>,
}

/// A fitted function-on-function regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfrModel {
    pub method: FitMethod,
    pub components: usize,
    pub response_basis: BasisSystem,
    pub response_mean: Vec<f64>,
    pub response_metric: Metric,
    pub predictors: Vec<PredictorBlock>,
    /// Coefficients of the regression in half-metric coordinates.
    #[serde(with = "matrix_serde")]
    pub xi: DMatrix<f64>,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub ridge: RidgeOptions,
}

pub fn fit_ffr(
    response: &CurveSet,
    predictors: &[CurveSet],
    h: usize,
    method: FitMethod,
) -> Result<FfrModel> {
    fit_ffr_with(response, predictors, h, method, &FitOptions::default())
}

pub fn fit_ffr_with(
    response: &CurveSet,
    predictors: &[CurveSet],
    h: usize,
    method: FitMethod,
    opts: &FitOptions,
) -> Result<FfrModel> {
    let (design, means) = build_design(response, predictors)?;
    let (xi, estimator) = match method.pls_algorithm() {
        Some(alg) => {
            let model = pls_fit(&design.xd, &design.yd, h, alg)?;
            (model.coefficients.clone(), Estimator::Pls(Box::new(model)))
        }
        None => {
            let (coef, fit) = ridge_fit(&design.xd, &design.yd, &opts.ridge)?;
            (coef, Estimator::Ridge(fit))
        }
    };
    let phi_inv = &design.response_metric.roots.inv_sqrt;
    let blocks = predictors
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let metric = design.predictor_metrics[m].clone();
            let xi_m = xi.rows(design.offsets[m], design.widths[m]);
            let coef = &metric.roots.inv_sqrt * xi_m * phi_inv;
            PredictorBlock {
                basis: p.basis().clone(),
                mean: means.predictors[m].clone(),
                metric,
                offset: design.offsets[m],
                coef,
            }
        })
        .collect();
    Ok(FfrModel {
        method,
        components: h,
        response_basis: response.basis().clone(),
        response_mean: means.response,
        response_metric: design.response_metric,
        predictors: blocks,
        xi,
        estimator,
    })
}

impl FfrModel {
    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.predictors.iter().map(|b| &b.coef)
    }

    /// True when PLS extraction stopped before the requested component count.
    pub fn truncated(&self) -> bool {
        matches!(&self.estimator, Estimator::Pls(m) if m.truncated)
    }

    /// `β_m` on the grid `sgrid x tgrid`.
    pub fn coefficient_surface(&self, m: usize, sgrid: &[f64], tgrid: &[f64]) -> Result<DMatrix<f64>> {
        let block = self.predictors.get(m).ok_or_else(|| {
            Error::InvalidInput(format!("predictor index {m} out of range (have {})", self.n_predictors()))
        })?;
        let psi = block.basis.eval_basis(sgrid, 0)?;
        let phi = self.response_basis.eval_basis(tgrid, 0)?;
        Ok(psi * &block.coef * phi.transpose())
    }

    /// Response coefficients predicted for new predictor curves.
    pub fn predict(&self, new_predictors: &[CurveSet]) -> Result<CurveSet> {
        if new_predictors.len() != self.n_predictors() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} predictors, got {}",
                self.n_predictors(),
                new_predictors.len()
            )));
        }
        let n = new_predictors[0].n_curves();
        check_predictors(new_predictors, n)?;
        let mut coef = DMatrix::zeros(n, self.response_basis.n_basis());
        for (block, cs) in self.predictors.iter().zip(new_predictors) {
            if cs.basis() != &block.basis {
                return Err(Error::DimensionMismatch(
                    "predictor basis differs from the one the model was fitted with".into(),
                ));
            }
            let centered = subtract_row(cs.coef(), &block.mean);
            coef += centered * &block.metric.gram.values * &block.coef;
        }
        for mut row in coef.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.response_mean) {
                *v += m;
            }
        }
        CurveSet::new(self.response_basis.clone(), coef)
    }

    /// Coefficients of `β_0(t)`: the response mean minus the predictor means
    /// pushed through the fitted surfaces.
    pub fn intercept(&self) -> Vec<f64> {
        let mut out = nalgebra::RowDVector::from_row_slice(&self.response_mean);
        for block in &self.predictors {
            let mean = nalgebra::RowDVector::from_row_slice(&block.mean);
            out -= mean * &block.metric.gram.values * &block.coef;
        }
        out.iter().copied().collect()
    }
}

pub fn coefficient_surface(model: &FfrModel, m: usize, sgrid: &[f64], tgrid: &[f64]) -> Result<DMatrix<f64>> {
    model.coefficient_surface(m, sgrid, tgrid)
}

pub fn predict_response(model: &FfrModel, new_predictors: &[CurveSet]) -> Result<CurveSet> {
    model.predict(new_predictors)
}

/// Average over curves of the mean squared difference on `grid_size`
/// equally spaced points of the shared domain.
pub fn amse(observed: &CurveSet, predicted: &CurveSet, grid_size: usize) -> Result<f64> {
    if observed.n_curves() != predicted.n_curves() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed curves vs {} predicted",
            observed.n_curves(),
            predicted.n_curves()
        )));
    }
    if observed.basis().domain() != predicted.basis().domain() {
        return Err(Error::DimensionMismatch("curve sets live on different domains".into()));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput("AMSE grid needs at least two points".into()));
    }
    let (a, b) = observed.basis().domain();
    let grid = linspace(a, b, grid_size);
    let yo = observed.eval(&grid)?;
    let yp = predicted.eval(&grid)?;
    let mut total = 0.0;
    for i in 0..yo.nrows() {
        let mut s = 0.0;
        for g in 0..grid_size {
            let d = yo[(i, g)] - yp[(i, g)];
            s += d * d;
        }
        total += s / grid_size as f64;
    }
    Ok(total / yo.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_bspline;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, k: usize, seed: u64, domain: (f64, f64)) -> CurveSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bs = make_bspline(domain, k, 4).unwrap();
        CurveSet::new(bs, DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn design_block_layout() {
        let y = random_set(20, 6, 1, (0.0, 1.0));
        let x1 = random_set(20, 5, 2, (0.0, 1.0));
        let x2 = random_set(20, 7, 3, (-1.0, 1.0));
        let (d, means) = build_design(&y, &[x1, x2]).unwrap();
        assert_eq!(d.xd.shape(), (20, 12));
        assert_eq!(d.offsets, vec![0, 5]);
        assert_eq!(d.yd.shape(), (20, 6));
        assert_eq!(means.predictors.len(), 2);
        assert!(build_design(&y, &[random_set(19, 5, 4, (0.0, 1.0))]).is_err());
        assert!(build_design(&y, &[]).is_err());
    }

    #[test]
    fn identity_metric_gives_centered_coefficients() {
        // Order-1 splines with unit-width spans have an identity Gram matrix.
        let bs = make_bspline((0.0, 4.0), 4, 1).unwrap();
        assert!((bs.gram_matrix().values - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = CurveSet::new(bs.clone(), d).unwrap();
        let y = random_set(10, 5, 9, (0.0, 1.0));
        let (design, _) = build_design(&y, std::slice::from_ref(&x)).unwrap();
        let (centered, _) = x.center().unwrap();
        assert!((design.xd - centered.coef()).amax() < 1e-14);
    }

    #[test]
    fn zero_response_gives_zero_blocks() {
        let bs = make_bspline((0.0, 1.0), 6, 4).unwrap();
        let y = CurveSet::new(bs, DMatrix::zeros(15, 6)).unwrap();
        let x = random_set(15, 5, 5, (0.0, 1.0));
        for method in FitMethod::ALL {
            let m = fit_ffr(&y, std::slice::from_ref(&x), 3, method).unwrap();
            assert!(m.blocks().all(|b| b.iter().all(|&v| v == 0.0)), "{method}");
        }
    }

    #[test]
    fn prediction_at_predictor_mean_is_response_mean() {
        let y = random_set(25, 6, 11, (0.0, 1.0));
        let x = random_set(25, 8, 12, (0.0, 2.0));
        let model = fit_ffr(&y, std::slice::from_ref(&x), 4, FitMethod::Simpls).unwrap();
        let mean = x.mean_curve();
        let at_mean = CurveSet::new(x.basis().clone(), DMatrix::from_fn(3, 8, |_, j| mean[j])).unwrap();
        let pred = model.predict(&[at_mean]).unwrap();
        let ym = y.mean_curve();
        for i in 0..3 {
            for (j, m) in ym.iter().enumerate() {
                assert!((pred.coef()[(i, j)] - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predict_rejects_foreign_basis() {
        let y = random_set(12, 6, 1, (0.0, 1.0));
        let x = random_set(12, 6, 2, (0.0, 1.0));
        let model = fit_ffr(&y, std::slice::from_ref(&x), 2, FitMethod::Nipals).unwrap();
        let other = random_set(4, 7, 3, (0.0, 1.0));
        assert!(model.predict(&[other]).is_err());
        assert!(model.predict(&[]).is_err());
        assert!(model.coefficient_surface(1, &[0.5], &[0.5]).is_err());
        assert!(model.coefficient_surface(0, &[1.5], &[0.5]).is_err());
    }

    #[test]
    fn separable_surface() {
        let y = random_set(12, 5, 1, (0.0, 1.0));
        let x = random_set(12, 4, 2, (-1.0, 1.0));
        let mut model = fit_ffr(&y, std::slice::from_ref(&x), 2, FitMethod::Nipals).unwrap();
        let b1 = [0.3, -1.0, 0.7, 0.2];
        let b2 = [1.0, 0.5, -0.4, 0.0, 2.0];
        model.predictors[0].coef = DMatrix::from_fn(4, 5, |i, j| b1[i] * b2[j]);
        let sg = linspace(-1.0, 1.0, 9);
        let tg = linspace(0.0, 1.0, 7);
        let surf = model.coefficient_surface(0, &sg, &tg).unwrap();
        let psi = x.basis().eval_basis(&sg, 0).unwrap();
        let phi = y.basis().eval_basis(&tg, 0).unwrap();
        for (a, _) in sg.iter().enumerate() {
            for (b, _) in tg.iter().enumerate() {
                let fs: f64 = (0..4).map(|k| psi[(a, k)] * b1[k]).sum();
                let ft: f64 = (0..5).map(|k| phi[(b, k)] * b2[k]).sum();
                assert!((surf[(a, b)] - fs * ft).abs() < 1e-12);
            }
        }
        model.predictors[0].coef = DMatrix::zeros(4, 5);
        assert!(model.coefficient_surface(0, &sg, &tg).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn amse_basics() {
        let obs = random_set(6, 7, 3, (0.0, 1.0));
        assert_eq!(amse(&obs, &obs, 101).unwrap(), 0.0);
        let shifted = obs.shifted(&[2.0; 7]).unwrap();
        assert!((amse(&obs, &shifted, 101).unwrap() - 4.0).abs() < 1e-12);
        let other = random_set(6, 7, 4, (0.0, 1.0));
        assert_eq!(amse(&obs, &other, 50).unwrap(), amse(&other, &obs, 50).unwrap());
        assert!(amse(&obs, &random_set(5, 7, 4, (0.0, 1.0)), 10).is_err());
        assert!(amse(&obs, &random_set(6, 7, 4, (0.0, 2.0)), 10).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("SIMPLS".parse::<FitMethod>().unwrap(), FitMethod::Simpls);
        assert!("lasso".parse::<FitMethod>().is_err());
        assert_eq!(FitMethod::Ridge.to_string(), "ridge");
    }

    #[test]
    fn model_json_round_trip() {
        let y = random_set(12, 5, 1, (0.0, 1.0));
        let x = random_set(12, 4, 2, (0.0, 1.0));
        for method in FitMethod::ALL {
            let model = fit_ffr(&y, std::slice::from_ref(&x), 2, method).unwrap();
            let s = serde_json::to_string(&model).unwrap();
            let back: FfrModel = serde_json::from_str(&s).unwrap();
            assert_eq!(back, model);
        }
    }
}
