//! Monte-Carlo experiments on simulated functional data.
//!
//! Every random quantity is drawn from its own ChaCha20 generator keyed by
//! the master seed and a variable tag, with the replication index selecting
//! the stream. A replication therefore sees the same draws whatever cell it
//! belongs to and whatever thread runs it.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::fdata::{default_lambda_grid, smooth_curves, CurveSet};
use crate::ffrm::{amse, build_design, fit_ffr, FitMethod, DEFAULT_AMSE_GRID, DEFAULT_COMPONENTS};
use crate::linalg::guarded_cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Tag {
    SPoints = 1,
    TPoints = 2,
    Params = 3,
    XNoise = 4,
    YNoise = 5,
    ErrorCoef = 6,
}

/// Position in the random-number space: master seed plus replication index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub seed: u64,
    pub rep: u64,
}

impl Stream {
    pub fn new(seed: u64, rep: u64) -> Self {
        Self { seed, rep }
    }

    fn rng(&self, tag: Tag) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(tag as u64).to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.rep);
        rng
    }
}

/// One simulated sample, observed on shared sorted grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub s: Vec<f64>,
    pub x: DMatrix<f64>,
    pub t: Vec<f64>,
    pub y: DMatrix<f64>,
}

fn sorted_uniform(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `N x K` matrix whose rows are draws from `N(0, Σ)`, `Σ_kl = ρ 0.5^|k-l|`.
pub fn draw_error_coefficients(n: usize, rho: f64, k: usize, stream: Stream) -> Result<DMatrix<f64>> {
    if !(rho > 0.0) || k == 0 {
        return Err(Error::InvalidInput(format!("need rho > 0 and K >= 1, got rho={rho}, K={k}")));
    }
    let sigma = DMatrix::from_fn(k, k, |a, b| rho * 0.5f64.powi(a.abs_diff(b) as i32));
    let l = guarded_cholesky(sigma, "error covariance")?.l();
    let mut rng = stream.rng(Tag::ErrorCoef);
    let z = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((l * z).transpose())
}

/// Simulates `n` predictor/response pairs with unit observation noise.
pub fn gen_dataset(n: usize, rho: f64, n_points: usize, k_err: usize, stream: Stream) -> Result<Dataset> {
    gen_dataset_scaled(n, rho, n_points, k_err, 1.0, stream)
}

/// As [`gen_dataset`] with observation noise scaled by `obs_noise`.
pub fn gen_dataset_scaled(
    n: usize,
    rho: f64,
    n_points: usize,
    k_err: usize,
    obs_noise: f64,
    stream: Stream,
) -> Result<Dataset> {
    if n == 0 || n_points == 0 {
        return Err(Error::InvalidInput("need at least one curve and one point".into()));
    }
    if !(obs_noise >= 0.0) || !obs_noise.is_finite() {
        return Err(Error::InvalidInput(format!("observation noise scale {obs_noise} invalid")));
    }
    let s = sorted_uniform(&mut stream.rng(Tag::SPoints), n_points);
    let t = sorted_uniform(&mut stream.rng(Tag::TPoints), n_points);

    let mut prng = stream.rng(Tag::Params);
    let params: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let z1: f64 = prng.sample(StandardNormal);
            let z2: f64 = prng.sample(StandardNormal);
            (2.0 + 0.02 * z1, -3.0 + 0.04 * z2)
        })
        .collect();

    let err_basis = BasisSystem::uniform(-1.0, 1.0, k_err, DEFAULT_ORDER)?;
    let phi = err_basis.eval_basis(&t, 0)?;
    let e = draw_error_coefficients(n, rho, k_err, stream)?;
    let eps_y = e * phi.transpose();

    let mut xr = stream.rng(Tag::XNoise);
    let mut yr = stream.rng(Tag::YNoise);
    let mut x = DMatrix::zeros(n, n_points);
    let mut y = DMatrix::zeros(n, n_points);
    for (i, &(a1, a2)) in params.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            let z: f64 = xr.sample(StandardNormal);
            x[(i, j)] = (a1 * sj).exp().cos() + a2 * sj + obs_noise * z;
        }
        for (j, &tj) in t.iter().enumerate() {
            let z: f64 = yr.sample(StandardNormal);
            y[(i, j)] = (a1 * tj).exp().sin() + a2 * tj + 2.0 * tj * tj + eps_y[(i, j)] + obs_noise * z;
        }
    }
    Ok(Dataset { s, x, t, y })
}

fn default_n() -> usize {
    100
}
fn default_n_points() -> usize {
    50
}
fn default_h() -> usize {
    DEFAULT_COMPONENTS
}
fn default_mc() -> usize {
    100
}
fn default_methods() -> Vec<FitMethod> {
    FitMethod::ALL.to_vec()
}
fn default_noise() -> f64 {
    1.0
}
fn default_grid() -> usize {
    DEFAULT_AMSE_GRID
}

/// Settings for a single (ρ, K) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub rho: f64,
    pub n_points: usize,
    pub k: usize,
    pub h: usize,
    pub mc: usize,
    pub seed: u64,
    pub methods: Vec<FitMethod>,
    /// Scale of the pointwise observation noise; 1 reproduces the standard design.
    pub obs_noise: f64,
    pub amse_grid: usize,
}

impl SimConfig {
    pub fn new(rho: f64, k: usize, seed: u64) -> Self {
        Self {
            n: default_n(),
            rho,
            n_points: default_n_points(),
            k,
            h: default_h(),
            mc: default_mc(),
            seed,
            methods: default_methods(),
            obs_noise: default_noise(),
            amse_grid: default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return bad(format!("N must be even and at least 4, got {}", self.n));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.mc < 1 {
            return bad("mc must be at least 1".into());
        }
        if self.n_points < 3 {
            return bad(format!("need at least 3 points per curve, got {}", self.n_points));
        }
        if self.k < DEFAULT_ORDER {
            return bad(format!("K must be at least {DEFAULT_ORDER}, got {}", self.k));
        }
        let max_h = (self.n / 2 - 1).min(self.k);
        if self.h < 1 || self.h > max_h {
            return bad(format!("h = {} outside 1..={max_h}", self.h));
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if !(self.obs_noise >= 0.0) || !self.obs_noise.is_finite() {
            return bad(format!("obs_noise must be finite and non-negative, got {}", self.obs_noise));
        }
        if self.amse_grid < 2 {
            return bad("amse_grid must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: FitMethod,
    pub amse: f64,
    pub amse_p: f64,
    pub fit_seconds: f64,
    /// Failure reason; metrics are NaN when set.
    pub failure: Option<String>,
}

impl MethodOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failure(method: FitMethod, reason: String) -> Self {
        Self { method, amse: f64::NAN, amse_p: f64::NAN, fit_seconds: f64::NAN, failure: Some(reason) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: u64,
    pub outcomes: Vec<MethodOutcome>,
    /// Whether the unpenalized normal equations `XdᵀXd` of the training
    /// design fail the guarded Cholesky.
    pub ls_singular: bool,
}

fn score(
    method: FitMethod,
    cfg: &SimConfig,
    y: &CurveSet,
    x: &CurveSet,
) -> Result<MethodOutcome> {
    let half = cfg.n / 2;
    let (y_train, x_train) = (y.slice(0, half)?, x.slice(0, half)?);
    let (y_test, x_test) = (y.slice(half, cfg.n)?, x.slice(half, cfg.n)?);
    let start = Instant::now();
    let model = fit_ffr(&y_train, std::slice::from_ref(&x_train), cfg.h, method)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let fitted = model.predict(&[x_train])?;
    let predicted = model.predict(&[x_test])?;
    let a = amse(&y_train, &fitted, cfg.amse_grid)?;
    let ap = amse(&y_test, &predicted, cfg.amse_grid)?;
    if !a.is_finite() || !ap.is_finite() {
        return Err(Error::Singular(format!("{method}: non-finite AMSE")));
    }
    Ok(MethodOutcome { method, amse: a, amse_p: ap, fit_seconds, failure: None })
}

/// Generates, smooths and fits one replication. Smoothing failure is an
/// error; a failing method is recorded without affecting the others.
pub fn run_replication(cfg: &SimConfig, rep: u64) -> Result<Replication> {
    cfg.validate()?;
    let data = gen_dataset_scaled(cfg.n, cfg.rho, cfg.n_points, cfg.k, cfg.obs_noise, Stream::new(cfg.seed, rep))?;
    let basis = BasisSystem::uniform(-1.0, 1.0, cfg.k, DEFAULT_ORDER)?;
    let grid = default_lambda_grid();
    let (x, _) = smooth_curves(&data.x, &data.s, &basis, &grid)?;
    let (y, _) = smooth_curves(&data.y, &data.t, &basis, &grid)?;

    let half = cfg.n / 2;
    let (design, _) = build_design(&y.slice(0, half)?, &[x.slice(0, half)?])?;
    let ls_singular = guarded_cholesky(design.xd.tr_mul(&design.xd), "normal equations").is_err();

    let outcomes = cfg
        .methods
        .iter()
        .map(|&m| score(m, cfg, &y, &x).unwrap_or_else(|e| MethodOutcome::failure(m, e.to_string())))
        .collect();
    Ok(Replication { rep, outcomes, ls_singular })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// A grid of cells sharing everything but ρ and K. This is the JSON
/// configuration read by `fplsr simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "N", alias = "n", default = "default_n")]
    pub n: usize,
    pub rho: OneOrMany<f64>,
    #[serde(rename = "K", alias = "k")]
    pub k: OneOrMany<usize>,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_mc")]
    pub mc: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<FitMethod>,
    #[serde(default = "default_noise")]
    pub obs_noise: f64,
    #[serde(default = "default_grid")]
    pub amse_grid: usize,
    /// Worker threads; `None` lets the pool decide.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(rhos: Vec<f64>, ks: Vec<usize>, mc: usize, seed: u64) -> Self {
        Self {
            n: default_n(),
            rho: OneOrMany::Many(rhos),
            k: OneOrMany::Many(ks),
            n_points: default_n_points(),
            h: default_h(),
            mc,
            seed,
            methods: default_methods(),
            obs_noise: default_noise(),
            amse_grid: default_grid(),
            threads: None,
        }
    }

    /// Cells in output order: ρ outer, K inner.
    pub fn cells(&self) -> Result<Vec<SimConfig>> {
        let (rhos, ks) = (self.rho.to_vec(), self.k.to_vec());
        if rhos.is_empty() || ks.is_empty() {
            return Err(Error::InvalidInput("rho and K lists must be nonempty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        let mut out = Vec::new();
        for &rho in &rhos {
            for &k in &ks {
                let cfg = SimConfig {
                    n: self.n,
                    rho,
                    n_points: self.n_points,
                    k,
                    h: self.h,
                    mc: self.mc,
                    seed: self.seed,
                    methods: self.methods.clone(),
                    obs_noise: self.obs_noise,
                    amse_grid: self.amse_grid,
                };
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

/// Aggregate over the replications of one cell for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: FitMethod,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub mean_amse: Option<f64>,
    pub se_amse: Option<f64>,
    pub mean_amse_p: Option<f64>,
    pub se_amse_p: Option<f64>,
    pub mean_fit_seconds: Option<f64>,
    pub failures: usize,
}

/// One row of the per-replication loss export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub method: FitMethod,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub rep: u64,
    pub amse: f64,
    pub amse_p: f64,
    pub fit_seconds: f64,
    pub ls_singular: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<ExperimentRecord>,
    pub losses: Vec<LossRow>,
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

fn aggregate(cell: &SimConfig, method: FitMethod, outcomes: &[&MethodOutcome]) -> ExperimentRecord {
    let ok: Vec<&&MethodOutcome> = outcomes.iter().filter(|o| !o.failed()).collect();
    let pick = |f: fn(&MethodOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<f64>>();
    let (mean_amse, se_amse) = mean_se(&pick(|o| o.amse));
    let (mean_amse_p, se_amse_p) = mean_se(&pick(|o| o.amse_p));
    let (mean_fit_seconds, _) = mean_se(&pick(|o| o.fit_seconds));
    ExperimentRecord {
        method,
        k: cell.k,
        rho: cell.rho,
        mean_amse,
        se_amse,
        mean_amse_p,
        se_amse_p,
        mean_fit_seconds,
        failures: outcomes.len() - ok.len(),
    }
}

/// Runs every replication of every cell, in parallel, and aggregates in a
/// fixed order so results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let cells = cfg.cells()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.mc as u64).map(move |r| (c, r)))
        .collect();
    let work = || -> Vec<Replication> {
        jobs.par_iter()
            .map(|&(c, rep)| {
                let cell = &cells[c];
                run_replication(cell, rep).unwrap_or_else(|e| Replication {
                    rep,
                    outcomes: cell
                        .methods
                        .iter()
                        .map(|&m| MethodOutcome::failure(m, format!("replication aborted: {e}")))
                        .collect(),
                    ls_singular: false,
                })
            })
            .collect()
    };
    let reps = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut records = Vec::new();
    let mut losses = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let cell_reps = &reps[c * cfg.mc..(c + 1) * cfg.mc];
        for (mi, &method) in cell.methods.iter().enumerate() {
            let outcomes: Vec<&MethodOutcome> = cell_reps.iter().map(|r| &r.outcomes[mi]).collect();
            records.push(aggregate(cell, method, &outcomes));
            for (r, o) in cell_reps.iter().zip(&outcomes) {
                losses.push(LossRow {
                    method,
                    k: cell.k,
                    rho: cell.rho,
                    rep: r.rep,
                    amse: o.amse,
                    amse_p: o.amse_p,
                    fit_seconds: o.fit_seconds,
                    ls_singular: r.ls_singular,
                    failure: o.failure.clone(),
                });
            }
        }
    }
    Ok(ExperimentResult { records, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_data() {
        let a = gen_dataset(8, 1.0, 20, 10, Stream::new(5, 3)).unwrap();
        let b = gen_dataset(8, 1.0, 20, 10, Stream::new(5, 3)).unwrap();
        assert_eq!(a, b);
        let c = gen_dataset(8, 1.0, 20, 10, Stream::new(5, 4)).unwrap();
        assert_ne!(a.x, c.x);
        assert!(a.s.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.t.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn noise_free_predictor_matches_formula() {
        let d = gen_dataset_scaled(3, 1e-8, 15, 6, 0.0, Stream::new(1, 0)).unwrap();
        // With zero noise every X curve lies near cos(exp(2s)) - 3s.
        for i in 0..3 {
            for (j, s) in d.s.iter().enumerate() {
                assert!((d.x[(i, j)] - ((2.0 * s).exp().cos() - 3.0 * s)).abs() < 0.5);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::new(0.5, 10, 1);
        assert!(c.validate().is_ok());
        c.n = 101;
        assert!(c.validate().is_err());
        c = SimConfig::new(0.0, 10, 1);
        assert!(c.validate().is_err());
        c = SimConfig::new(0.5, 10, 1);
        c.h = 11;
        assert!(c.validate().is_err());
        c = SimConfig::new(0.5, 10, 1);
        c.mc = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn experiment_config_json() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"mc":1,"rho":[0.5],"K":[10],"seed":42}"#).unwrap();
        assert_eq!(cfg.n, 100);
        assert_eq!(cfg.methods.len(), 3);
        assert_eq!(cfg.cells().unwrap().len(), 1);
        let scalar: ExperimentConfig = serde_json::from_str(r#"{"rho":2,"K":20}"#).unwrap();
        assert_eq!(scalar.rho.to_vec(), vec![2.0]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"rho":2,"K":20,"bogus":1}"#).is_err());
    }

    #[test]
    fn mean_and_standard_error() {
        assert_eq!(mean_se(&[]), (None, None));
        assert_eq!(mean_se(&[3.0]), (Some(3.0), Some(0.0)));
        let (m, s) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((s.unwrap() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_failed_cell_has_null_means() {
        let cell = SimConfig::new(1.0, 10, 0);
        let fails: Vec<MethodOutcome> =
            (0..3).map(|_| MethodOutcome::failure(FitMethod::Ridge, "x".into())).collect();
        let refs: Vec<&MethodOutcome> = fails.iter().collect();
        let r = aggregate(&cell, FitMethod::Ridge, &refs);
        assert_eq!(r.failures, 3);
        assert!(r.mean_amse.is_none() && r.mean_amse_p.is_none());
    }
}
