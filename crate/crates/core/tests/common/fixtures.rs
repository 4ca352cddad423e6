//! Test fixtures built with the library's own types.

use std::f64::consts::PI;

use fplsr::basis::{make_bspline, BasisSystem};
use fplsr::fdata::{smooth_curves, CurveSet};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{center_columns, clamped_knots, cox_de_boor, grid, random_matrix};

/// `(M^{1/2}, M^{-1/2})` of a symmetric positive definite matrix.
pub fn eigen_roots(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    let v = &e.eigenvectors;
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    let si = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
    (v * s * v.transpose(), v * si * v.transpose())
}

pub fn eval_oracle(bs: &BasisSystem, x: &[f64]) -> DMatrix<f64> {
    let (a, b) = bs.domain();
    let knots = clamped_knots(a, b, bs.n_basis(), bs.order());
    DMatrix::from_fn(x.len(), bs.n_basis(), |p, j| cox_de_boor(&knots, j, bs.order(), x[p]))
}

pub struct Planted {
    pub x: CurveSet,
    pub y: CurveSet,
    pub b0: DMatrix<f64>,
}

/// Noiseless data from a rank-one surface. The design is isotropic in the
/// half-metric coordinates: its centered columns are orthogonal with equal
/// norms.
pub fn planted_isotropic(n: usize, kx: usize, ky: usize, seed: u64) -> Planted {
    let xb = make_bspline((0.0, 1.0), kx, 4).unwrap();
    let yb = make_bspline((-1.0, 1.0), ky, 4).unwrap();
    let zeta = xb.gram_matrix().values;
    let (_, zeta_inv_half) = eigen_roots(&zeta);
    let q = center_columns(&random_matrix(n, kx, seed)).qr().q();
    let offset = random_matrix(1, kx, seed + 1);
    let d = DMatrix::from_fn(n, kx, |_, j| offset[(0, j)]) + q * &zeta_inv_half * 3.0;
    let b1 = random_matrix(kx, 1, seed + 2);
    let b2 = random_matrix(ky, 1, seed + 3);
    let b0 = &b1 * b2.transpose();
    let intercept = random_matrix(1, ky, seed + 4);
    let c = &d * &zeta * &b0 + DMatrix::from_fn(n, ky, |_, j| intercept[(0, j)]);
    Planted { x: CurveSet::new(xb, d).unwrap(), y: CurveSet::new(yb, c).unwrap(), b0 }
}

/// Eight phase-shifted sines on 101 points with N(0, 0.25²) noise.
pub fn noisy_sines(seed: u64) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let x = grid(0.0, 1.0, 101);
    let truth = DMatrix::from_fn(8, 101, |i, j| (2.0 * PI * x[j] + phases[i]).sin());
    let noise = DMatrix::from_fn(8, 101, |_, _| 0.25 * rng.sample::<f64, _>(StandardNormal));
    (x, &truth + noise, truth, phases)
}

pub fn fit_error(obs: &DMatrix<f64>, x: &[f64], lambda: f64, phases: &[f64]) -> f64 {
    let bs = make_bspline((0.0, 1.0), 20, 4).unwrap();
    let (cs, _) = smooth_curves(obs, x, &bs, &[lambda]).unwrap();
    let fine = grid(0.0, 1.0, 1001);
    let v = cs.eval(&fine).unwrap();
    let mut s = 0.0;
    for (i, ph) in phases.iter().enumerate() {
        for (g, t) in fine.iter().enumerate() {
            s += (v[(i, g)] - (2.0 * PI * t + ph).sin()).powi(2);
        }
    }
    s / (phases.len() * fine.len()) as f64
}
