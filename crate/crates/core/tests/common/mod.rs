#![allow(dead_code)]
//! Reference computations shared by the integration tests. Apart from
//! `fixtures`, nothing here calls into the code it is used to check.

pub mod fixtures;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
}

pub fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Clamped knot vector with `n_basis - order` equally spaced interior knots.
pub fn clamped_knots(a: f64, b: f64, n_basis: usize, order: usize) -> Vec<f64> {
    let interior = n_basis - order;
    let mut t = vec![a; order];
    for i in 1..=interior {
        t.push(a + (b - a) * i as f64 / (interior + 1) as f64);
    }
    t.extend(std::iter::repeat_n(b, order));
    t
}

/// Textbook recursive Cox-de Boor. The last nondegenerate span is closed
/// on the right so the right endpoint is covered.
pub fn cox_de_boor(knots: &[f64], i: usize, order: usize, x: f64) -> f64 {
    if order == 1 {
        let (lo, hi) = (knots[i], knots[i + 1]);
        let last = *knots.last().unwrap();
        if lo < hi && (x >= lo && x < hi || (x == last && hi == last)) {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, x);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + order] - x) / d2 * cox_de_boor(knots, i + 1, order - 1, x);
    }
    v
}

pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1])).sum()
}

/// Composite Simpson on an odd number of equally spaced points.
pub fn simpson(a: f64, b: f64, f: &[f64]) -> f64 {
    assert!(f.len() % 2 == 1 && f.len() >= 3);
    let h = (b - a) / (f.len() - 1) as f64;
    let n = f.len() - 1;
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// Greville abscissae: coefficients that reproduce `x` exactly.
pub fn greville(knots: &[f64], n_basis: usize, order: usize) -> Vec<f64> {
    (0..n_basis)
        .map(|j| knots[j + 1..j + order].iter().sum::<f64>() / (order - 1) as f64)
        .collect()
}

pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
    out
}

/// Least squares on centered data through the normal equations.
pub fn ls_normal_equations(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xc = center_columns(x);
    let yc = center_columns(y);
    let xtx = xc.tr_mul(&xc);
    let xty = xc.tr_mul(&yc);
    xtx.cholesky().expect("full column rank").solve(&xty)
}

/// Dominant left singular vector by power iteration on `S Sᵀ`, sign fixed
/// so the largest-magnitude entry is positive.
pub fn power_iteration(s: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::from_element(s.nrows(), 1.0);
    v /= v.norm();
    for _ in 0..20_000 {
        let mut next = s * (s.transpose() * &v);
        next /= next.norm();
        if (&next - &v).norm() < 1e-15 {
            v = next;
            break;
        }
        v = next;
    }
    let k = v.iamax();
    if v[k] < 0.0 {
        v.neg_mut();
    }
    v
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
