//! Clamped B-spline basis systems.
//!
//! A [`BasisSystem`] is defined by its order (degree + 1), a closed domain
//! `[a, b]` and a sorted list of interior knots. Boundary knots are repeated
//! `order` times, so the system has `interior_knots.len() + order` functions,
//! forms a partition of unity on `[a, b]`, and interpolates at the endpoints.

mod quadrature;
mod sqrt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix_serde;

pub use quadrature::gauss_legendre;
pub use sqrt::{psd_sqrt, SqrtPair, EIGEN_CLAMP};

/// Spline order used when none is given (cubic splines).
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct BasisSystem {
    order: usize,
    lower: f64,
    upper: f64,
    interior_knots: Vec<f64>,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    order: usize,
    domain: [f64; 2],
    n_basis: usize,
    interior_knots: Vec<f64>,
}

impl TryFrom<BasisRepr> for BasisSystem {
    type Error = Error;

    fn try_from(r: BasisRepr) -> Result<Self> {
        let bs = BasisSystem::new(r.domain[0], r.domain[1], r.order, r.interior_knots)?;
        if bs.n_basis() != r.n_basis {
            return Err(Error::InvalidInput(format!(
                "n_basis {} disagrees with order + interior knots = {}",
                r.n_basis,
                bs.n_basis()
            )));
        }
        Ok(bs)
    }
}

impl From<BasisSystem> for BasisRepr {
    fn from(bs: BasisSystem) -> Self {
        BasisRepr {
            order: bs.order,
            domain: [bs.lower, bs.upper],
            n_basis: bs.n_basis(),
            interior_knots: bs.interior_knots,
        }
    }
}

/// Uniform clamped B-spline system with `n_basis` functions on `[domain.0, domain.1]`.
pub fn make_bspline(domain: (f64, f64), n_basis: usize, order: usize) -> Result<BasisSystem> {
    BasisSystem::uniform(domain.0, domain.1, n_basis, order)
}

impl BasisSystem {
    pub fn new(lower: f64, upper: f64, order: usize, interior_knots: Vec<f64>) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidInput("spline order must be at least 1".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!(
                "degenerate domain [{lower}, {upper}]"
            )));
        }
        if interior_knots.iter().any(|&k| !(k > lower && k < upper)) {
            return Err(Error::InvalidInput(
                "interior knots must lie strictly inside the domain".into(),
            ));
        }
        if interior_knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("interior knots must be sorted".into()));
        }
        let mut run = 1;
        for w in interior_knots.windows(2) {
            run = if w[1] == w[0] { run + 1 } else { 1 };
            if run > order {
                return Err(Error::InvalidInput(format!(
                    "knot {} repeated more than order {order} times",
                    w[0]
                )));
            }
        }
        let mut knots = Vec::with_capacity(interior_knots.len() + 2 * order);
        knots.extend(std::iter::repeat_n(lower, order));
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(upper, order));
        Ok(Self { order, lower, upper, interior_knots, knots })
    }

    /// Equally spaced interior knots.
    pub fn uniform(lower: f64, upper: f64, n_basis: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidInput("spline order must be at least 1".into()));
        }
        if n_basis < order {
            return Err(Error::InvalidInput(format!(
                "n_basis ({n_basis}) must be at least the order ({order})"
            )));
        }
        if !(lower < upper) {
            return Err(Error::InvalidInput(format!(
                "degenerate domain [{lower}, {upper}]"
            )));
        }
        let n_interior = n_basis - order;
        let width = upper - lower;
        let interior = (1..=n_interior)
            .map(|i| lower + width * i as f64 / (n_interior + 1) as f64)
            .collect();
        Self::new(lower, upper, order, interior)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn n_basis(&self) -> usize {
        self.interior_knots.len() + self.order
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Full clamped knot vector of length `n_basis + order`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: x, lower: self.lower, upper: self.upper })
        }
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` holding `x`. Spans are
    /// right-continuous except at the upper endpoint, which belongs to the last
    /// nonempty span.
    fn find_span(&self, x: f64) -> usize {
        let n = self.n_basis();
        let p = self.degree();
        if x >= self.knots[n] {
            return n - 1;
        }
        // Largest i in [p, n-1] with knots[i] <= x.
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions (and derivatives up to `nderiv`) at `x`.
    ///
    /// Returns the span index `i`; `out[k][j]` holds the `k`-th derivative of
    /// basis function `i - degree + j`.
    fn local_derivatives(&self, x: f64, nderiv: usize, out: &mut [Vec<f64>]) -> usize {
        let p = self.degree();
        let u = &self.knots;
        let span = self.find_span(x);
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=p {
            out[0][j] = ndu[j][p];
        }
        let top = nderiv.min(p);
        for row in out.iter_mut().skip(top + 1).take(nderiv - top) {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        if top == 0 {
            return span;
        }

        let pi = p as isize;
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let ri = r as isize;
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=top {
                let ki = k as isize;
                let mut d = 0.0;
                let rk = ri - ki;
                let pk = (pi - ki) as usize;
                if ri >= ki {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if ri - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                out[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in out.iter_mut().enumerate().take(top + 1).skip(1) {
            row.iter_mut().for_each(|v| *v *= factor);
            factor *= (p - k) as f64;
        }
        span
    }

    /// Matrix of `deriv_order`-th derivatives of every basis function at every point
    /// (`points.len() x n_basis`).
    pub fn eval_basis(&self, points: &[f64], deriv_order: usize) -> Result<DMatrix<f64>> {
        let k = self.n_basis();
        let p = self.degree();
        let mut out = DMatrix::zeros(points.len(), k);
        let mut local = vec![vec![0.0; p + 1]; deriv_order + 1];
        for (g, &x) in points.iter().enumerate() {
            self.check_point(x)?;
            let span = self.local_derivatives(x, deriv_order, &mut local);
            for j in 0..=p {
                out[(g, span - p + j)] = local[deriv_order][j];
            }
        }
        Ok(out)
    }

    /// Integrates `f(basis_j^(d), basis_k^(d))` products span by span with an
    /// `order`-point Gauss–Legendre rule, exact for the spline products.
    fn integrate_products(&self, deriv_order: usize) -> DMatrix<f64> {
        let k = self.n_basis();
        let p = self.degree();
        let (nodes, weights) = gauss_legendre(self.order);
        let mut m = DMatrix::zeros(k, k);
        let mut local = vec![vec![0.0; p + 1]; deriv_order + 1];
        for span in p..k {
            let (t0, t1) = (self.knots[span], self.knots[span + 1]);
            if t1 <= t0 {
                continue;
            }
            let half = 0.5 * (t1 - t0);
            let mid = 0.5 * (t1 + t0);
            for (xi, wi) in nodes.iter().zip(&weights) {
                let x = mid + half * xi;
                let s = self.local_derivatives(x, deriv_order, &mut local);
                debug_assert_eq!(s, span);
                let vals = &local[deriv_order];
                for a in 0..=p {
                    for b in 0..=p {
                        m[(span - p + a, span - p + b)] += wi * half * vals[a] * vals[b];
                    }
                }
            }
        }
        // Exact symmetry.
        (&m + m.transpose()) * 0.5
    }

    /// Gram matrix of L2 inner products between basis functions.
    pub fn gram_matrix(&self) -> GramMatrix {
        GramMatrix { values: self.integrate_products(0), basis: self.clone() }
    }

    /// Roughness penalty `R_jk = ∫ φ_j^(d) φ_k^(d)`.
    pub fn penalty_matrix(&self, deriv_order: usize) -> Result<DMatrix<f64>> {
        if deriv_order >= self.order {
            return Err(Error::InvalidInput(format!(
                "penalty derivative order {deriv_order} must be below the spline order {}",
                self.order
            )));
        }
        Ok(self.integrate_products(deriv_order))
    }

    /// Maps coefficients to the coefficients of the `deriv_order`-th derivative,
    /// expressed in the clamped basis of order `order - deriv_order` on the same
    /// knots. Shape `(n_basis - deriv_order) x n_basis`.
    pub fn derivative_operator(&self, deriv_order: usize) -> Result<DMatrix<f64>> {
        if deriv_order >= self.order {
            return Err(Error::InvalidInput(format!(
                "derivative order {deriv_order} must be below the spline order {}",
                self.order
            )));
        }
        let k = self.n_basis();
        let mut op = DMatrix::<f64>::identity(k, k);
        for step in 0..deriv_order {
            let degree = self.degree() - step;
            // Knot vector of the current basis is knots[step .. len - step].
            let t = &self.knots[step..self.knots.len() - step];
            let rows = op.nrows();
            let mut next = DMatrix::zeros(rows - 1, k);
            for i in 0..rows - 1 {
                let gap = t[i + degree + 1] - t[i + 1];
                if gap > 0.0 {
                    let f = degree as f64 / gap;
                    for c in 0..k {
                        next[(i, c)] = f * (op[(i + 1, c)] - op[(i, c)]);
                    }
                }
            }
            op = next;
        }
        Ok(op)
    }

    /// Factor `P` with `Pᵀ P = penalty_matrix(deriv_order)`.
    ///
    /// Built from the derivative operator and a Cholesky factor of the lower
    /// order Gram matrix, so polynomials of degree below `deriv_order` are
    /// annihilated exactly rather than up to quadrature rounding.
    pub fn penalty_factor(&self, deriv_order: usize) -> Result<DMatrix<f64>> {
        let op = self.derivative_operator(deriv_order)?;
        let lower = BasisSystem::new(
            self.lower,
            self.upper,
            self.order - deriv_order,
            self.interior_knots.clone(),
        );
        let factor = match lower {
            Ok(low) => nalgebra::Cholesky::new(low.gram_matrix().values).map(|c| c.l().transpose()),
            Err(_) => None,
        };
        match factor {
            Some(lt) => Ok(lt * op),
            // Knot multiplicity too high for the lower-order system.
            None => {
                let r = self.penalty_matrix(deriv_order)?;
                let eig = nalgebra::SymmetricEigen::new(r);
                let mut f = eig.eigenvectors.transpose();
                for (i, l) in eig.eigenvalues.iter().enumerate() {
                    f.row_mut(i).scale_mut(l.max(0.0).sqrt());
                }
                Ok(f)
            }
        }
    }
}

/// Inner-product matrix of a basis system, tagged with the basis it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    #[serde(with = "matrix_serde")]
    pub values: DMatrix<f64>,
    pub basis: BasisSystem,
}

impl GramMatrix {
    pub fn sqrt_pair(&self) -> Result<SqrtPair> {
        psd_sqrt(&self.values)
    }
}

/// Free-function form of [`BasisSystem::eval_basis`].
pub fn eval_basis(bs: &BasisSystem, points: &[f64], deriv_order: usize) -> Result<DMatrix<f64>> {
    bs.eval_basis(points, deriv_order)
}

/// Free-function form of [`BasisSystem::gram_matrix`].
pub fn gram_matrix(bs: &BasisSystem) -> GramMatrix {
    bs.gram_matrix()
}

/// Free-function form of [`BasisSystem::penalty_matrix`].
pub fn penalty_matrix(bs: &BasisSystem, deriv_order: usize) -> Result<DMatrix<f64>> {
    bs.penalty_matrix(deriv_order)
}
