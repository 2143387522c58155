//! Exact check-loss minimization by vertex-to-vertex simplex steps.
//!
//! A vertex of the LP `min sum tau*u_i + (1-tau)*v_i  s.t.  X b + u - v = y`
//! is identified by `p` rows of the design that are interpolated exactly. Each
//! step releases one of those rows along an edge of the polyhedron and moves to
//! the breakpoint that minimizes the objective along the edge. Candidate edges
//! are scanned in increasing row index (Bland's rule); every accepted step
//! strictly decreases the objective, so no basis repeats.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Relative pivot tolerance for rank detection.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct QrSolution<T> {
    pub coef: Vec<T>,
    /// `y - X coef`; exactly zero on the basis rows.
    pub residuals: Vec<T>,
    /// Indices of the interpolated rows, sorted.
    pub basis: Vec<usize>,
    /// Subgradient weights on the basis rows; each lies in `[tau - 1, tau]` at an optimum.
    pub dual: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

#[inline]
pub fn check_loss<T: Scalar>(tau: T, r: T) -> T {
    if r < T::zero() {
        r * (tau - T::one())
    } else {
        r * tau
    }
}

/// Row-major `n x p` design matrix.
#[derive(Debug, Clone)]
pub struct Design<'a, T> {
    pub x: &'a [T],
    pub p: usize,
}

impl<T: Scalar> Design<'_, T> {
    fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn n(&self) -> usize {
        self.x.len() / self.p
    }
}

/// Picks `p` linearly independent rows by Gaussian elimination with partial
/// pivoting on column-scaled data; fails if the column rank is below `p`.
fn initial_basis<T: Scalar>(d: &Design<'_, T>) -> Result<Vec<usize>> {
    let (n, p) = (d.n(), d.p);
    let mut scale = vec![T::zero(); p];
    for i in 0..n {
        for (k, &v) in d.row(i).iter().enumerate() {
            scale[k] = scale[k].max(v.abs());
        }
    }
    if let Some(k) = scale.iter().position(|s| *s == T::zero()) {
        return Err(Error::Singular(format!("column {k} is identically zero")));
    }
    let mut m: Vec<T> = (0..n).flat_map(|i| d.row(i).iter().zip(&scale).map(|(&v, &s)| v / s).collect::<Vec<_>>()).collect();
    let mut used = vec![false; n];
    let mut basis = Vec::with_capacity(p);
    let tol = T::lit(RANK_TOL);
    for k in 0..p {
        let mut piv: Option<(usize, T)> = None;
        for i in (0..n).filter(|&i| !used[i]) {
            let v = m[i * p + k].abs();
            if piv.is_none_or(|(_, best)| v > best) {
                piv = Some((i, v));
            }
        }
        let (r, v) = piv.ok_or_else(|| Error::Singular("fewer rows than columns".into()))?;
        if v <= tol {
            return Err(Error::Singular(format!("design has column rank below {p} (column {k} is dependent)")));
        }
        used[r] = true;
        basis.push(r);
        let pivot_row: Vec<T> = m[r * p..(r + 1) * p].to_vec();
        for i in (0..n).filter(|&i| !used[i]) {
            let f = m[i * p + k] / pivot_row[k];
            if f != T::zero() {
                for c in k..p {
                    m[i * p + c] = m[i * p + c] - f * pivot_row[c];
                }
            }
        }
    }
    Ok(basis)
}

/// Inverse of a small dense matrix via Gauss-Jordan with partial pivoting.
pub(crate) fn invert<T: Scalar>(a: &[T], p: usize) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut inv = vec![T::zero(); p * p];
    for i in 0..p {
        inv[i * p + i] = T::one();
    }
    let scale = a.iter().fold(T::zero(), |s, v| s.max(v.abs()));
    for c in 0..p {
        let r = (c..p).max_by(|&i, &j| m[i * p + c].abs().partial_cmp(&m[j * p + c].abs()).unwrap())?;
        if m[r * p + c].abs() <= scale * T::epsilon() * T::lit(16.0) {
            return None;
        }
        if r != c {
            for k in 0..p {
                m.swap(r * p + k, c * p + k);
                inv.swap(r * p + k, c * p + k);
            }
        }
        let d = m[c * p + c];
        for k in 0..p {
            m[c * p + k] = m[c * p + k] / d;
            inv[c * p + k] = inv[c * p + k] / d;
        }
        for i in 0..p {
            if i != c {
                let f = m[i * p + c];
                if f != T::zero() {
                    for k in 0..p {
                        m[i * p + k] = m[i * p + k] - f * m[c * p + k];
                        inv[i * p + k] = inv[i * p + k] - f * inv[c * p + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Minimizes `sum_i rho_tau(y_i - x_i' b)` exactly.
pub fn solve_dense<T: Scalar>(d: &Design<'_, T>, y: &[T], tau: T) -> Result<QrSolution<T>> {
    let p = d.p;
    if p == 0 || d.x.len() % p != 0 {
        return Err(Error::Alignment("design length is not a multiple of the column count".into()));
    }
    let n = d.n();
    if y.len() != n {
        return Err(Error::Alignment(format!("design has {n} rows but response has {}", y.len())));
    }
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    if n < p {
        return Err(Error::Singular(format!("{n} rows cannot identify {p} coefficients")));
    }
    if d.x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("design or response contains non-finite values".into()));
    }

    let mut basis = initial_basis(d)?;
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&i| in_basis[i] = true);
    let max_iter = 50 * n + 1000;
    let one_minus_tau = T::one() - tau;
    let mut g = vec![T::zero(); n * p];
    let mut r = vec![T::zero(); n];
    let zero_tol = T::epsilon() * T::lit(1024.0);

    for iteration in 0..=max_iter {
        let xh: Vec<T> = basis.iter().flat_map(|&i| d.row(i).to_vec()).collect();
        let b_inv = invert(&xh, p).ok_or_else(|| Error::Internal("basis matrix became singular".into()))?;
        let coef: Vec<T> = (0..p)
            .map(|k| (0..p).fold(T::zero(), |s, j| s + b_inv[k * p + j] * y[basis[j]]))
            .collect();

        // residuals and edge slopes G[i][j] = x_i' B e_j
        let mut slope_scale = T::zero();
        for i in 0..n {
            let row = d.row(i);
            r[i] = if in_basis[i] {
                T::zero()
            } else {
                let (fit, size) = row.iter().zip(&coef).fold((T::zero(), y[i].abs()), |(f, m), (&a, &c)| (f + a * c, m + (a * c).abs()));
                // residuals within rounding noise are zero; otherwise degenerate
                // vertices produce zero-length steps
                let ri = y[i] - fit;
                if ri.abs() <= zero_tol * size {
                    T::zero()
                } else {
                    ri
                }
            };
            for j in 0..p {
                let gij = (0..p).fold(T::zero(), |s, k| s + row[k] * b_inv[k * p + j]);
                g[i * p + j] = gij;
                slope_scale = slope_scale.max(gij.abs());
            }
        }

        // Directional derivative along edge (j, sigma): the basis row j gets residual -sigma*t.
        let derivative = |j: usize, sigma: T| -> T {
            let mut dv = if sigma > T::zero() { one_minus_tau } else { tau };
            for i in 0..n {
                if in_basis[i] {
                    continue;
                }
                let s = -sigma * g[i * p + j];
                if s == T::zero() {
                    continue;
                }
                let positive_side = r[i] > T::zero() || (r[i] == T::zero() && s > T::zero());
                dv = dv + if positive_side { tau * s } else { (tau - T::one()) * s };
            }
            dv
        };

        let tol = T::lit(1e-12) * (T::one() + slope_scale * T::from_usize_lossy(n));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&j| basis[j]);
        let mut edge = None;
        'scan: for &j in &order {
            for sigma in [T::one(), -T::one()] {
                let dv = derivative(j, sigma);
                if dv < -tol {
                    edge = Some((j, sigma, dv));
                    break 'scan;
                }
            }
        }

        let Some((j, sigma, mut dv)) = edge else {
            // optimal: recover the subgradient weights on the basis
            let mut gsum = vec![T::zero(); p];
            for i in (0..n).filter(|&i| !in_basis[i]) {
                let psi = if r[i] < T::zero() { tau - T::one() } else { tau };
                for (k, gk) in gsum.iter_mut().enumerate() {
                    *gk = *gk + d.row(i)[k] * psi;
                }
            }
            // u = -X_h^{-T} g
            let dual: Vec<T> = (0..p).map(|j| -(0..p).fold(T::zero(), |s, k| s + b_inv[k * p + j] * gsum[k])).collect();
            let objective = r.iter().fold(T::zero(), |s, &ri| s + check_loss(tau, ri));
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by_key(|&j| basis[j]);
            return Ok(QrSolution {
                coef,
                residuals: r,
                basis: order.iter().map(|&j| basis[j]).collect(),
                dual: order.iter().map(|&j| dual[j]).collect(),
                objective,
                iterations: iteration,
            });
        };

        // exact line search over the breakpoints of the piecewise-linear objective
        let mut breaks: Vec<(T, usize)> = (0..n)
            .filter(|&i| !in_basis[i] && r[i] != T::zero())
            .filter_map(|i| {
                let s = -sigma * g[i * p + j];
                (s != T::zero() && (r[i] > T::zero()) != (s > T::zero())).then(|| (-r[i] / s, i))
            })
            .collect();
        breaks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut entering = None;
        for &(_, i) in &breaks {
            dv = dv + g[i * p + j].abs();
            if dv >= T::zero() {
                entering = Some(i);
                break;
            }
        }
        let k = entering.ok_or_else(|| Error::Internal("objective unbounded along an edge".into()))?;
        in_basis[basis[j]] = false;
        in_basis[k] = true;
        basis[j] = k;
    }
    Err(Error::Internal(format!("simplex did not terminate within {max_iter} iterations")))
}
