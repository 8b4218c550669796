//! Least-squares conditional-expectation estimator: polynomial feature maps
//! (optionally augmented with inverse powers of the boundary distance) and
//! order-deterministic normal equations solved through a symmetric eigen-decomposition.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::stats::{pairwise_reduce, CHUNK};

/// Floor on the boundary distance inside inverse-distance features.
const MIN_DIST: f64 = 1e-8;

/// Rows per coefficient demanded by [`DegeneratePolicy::LowerDegree`].
pub const ROWS_PER_COEFFICIENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Monomials in the (standardized) state up to total degree `m`.
    Polynomial,
    /// Monomials plus `dist^{-j}`, `j = 1..=m`.
    PolynomialInverseDistance,
}

/// What to do when a regression has fewer rows than basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    Fail,
    /// Use the largest degree with at least [`ROWS_PER_COEFFICIENT`] rows
    /// per coefficient (degree 0, a plain mean, as the last resort).
    LowerDegree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionConfig {
    pub basis: BasisKind,
    pub degree: usize,
    pub ridge: f64,
    pub on_degenerate: DegeneratePolicy,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self { basis: BasisKind::Polynomial, degree: 3, ridge: 0.0, on_degenerate: DegeneratePolicy::Fail }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return invalid(format!("ridge must be non-negative (got {})", self.ridge));
        }
        if self.degree > 12 {
            return invalid(format!("degree {} is unreasonably large", self.degree));
        }
        Ok(())
    }
}

/// Exponent tuples of all monomials in `vars` variables of total degree
/// at most `degree`, graded order.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0u8; vars];
        fill(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() || cur.is_empty() {
        if let Some(last) = cur.last_mut() {
            *last = remaining as u8;
        }
        out.push(cur.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        fill(out, cur, pos + 1, remaining - e);
    }
    cur[pos] = 0;
}

/// Number of basis functions for a configuration on `vars` variables.
pub fn basis_size(kind: BasisKind, vars: usize, degree: usize) -> usize {
    basis_size_multi(kind, vars, 1, degree)
}

/// Basis size with `n_dist` separate boundary distances, each contributing
/// its own inverse powers.
pub fn basis_size_multi(kind: BasisKind, vars: usize, n_dist: usize, degree: usize) -> usize {
    let mono = monomials(vars, degree).len();
    match kind {
        BasisKind::Polynomial => mono,
        BasisKind::PolynomialInverseDistance => mono + n_dist * degree,
    }
}

/// Feature map frozen at one regression step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    center: Vec<f64>,
    scale: Vec<f64>,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    inverse_powers: usize,
    dist_scale: Vec<f64>,
}

impl FeatureMap {
    pub fn size(&self) -> usize {
        self.exponents.len() + self.inverse_powers * self.dist_scale.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn vars(&self) -> usize {
        self.center.len()
    }

    /// Number of boundary distances the map expects.
    pub fn distances(&self) -> usize {
        self.dist_scale.len()
    }

    /// Standardize with the given per-variable center and scale; one
    /// reference length per boundary distance.
    pub fn new(kind: BasisKind, degree: usize, center: Vec<f64>, scale: Vec<f64>, dist_scale: Vec<f64>) -> Self {
        let exponents = monomials(center.len(), degree);
        let inverse_powers = match kind {
            BasisKind::Polynomial => 0,
            BasisKind::PolynomialInverseDistance => degree,
        };
        Self { center, scale, degree, exponents, inverse_powers, dist_scale }
    }

    /// Fit centering and scaling to `rows` sample points produced by `row`,
    /// which fills the state and returns its boundary distance.
    pub fn fit<F>(kind: BasisKind, degree: usize, vars: usize, rows: usize, row: F) -> Self
    where
        F: Fn(usize, &mut [f64]) -> f64 + Sync,
    {
        Self::fit_multi(kind, degree, vars, 1, rows, |i, x, d| d[0] = row(i, x))
    }

    /// As [`FeatureMap::fit`] with `n_dist` boundary distances per row.
    pub fn fit_multi<F>(kind: BasisKind, degree: usize, vars: usize, n_dist: usize, rows: usize, row: F) -> Self
    where
        F: Fn(usize, &mut [f64], &mut [f64]) + Sync,
    {
        let width = vars + n_dist;
        // One pass for sums, one for centered squares; each chunk reuses a
        // single row buffer.
        let chunked = |f: &(dyn Fn(&[f64], &mut [f64]) + Sync)| {
            let parts: Vec<Vec<f64>> = (0..rows.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; width];
                    let mut buf = vec![0.0; width];
                    for i in c * CHUNK..((c + 1) * CHUNK).min(rows) {
                        let (x, d) = buf.split_at_mut(vars);
                        row(i, x, d);
                        f(&buf, &mut acc);
                    }
                    acc
                })
                .collect();
            pairwise_reduce(parts, width)
        };
        let n = rows.max(1) as f64;
        let sums = chunked(&|x, acc| {
            for (a, v) in acc.iter_mut().zip(x) {
                *a += v;
            }
        });
        let center: Vec<f64> = sums[..vars].iter().map(|s| s / n).collect();
        let sq = chunked(&|x, acc| {
            for ((a, v), m) in acc.iter_mut().zip(x).zip(&center) {
                *a += (v - m) * (v - m);
            }
        });
        let scale = sq[..vars]
            .iter()
            .map(|s| {
                let v = s / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let dist_scale = sums[vars..]
            .iter()
            .map(|s| {
                let m = s / n;
                if kind == BasisKind::PolynomialInverseDistance && m > 0.0 {
                    m
                } else {
                    1.0
                }
            })
            .collect();
        Self::new(kind, degree, center, scale, dist_scale)
    }

    /// Evaluate the basis at a point; `dist` is the boundary distance used by
    /// inverse-distance features.
    pub fn eval(&self, x: &[f64], dist: f64, out: &mut [f64]) {
        self.eval_multi(x, &[dist], out);
    }

    /// Evaluate with one distance per entry of [`FeatureMap::distances`].
    pub fn eval_multi(&self, x: &[f64], dists: &[f64], out: &mut [f64]) {
        let vars = self.center.len();
        let deg = self.degree;
        // powers[j * (deg+1) + e] = z_j^e
        let mut powers = [0.0f64; 64];
        let mut heap;
        let table: &mut [f64] = if vars * (deg + 1) <= 64 {
            &mut powers[..vars * (deg + 1)]
        } else {
            heap = vec![0.0; vars * (deg + 1)];
            &mut heap
        };
        for j in 0..vars {
            let z = (x[j] - self.center[j]) / self.scale[j];
            let mut acc = 1.0;
            for e in 0..=deg {
                table[j * (deg + 1) + e] = acc;
                acc *= z;
            }
        }
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (j, &e) in exps.iter().enumerate() {
                if e > 0 {
                    v *= table[j * (deg + 1) + e as usize];
                }
            }
            *slot = v;
        }
        if self.inverse_powers > 0 {
            let tail = &mut out[self.exponents.len()..self.size()];
            for ((block, scale), d) in tail.chunks_mut(self.inverse_powers).zip(&self.dist_scale).zip(dists) {
                let r = scale / d.max(MIN_DIST);
                let mut acc = 1.0;
                for slot in block {
                    acc *= r;
                    *slot = acc;
                }
            }
        }
    }
}

/// Accumulated `XᵀX` and `XᵀY` for several right-hand sides.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    size: usize,
    targets: usize,
    rows: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
}

impl NormalEquations {
    /// Accumulate over `rows` rows. `row(i, features, targets)` fills one
    /// row. Chunks are summed in parallel and combined pairwise in a fixed
    /// order, so the result does not depend on the thread count.
    pub fn accumulate<F>(size: usize, targets: usize, rows: usize, row: F) -> Self
    where
        F: Fn(usize, &mut [f64], &mut [f64]) + Sync,
    {
        let width = size * size + size * targets;
        let parts: Vec<Vec<f64>> = (0..rows.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; width];
                let mut f = vec![0.0; size];
                let mut y = vec![0.0; targets];
                for i in c * CHUNK..((c + 1) * CHUNK).min(rows) {
                    row(i, &mut f, &mut y);
                    for a in 0..size {
                        let fa = f[a];
                        let base = a * size;
                        for b in a..size {
                            acc[base + b] += fa * f[b];
                        }
                        let tb = size * size + a * targets;
                        for (t, yt) in y.iter().enumerate() {
                            acc[tb + t] += fa * yt;
                        }
                    }
                }
                acc
            })
            .collect();
        let acc = pairwise_reduce(parts, width);
        let mut xtx = acc[..size * size].to_vec();
        for a in 0..size {
            for b in 0..a {
                xtx[a * size + b] = xtx[b * size + a];
            }
        }
        Self { size, targets, rows, xtx, xty: acc[size * size..].to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Ridge-regularized least squares on column-standardized features.
    /// Rank deficiency is handled by the eigen pseudo-inverse (minimum-norm
    /// solution). Returns one coefficient vector per target.
    pub fn solve(&self, ridge: f64) -> Result<Vec<Vec<f64>>> {
        let p = self.size;
        if self.rows == 0 {
            return Err(Error::Numerical("regression with no rows".into()));
        }
        let n = self.rows as f64;
        let scale: Vec<f64> = (0..p)
            .map(|j| {
                let s = (self.xtx[j * p + j] / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let a = DMatrix::from_fn(p, p, |i, j| {
            self.xtx[i * p + j] / (n * scale[i] * scale[j]) + if i == j { ridge } else { 0.0 }
        });
        let eig = a.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cutoff = lmax * 1e-12;
        let mut out = Vec::with_capacity(self.targets);
        for t in 0..self.targets {
            let b = DVector::from_fn(p, |i, _| self.xty[i * self.targets + t] / (n * scale[i]));
            // Pseudo-inverse over the eigenpairs above the cutoff.
            let mut beta = DVector::zeros(p);
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda > cutoff {
                    let v = eig.eigenvectors.column(j);
                    beta += v * (v.dot(&b) / lambda);
                }
            }
            if beta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite regression coefficients".into()));
            }
            out.push(beta.iter().zip(&scale).map(|(b, s)| b / s).collect());
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
