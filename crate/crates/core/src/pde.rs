//! Finite differences for `½v'' = v^q` on `(0, L)` with Dirichlet data `n`.

use crate::error::{invalid, Error, Result};
use crate::oracle::solve_vn;

const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDGrid {
    length: f64,
    m: usize,
}

impl FDGrid {
    /// `m` interior points, spacing `L / (m + 1)`.
    pub fn new(length: f64, m: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return invalid(format!("interval length must be positive (got {length})"));
        }
        if m < 3 {
            return invalid(format!("need at least 3 interior points (got {m})"));
        }
        Ok(Self { length, m })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn interior(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.length / (self.m + 1) as f64
    }

    /// Grid point `j` in `0..=m+1`.
    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    /// Same interval with the spacing halved.
    pub fn refined(&self) -> Self {
        Self { length: self.length, m: 2 * self.m + 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FDSolution {
    pub grid: FDGrid,
    /// `m + 2` values including both boundary points.
    pub values: Vec<f64>,
    pub boundary_value: f64,
    pub newton_iters: usize,
    pub residual_inf: f64,
}

impl FDSolution {
    /// Piecewise-linear interpolation at `x` in `[0, L]`.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let l = self.grid.length;
        if !(0.0..=l).contains(&x) {
            return invalid(format!("x = {x} outside [0, {l}]"));
        }
        let s = x / self.grid.h();
        let j = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - j as f64;
        Ok((1.0 - w) * self.values[j] + w * self.values[j + 1])
    }

    /// Value at the grid point nearest the middle of the interval.
    pub fn midpoint(&self) -> f64 {
        self.values[self.values.len() / 2]
    }
}

fn residual(v: &[f64], q: f64, h: f64, out: &mut [f64]) -> f64 {
    let c = 0.5 / (h * h);
    let mut worst = 0.0f64;
    for i in 1..v.len() - 1 {
        let r = c * (v[i - 1] - 2.0 * v[i] + v[i + 1]) - v[i].powf(q);
        out[i - 1] = r;
        worst = worst.max(r.abs());
    }
    worst
}

fn l2(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `sub·x_{i-1} + diag_i·x_i + sup·x_{i+1} = rhs_i` in place (constant
/// off-diagonals). `rhs` receives the solution.
fn thomas(off: f64, diag: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut b = diag[0];
    c[0] = off / b;
    rhs[0] /= b;
    for i in 1..n {
        b = diag[i] - off * c[i - 1];
        c[i] = off / b;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

fn tolerance(n: f64, q: f64) -> f64 {
    1e-10 * (1.0 + n.powf(q))
}

/// Damped Newton for the discrete problem. The default initial guess is the
/// constant `min(n, v_n)` where `v_n` is the exact trough value.
pub fn fd_solve_1d(q: f64, length: f64, n: f64, grid: &FDGrid, v_init: Option<&[f64]>) -> Result<FDSolution> {
    if !(q.is_finite() && q > 1.0) {
        return invalid(format!("q must exceed 1 (got {q})"));
    }
    if (length - grid.length).abs() > 1e-12 * length {
        return invalid(format!("grid length {} does not match L = {length}", grid.length));
    }
    if !(n.is_finite() && n >= 0.0) {
        return invalid(format!("boundary value must be finite and non-negative (got {n})"));
    }
    let m = grid.m;
    let h = grid.h();
    if n == 0.0 {
        return Ok(FDSolution { grid: *grid, values: vec![0.0; m + 2], boundary_value: 0.0, newton_iters: 0, residual_inf: 0.0 });
    }
    let mut v = match v_init {
        Some(init) => {
            if init.len() != m + 2 {
                return invalid(format!("initial guess has {} values, expected {}", init.len(), m + 2));
            }
            init.iter().map(|x| x.max(0.0)).collect()
        }
        None => vec![n.min(solve_vn(n, length, q)?); m + 2],
    };
    v[0] = n;
    v[m + 1] = n;

    let tol = tolerance(n, q);
    let off = 0.5 / (h * h);
    let mut r = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut trial = v.clone();
    let mut res = residual(&v, q, h, &mut r);
    let mut iters = 0;
    while res > tol {
        if iters == MAX_NEWTON {
            return Err(Error::Numerical(format!(
                "Newton did not converge in {MAX_NEWTON} steps (residual {res:e}, tolerance {tol:e})"
            )));
        }
        iters += 1;
        for i in 0..m {
            diag[i] = -2.0 * off - q * v[i + 1].powf(q - 1.0);
        }
        let mut delta: Vec<f64> = r.iter().map(|x| -x).collect();
        thomas(off, &diag, &mut delta);
        let norm = l2(&r);
        let mut lambda = 1.0;
        loop {
            for i in 0..m {
                trial[i + 1] = (v[i + 1] + lambda * delta[i]).max(0.0);
            }
            let trial_res = residual(&trial, q, h, &mut r_trial);
            if l2(&r_trial) < (1.0 - 1e-4 * lambda) * norm || lambda < 1e-10 || trial_res <= tol {
                std::mem::swap(&mut v, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                res = trial_res;
                break;
            }
            lambda *= 0.5;
        }
    }
    Ok(FDSolution { grid: *grid, values: v, boundary_value: n, newton_iters: iters, residual_inf: res })
}

/// Solve for each boundary value in turn, warm-starting every rung from the
/// previous solution.
pub fn boundary_ladder_fd(q: f64, length: f64, n_list: &[f64], grid: &FDGrid) -> Result<Vec<FDSolution>> {
    if n_list.is_empty() {
        return invalid("boundary ladder needs at least one value");
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("boundary values must be strictly increasing");
    }
    let mut out: Vec<FDSolution> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let sol = fd_solve_1d(q, length, n, grid, out.last().map(|s| s.values.as_slice()))?;
        out.push(sol);
    }
    Ok(out)
}

/// Max-norm discrete residual, recomputed from the stored values.
pub fn residual_check(solution: &FDSolution, q: f64) -> f64 {
    let v = &solution.values;
    let h = solution.grid.length / (v.len() - 1) as f64;
    let c = 0.5 / (h * h);
    v.windows(3).map(|w| (c * (w[0] - 2.0 * w[1] + w[2]) - w[1].powf(q)).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{profile_v, ExitProfile};

    fn max_error(sol: &FDSolution, profile: &ExitProfile) -> f64 {
        (0..sol.values.len())
            .map(|j| (sol.values[j] - profile_v(sol.grid.x(j), profile).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(FDGrid::new(2.0, 2).is_err());
        assert!(FDGrid::new(0.0, 10).is_err());
        let g = FDGrid::new(2.0, 1999).unwrap();
        assert!((g.h() - 1e-3).abs() < 1e-15);
        assert_eq!(g.refined().interior(), 3999);
    }

    #[test]
    fn matches_exact_profile() {
        let grid = FDGrid::new(2.0, 1999).unwrap();
        let sol = fd_solve_1d(3.0, 2.0, 5.0, &grid, None).unwrap();
        let profile = ExitProfile::finite(5.0, 2.0, 3.0).unwrap();
        assert!(max_error(&sol, &profile) <= 1e-3);
        assert!(sol.residual_inf <= 1e-10 * 126.0);
        assert!(sol.values.iter().all(|&v| (0.0..=5.0).contains(&v)));
    }

    #[test]
    fn second_order() {
        let profile = ExitProfile::finite(5.0, 2.0, 3.0).unwrap();
        let mut grid = FDGrid::new(2.0, 249).unwrap();
        let mut errs = Vec::new();
        for _ in 0..3 {
            let sol = fd_solve_1d(3.0, 2.0, 5.0, &grid, None).unwrap();
            errs.push(max_error(&sol, &profile));
            grid = grid.refined();
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn zero_boundary_gives_zero() {
        let grid = FDGrid::new(2.0, 9).unwrap();
        let sol = fd_solve_1d(3.0, 2.0, 0.0, &grid, None).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
        assert_eq!(residual_check(&sol, 3.0), 0.0);
    }

    #[test]
    fn symmetric() {
        let grid = FDGrid::new(2.0, 399).unwrap();
        let sol = fd_solve_1d(2.5, 2.0, 7.0, &grid, None).unwrap();
        let v = &sol.values;
        for j in 0..v.len() {
            assert!((v[j] - v[v.len() - 1 - j]).abs() < 1e-10);
        }
    }

    #[test]
    fn ladder_increases_toward_vstar() {
        let grid = FDGrid::new(2.0, 1999).unwrap();
        let ladder = boundary_ladder_fd(3.0, 2.0, &[5.0, 50.0, 500.0, 5000.0], &grid).unwrap();
        for w in ladder.windows(2) {
            assert!(w[1].midpoint() > w[0].midpoint());
            let min_gap = w[0].values.iter().zip(&w[1].values).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            assert!(min_gap >= -1e-8);
        }
        let vstar = crate::oracle::solve_vstar(2.0, 3.0).unwrap();
        assert!((ladder[3].midpoint() - vstar).abs() < 1e-2);
        let single = boundary_ladder_fd(3.0, 2.0, &[5.0], &grid).unwrap();
        assert_eq!(single[0], fd_solve_1d(3.0, 2.0, 5.0, &grid, None).unwrap());
        assert!(boundary_ladder_fd(3.0, 2.0, &[5.0, 5.0], &grid).is_err());
    }

    #[test]
    fn residual_check_agrees_and_detects_perturbation() {
        let grid = FDGrid::new(2.0, 999).unwrap();
        let mut sol = fd_solve_1d(3.0, 2.0, 5.0, &grid, None).unwrap();
        assert!((residual_check(&sol, 3.0) - sol.residual_inf).abs() <= 1e-12);
        let mid = sol.values.len() / 2;
        sol.values[mid] += 1e-3;
        let h = grid.h();
        let jump = residual_check(&sol, 3.0);
        let expect = 1e-3 * (1.0 / (h * h) + 3.0 * sol.values[mid].powi(2));
        assert!((jump - expect).abs() < 0.05 * expect, "{jump} vs {expect}");
    }
}
