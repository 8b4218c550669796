//! Least-squares Monte Carlo for `dY = -f(t, Y, Z) dt + Z dW` on `[0, S]`
//! with truncated terminal data, and the truncation ladder built on it.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::forward::{ExitInfo, PathBundle};
use crate::model::{Driver, TerminalSpec};
use crate::regression::{
    basis_size_multi, dot, DegeneratePolicy, FeatureMap, NormalEquations, RegressionConfig, ROWS_PER_COEFFICIENT,
};
use crate::rng::{IncrementStream, Purpose};
use crate::stats::{mean_stderr, pairwise_sum};

/// Realized `ξ ∧ k` for one path. Censored paths pay 0.
pub fn terminal_payoff(spec: &TerminalSpec, exit_s: &ExitInfo, exit_tau: Option<&ExitInfo>) -> Result<f64> {
    spec.validate()?;
    if spec.needs_tau() && exit_tau.is_none() {
        return invalid(format!("terminal condition {spec:?} needs the second stopping time"));
    }
    if !exit_s.exited {
        return Ok(0.0);
    }
    let tau_le_s = || {
        let t = exit_tau.expect("checked above");
        t.exited && t.index <= exit_s.index
    };
    Ok(match spec {
        TerminalSpec::Constant { k } => *k,
        TerminalSpec::Markovian { g, k } => {
            let v = g(&exit_s.state);
            if v.is_nan() {
                return Err(Error::Numerical(format!("boundary data is NaN at {:?}", exit_s.state)));
            }
            v.max(0.0).min(*k)
        }
        TerminalSpec::Xi1 { k } => {
            if tau_le_s() {
                *k
            } else {
                0.0
            }
        }
        TerminalSpec::Xi2 { k } => {
            if tau_le_s() {
                0.0
            } else {
                *k
            }
        }
    })
}

fn driver_slope(driver: &Driver, t: f64, y: f64, z: &[f64]) -> f64 {
    if driver.is_canonical() {
        return -driver.q() * y.abs().powf(driver.q() - 1.0) / driver.eta(t);
    }
    let h = 1e-7 * (1.0 + y.abs());
    (driver.eval(t, y + h, z) - driver.eval(t, y - h, z)) / (2.0 * h)
}

fn implicit_step_z(c: f64, driver: &Driver, dt: f64, t: f64, z: &[f64]) -> Result<f64> {
    if dt == 0.0 {
        return Ok(c);
    }
    if !(dt > 0.0) {
        return invalid(format!("time step must be non-negative (got {dt})"));
    }
    let hi0 = c.max(0.0);
    if hi0 == 0.0 {
        return Ok(0.0);
    }
    let g = |y: f64| y - dt * driver.eval(t, y, z) - c;
    let (mut lo, mut hi) = (0.0, hi0);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::Numerical(format!(
            "implicit step has no root in [0, {hi0}] (c = {c}, dt = {dt}, t = {t})"
        )));
    }
    if g_lo == 0.0 {
        return Ok(0.0);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    let mut y = hi;
    for _ in 0..100 {
        let gy = g(y);
        if gy == 0.0 {
            return Ok(y);
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let slope = 1.0 - dt * driver_slope(driver, t, y, z);
        let mut next = y - gy / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::Numerical(format!("implicit step did not converge (c = {c}, dt = {dt}, t = {t})")))
}

/// Implicit Euler step `y - dt·f(t, y, 0) = c` on `[0, max(c, 0)]`,
/// safeguarded Newton with bisection fallback. For the canonical driver this
/// is `y + dt·y^q/η = c`.
pub fn implicit_driver_step(c: f64, driver: &Driver, dt: f64, t: f64) -> Result<f64> {
    implicit_step_z(c, driver, dt, t, &[])
}

/// Step that integrates the absorption `-y^q/η` exactly over `[t, t + dt]`
/// (through the transform `Θ`) after an explicit step of the remainder of the
/// driver. Exact for the canonical driver with constant `η`.
pub fn exact_flow_step(c: f64, driver: &Driver, dt: f64, t: f64, z: &[f64]) -> f64 {
    let c = c.max(0.0);
    let x = c + dt * driver.remainder(t, c, z);
    if !driver.has_stiff_part() {
        return x;
    }
    if x <= 0.0 {
        return 0.0;
    }
    let q = driver.q();
    let eta = driver.eta(t + 0.5 * dt);
    (x.powf(1.0 - q) + (q - 1.0) * dt / eta).powf(-1.0 / (q - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepScheme {
    ImplicitEuler,
    ExactStiffFlow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcConfig {
    pub regression: RegressionConfig,
    pub scheme: StepScheme,
    pub estimate_z: bool,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        Self { regression: RegressionConfig::default(), scheme: StepScheme::ExactStiffFlow, estimate_z: false }
    }
}

/// Regression at one step for one regime.
#[derive(Debug, Clone)]
pub struct RegimeFit {
    pub map: FeatureMap,
    pub coef: Vec<f64>,
    /// One coefficient vector per Brownian coordinate.
    pub z_coef: Option<Vec<Vec<f64>>>,
    pub rows: usize,
}

/// Per-step fits, indexed by regime: 0 = `τ` not yet occurred (or no `τ`),
/// 1 = `τ` already occurred.
#[derive(Debug, Clone, Default)]
pub struct StepFit {
    pub regimes: [Option<RegimeFit>; 2],
}

/// Regression-estimated solution on the time grid.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub y0: f64,
    pub y0_stderr: f64,
    pub k: f64,
    pub spec: TerminalSpec,
    pub steps: Vec<StepFit>,
    pub active_counts: Vec<usize>,
    /// Per-path values at step 1 (`V_1`); common random numbers make
    /// differences of these across rungs low-variance.
    pub first_step_values: Vec<f64>,
    pub censored: usize,
    /// `k · censored / n_paths`: worst-case effect of zero payoff on
    /// censored paths.
    pub censoring_bias_bound: f64,
    driver: Driver,
    scheme: StepScheme,
    dt: f64,
    layout: Layout,
    with_z: bool,
}

/// Regression inputs per regime. Before `τ` (regime 0 of a split problem)
/// the features also see the second diffusion and the distance that
/// governs `τ`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    dim: usize,
    aux_dim: usize,
    split: bool,
    tau_dist: bool,
}

impl Layout {
    fn new(bundle: &PathBundle, split: bool) -> Self {
        let tau_dist = split && bundle.tau().is_some_and(|t| t.aux_domain.is_some());
        Self { dim: bundle.dim(), aux_dim: if split { bundle.aux_dim() } else { 0 }, split, tau_dist }
    }

    fn regime(&self, bundle: &PathBundle, path: usize, i: usize) -> usize {
        usize::from(self.split && bundle.tau_occurred(path, i))
    }

    /// `(variables, distances)` for a regime.
    fn shape(&self, regime: usize) -> (usize, usize) {
        if regime == 0 {
            (self.dim + self.aux_dim, 1 + usize::from(self.tau_dist))
        } else {
            (self.dim, 1)
        }
    }

    fn load(&self, bundle: &PathBundle, path: usize, i: usize, regime: usize, x: &mut [f64], d: &mut [f64]) {
        let s = bundle.state(path, i);
        x[..self.dim].copy_from_slice(s);
        d[0] = bundle.domain().map_or(1.0, |dom| dom.signed_distance_unchecked(s));
        if regime != 0 {
            return;
        }
        let aux = bundle.aux_state(path, i);
        if let Some(a) = aux {
            x[self.dim..].copy_from_slice(a);
        }
        if self.tau_dist {
            let dom = bundle.tau().and_then(|t| t.aux_domain.as_ref()).expect("checked in Layout::new");
            d[1] = dom.signed_distance_unchecked(aux.unwrap_or(s));
        }
    }
}

impl ValueField {
    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn has_z(&self) -> bool {
        self.with_z
    }

    fn regime(&self, bundle: &PathBundle, path: usize, i: usize) -> usize {
        self.layout.regime(bundle, path, i)
    }

    fn features(&self, fit: &RegimeFit, bundle: &PathBundle, path: usize, i: usize, regime: usize, out: &mut [f64]) {
        let (vars, n_dist) = self.layout.shape(regime);
        let (mut xs, mut ds) = ([0.0; 8], [0.0; 2]);
        let (mut xv, mut dv) = (Vec::new(), Vec::new());
        let x = if vars <= xs.len() {
            &mut xs[..vars]
        } else {
            xv.resize(vars, 0.0);
            &mut xv[..]
        };
        let d = if n_dist <= ds.len() {
            &mut ds[..n_dist]
        } else {
            dv.resize(n_dist, 0.0);
            &mut dv[..]
        };
        self.layout.load(bundle, path, i, regime, x, d);
        fit.map.eval_multi(x, d, out);
    }

    /// Regressed continuation at an active `(path, i)` through `coef`.
    fn fitted(&self, fit: &RegimeFit, bundle: &PathBundle, path: usize, i: usize, regime: usize, coef: &[f64]) -> f64 {
        let mut buf = [0.0; 64];
        let size = fit.map.size();
        if size <= buf.len() {
            self.features(fit, bundle, path, i, regime, &mut buf[..size]);
            dot(&buf[..size], coef)
        } else {
            let mut f = vec![0.0; size];
            self.features(fit, bundle, path, i, regime, &mut f);
            dot(&f, coef)
        }
    }

    fn step_value(&self, c: f64, i: usize, z: &[f64]) -> Result<f64> {
        let t = i as f64 * self.dt;
        let y = match self.scheme {
            StepScheme::ExactStiffFlow => exact_flow_step(c, &self.driver, self.dt, t, z),
            StepScheme::ImplicitEuler => implicit_step_z(c, &self.driver, self.dt, t, z)?,
        };
        Ok(y.clamp(0.0, self.k))
    }

    /// Regressed continuation value at `(path, i)`, if the path is active.
    pub fn continuation(&self, bundle: &PathBundle, path: usize, i: usize) -> Option<f64> {
        if i >= bundle.stop_index(path) {
            return None;
        }
        let r = self.regime(bundle, path, i);
        let fit = self.steps.get(i)?.regimes[r].as_ref()?;
        Some(self.fitted(fit, bundle, path, i, r, &fit.coef))
    }

    /// `Ẑ` at `(path, i)` for an active path.
    pub fn z_at(&self, bundle: &PathBundle, path: usize, i: usize) -> Option<Vec<f64>> {
        if i >= bundle.stop_index(path) {
            return None;
        }
        let r = self.regime(bundle, path, i);
        let fit = self.steps.get(i)?.regimes[r].as_ref()?;
        let zc = fit.z_coef.as_ref()?;
        Some(zc.iter().map(|c| self.fitted(fit, bundle, path, i, r, c)).collect())
    }

    /// `Ŷ` at `(path, i)`: the realized payoff at or after the stop index,
    /// the stepped and clipped regression estimate before it.
    pub fn value_at(&self, bundle: &PathBundle, path: usize, i: usize) -> Result<f64> {
        if i >= bundle.stop_index(path) {
            return terminal_payoff(&self.spec, bundle.exit_s(path), bundle.tau().map(|t| &t.exits[path]));
        }
        let c = self
            .continuation(bundle, path, i)
            .ok_or_else(|| Error::UndefinedEstimate(format!("no regression at step {i} for path {path}")))?;
        let z = if self.has_z() { self.z_at(bundle, path, i).unwrap_or_default() } else { Vec::new() };
        self.step_value(c, i, &z)
    }
}

/// Backward least-squares sweep over the bundle.
///
/// At step `i` every path still inside the domain regresses its value at
/// `i + 1` (the realized payoff if it stops there) on features of its state
/// at `i`; the fitted continuation is then stepped through the driver and
/// clipped to `[0, k]`. For `ξ₁`/`ξ₂` data the paths are split by whether
/// `τ` has already occurred, and the state of an independent second
/// diffusion joins the features while it has not.
pub fn lsmc_solve(bundle: &PathBundle, driver: &Driver, spec: &TerminalSpec, config: &LsmcConfig) -> Result<ValueField> {
    spec.validate()?;
    config.regression.validate()?;
    if spec.needs_tau() && bundle.tau().is_none() {
        return invalid(format!("{spec:?} needs a bundle with the second stopping time"));
    }
    let n = bundle.n_paths();
    let grid = *bundle.grid();
    let dt = grid.dt();
    let k = spec.k();
    let dim = bundle.dim();
    let split_regimes = spec.needs_tau();
    let layout = Layout::new(bundle, split_regimes);
    let reg = config.regression;

    let tau_exits = bundle.tau().map(|t| &t.exits);
    let payoff: Vec<f64> = (0..n)
        .map(|p| terminal_payoff(spec, bundle.exit_s(p), tau_exits.map(|e| &e[p])))
        .collect::<Result<_>>()?;
    let stop: Vec<usize> = (0..n).map(|p| bundle.stop_index(p)).collect();
    let censored = bundle.censored_count();

    let mut field = ValueField {
        y0: 0.0,
        y0_stderr: 0.0,
        k,
        spec: spec.clone(),
        steps: vec![StepFit::default(); grid.n_steps()],
        active_counts: vec![0; grid.n_steps()],
        first_step_values: Vec::new(),
        censored,
        censoring_bias_bound: k * censored as f64 / n as f64,
        driver: driver.clone(),
        scheme: config.scheme,
        dt,
        layout,
        with_z: config.estimate_z,
    };

    // Paths ordered by decreasing stop index: the active set at step `i` is
    // a prefix of this order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&p| std::cmp::Reverse(stop[p]));
    let mut active = 0;

    // Values are kept in `order` position, not path index.
    let mut value: Vec<f64> = order.iter().map(|&p| payoff[p]).collect();
    let mut fresh = vec![0.0; n];
    for i in (0..grid.n_steps()).rev() {
        while active < n && stop[order[active]] > i {
            active += 1;
        }
        field.active_counts[i] = active;
        if active == 0 {
            continue;
        }
        if i == 0 {
            let mut by_path: Vec<(usize, f64)> = (0..active).map(|j| (order[j], value[j])).collect();
            by_path.sort_unstable_by_key(|e| e.0);
            field.first_step_values = by_path.into_iter().map(|e| e.1).collect();
        }
        let t = grid.time(i);
        for regime in 0..2 {
            let group: Vec<usize> = if split_regimes {
                (0..active).filter(|&j| usize::from(bundle.tau_occurred(order[j], i)) == regime).collect()
            } else if regime == 0 {
                (0..active).collect()
            } else {
                Vec::new()
            };
            if group.is_empty() {
                continue;
            }
            let m = group.len();
            let (vars, n_dist) = layout.shape(regime);
            let degree = choose_degree(&reg, vars, n_dist, m, i)?;
            let mut raw = vec![0.0; m * vars];
            let mut dist = vec![1.0; m * n_dist];
            raw.par_chunks_mut(vars).zip(dist.par_chunks_mut(n_dist)).zip(group.par_iter()).for_each(
                |((x, d), &pos)| layout.load(bundle, order[pos], i, regime, x, d),
            );
            let map = FeatureMap::fit_multi(reg.basis, degree, vars, n_dist, m, |j, x, d| {
                x.copy_from_slice(&raw[j * vars..(j + 1) * vars]);
                d.copy_from_slice(&dist[j * n_dist..(j + 1) * n_dist]);
            });
            let size = map.size();
            let mut feats = vec![0.0; m * size];
            feats.par_chunks_mut(size).enumerate().for_each(|(j, out)| {
                map.eval_multi(&raw[j * vars..(j + 1) * vars], &dist[j * n_dist..(j + 1) * n_dist], out);
            });
            let row = |j: usize| &feats[j * size..(j + 1) * size];
            let ne = NormalEquations::accumulate(size, 1, m, |j, feat, y| {
                feat.copy_from_slice(row(j));
                y[0] = value[group[j]];
            });
            let coef = ne.solve(reg.ridge)?.remove(0);
            let z_coef = if config.estimate_z {
                // Z_i ≈ E[(V_{i+1} - C_i) ΔW_i | x_i] / dt
                let ne = NormalEquations::accumulate(size, dim, m, |j, feat, y| {
                    feat.copy_from_slice(row(j));
                    let pos = group[j];
                    let resid = value[pos] - dot(feat, &coef);
                    let mut inc = IncrementStream::new(bundle.seed(), order[pos], Purpose::Increments, dim);
                    inc.seek(i);
                    inc.next_normals(y);
                    for yd in y.iter_mut() {
                        *yd *= resid / dt.sqrt();
                    }
                });
                Some(ne.solve(reg.ridge)?)
            } else {
                None
            };
            let fit = RegimeFit { map, coef, z_coef, rows: m };
            let stepped: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let feat = row(j);
                    let c = dot(feat, &fit.coef);
                    let z: Vec<f64> =
                        fit.z_coef.as_ref().map_or_else(Vec::new, |zc| zc.iter().map(|w| dot(feat, w)).collect());
                    let y = match config.scheme {
                        StepScheme::ExactStiffFlow => exact_flow_step(c, driver, dt, t, &z),
                        StepScheme::ImplicitEuler => implicit_step_z(c, driver, dt, t, &z)?,
                    };
                    Ok(y.clamp(0.0, k))
                })
                .collect::<Result<_>>()?;
            for (&pos, y) in group.iter().zip(stepped) {
                fresh[pos] = y;
            }
            field.steps[i].regimes[regime] = Some(fit);
        }
        value[..active].copy_from_slice(&fresh[..active]);
    }
    field.y0 = pairwise_sum(&value) / n as f64;
    let est = mean_stderr(&field.first_step_values);
    field.y0_stderr = if est.stderr.is_finite() { est.stderr } else { 0.0 };
    Ok(field)
}

fn choose_degree(reg: &RegressionConfig, vars: usize, n_dist: usize, rows: usize, step: usize) -> Result<usize> {
    let size = basis_size_multi(reg.basis, vars, n_dist, reg.degree);
    match reg.on_degenerate {
        DegeneratePolicy::Fail => {
            if rows < size {
                return Err(Error::RegressionDegenerate { step, active: rows, basis: size });
            }
            Ok(reg.degree)
        }
        DegeneratePolicy::LowerDegree => Ok((0..=reg.degree)
            .rev()
            .find(|&d| basis_size_multi(reg.basis, vars, n_dist, d) * ROWS_PER_COEFFICIENT <= rows)
            .unwrap_or(0)),
    }
}

/// Solutions for increasing truncation levels on one bundle.
#[derive(Debug, Clone)]
pub struct LadderResult {
    pub k_list: Vec<f64>,
    pub fields: Vec<ValueField>,
    pub y0_sequence: Vec<f64>,
    /// Standard error of each consecutive increment, from paired `V_1`.
    pub increment_stderr: Vec<f64>,
    /// Smallest consecutive increment `y0_{j+1} - y0_j`.
    pub monotone_violation: f64,
}

impl LadderResult {
    /// Every increment is above `-sigmas` standard errors.
    pub fn is_monotone(&self, sigmas: f64) -> bool {
        self.y0_sequence
            .windows(2)
            .zip(&self.increment_stderr)
            .all(|(w, se)| w[1] - w[0] >= -sigmas * se - 1e-12 * (1.0 + w[0].abs()))
    }
}

/// Solve the rung `spec_family(k)` for every `k` on the same bundle.
pub fn truncation_ladder(
    bundle: &PathBundle,
    driver: &Driver,
    spec_family: impl Fn(f64) -> TerminalSpec,
    k_list: &[f64],
    config: &LsmcConfig,
) -> Result<LadderResult> {
    if k_list.len() < 2 {
        return invalid("a ladder needs at least two truncation levels");
    }
    if k_list.windows(2).any(|w| w[1] < w[0]) {
        return invalid("truncation levels must be non-decreasing");
    }
    let fields: Vec<ValueField> = k_list
        .iter()
        .map(|&k| lsmc_solve(bundle, driver, &spec_family(k), config))
        .collect::<Result<_>>()?;
    let y0_sequence: Vec<f64> = fields.iter().map(|f| f.y0).collect();
    let increment_stderr = fields
        .windows(2)
        .map(|w| {
            let diffs: Vec<f64> =
                w[1].first_step_values.iter().zip(&w[0].first_step_values).map(|(a, b)| a - b).collect();
            let se = mean_stderr(&diffs).stderr;
            if se.is_finite() {
                se
            } else {
                0.0
            }
        })
        .collect();
    let monotone_violation = y0_sequence.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok(LadderResult { k_list: k_list.to_vec(), fields, y0_sequence, increment_stderr, monotone_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate_paths, TimeGrid};
    use crate::model::{Eta, SDECoefficients};

    fn canonical(q: f64) -> Driver {
        Driver::canonical(q, Eta::Constant(1.0)).unwrap()
    }

    #[test]
    fn implicit_step_examples() {
        let d = canonical(2.0);
        let y = implicit_driver_step(1.1, &d, 0.1, 0.0).unwrap();
        assert!((y - 1.0).abs() < 1e-13);
        assert_eq!(implicit_driver_step(0.0, &d, 0.1, 0.0).unwrap(), 0.0);
        assert_eq!(implicit_driver_step(3.7, &d, 0.0, 0.0).unwrap(), 3.7);
    }

    #[test]
    fn exact_step_matches_ode_flow() {
        let d = canonical(3.0);
        let y = exact_flow_step(2.0, &d, 0.25, 0.0, &[]);
        let expect = crate::oracle::truncated_profile(3.0, 0.25, 2.0, 0.0).unwrap();
        assert!((y - expect).abs() < 1e-14);
        assert_eq!(exact_flow_step(-1.0, &d, 0.1, 0.0, &[]), 0.0);
        let zero = Driver::zero(2.0).unwrap();
        assert_eq!(exact_flow_step(4.5, &zero, 0.1, 0.0, &[]), 4.5);
    }

    #[test]
    fn payoff_rules() {
        let hit = ExitInfo { exited: true, index: 9, time: 0.9, state: vec![0.0] };
        let tau = ExitInfo { exited: true, index: 3, time: 0.3, state: vec![0.0] };
        assert_eq!(terminal_payoff(&TerminalSpec::Constant { k: 5.0 }, &hit, None).unwrap(), 5.0);
        assert_eq!(terminal_payoff(&TerminalSpec::Xi2 { k: 7.0 }, &hit, Some(&tau)).unwrap(), 0.0);
        assert_eq!(terminal_payoff(&TerminalSpec::Xi1 { k: 7.0 }, &hit, Some(&tau)).unwrap(), 7.0);
        assert!(terminal_payoff(&TerminalSpec::Xi1 { k: 7.0 }, &hit, None).is_err());
        let g: crate::model::BoundaryFn = std::sync::Arc::new(|x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { 1.0 });
        let spec = TerminalSpec::Markovian { g, k: 10.0 };
        assert_eq!(terminal_payoff(&spec, &hit, None).unwrap(), 10.0);
        let censored = ExitInfo { exited: false, index: 10, time: 1.0, state: vec![1.0] };
        assert_eq!(terminal_payoff(&spec, &censored, None).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_horizon_matches_scalar_ode() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let bundle = simulate_paths(&coeffs, None, &[0.0], &grid, 200, 3, false).unwrap();
        let field =
            lsmc_solve(&bundle, &canonical(2.0), &TerminalSpec::Constant { k: 10.0 }, &LsmcConfig::default()).unwrap();
        assert!((field.y0 - 1.0 / 1.1).abs() < 1e-10, "{}", field.y0);
    }

    #[test]
    fn zero_problem_is_zero() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let bundle = simulate_paths(&coeffs, None, &[0.0], &grid, 100, 3, false).unwrap();
        let field =
            lsmc_solve(&bundle, &Driver::zero(2.0).unwrap(), &TerminalSpec::Constant { k: 0.0 }, &LsmcConfig::default())
                .unwrap();
        assert_eq!(field.y0, 0.0);
    }

    #[test]
    fn degenerate_regression_is_reported() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let bundle = simulate_paths(&coeffs, None, &[0.0], &grid, 3, 3, false).unwrap();
        let err = lsmc_solve(&bundle, &canonical(2.0), &TerminalSpec::Constant { k: 1.0 }, &LsmcConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::RegressionDegenerate { step: 9, active: 3, basis: 4 }));
    }

    #[test]
    fn ladder_rejects_bad_levels() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let bundle = simulate_paths(&coeffs, None, &[0.0], &grid, 50, 3, false).unwrap();
        let d = canonical(2.0);
        let cfg = LsmcConfig::default();
        let fam = |k| TerminalSpec::Constant { k };
        assert!(truncation_ladder(&bundle, &d, fam, &[1.0], &cfg).is_err());
        assert!(truncation_ladder(&bundle, &d, fam, &[2.0, 1.0], &cfg).is_err());
        let r = truncation_ladder(&bundle, &d, fam, &[2.0, 2.0], &cfg).unwrap();
        assert_eq!(r.y0_sequence[0], r.y0_sequence[1]);
        assert_eq!(r.monotone_violation, 0.0);
    }
}
