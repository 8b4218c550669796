//! Euler–Maruyama simulation of the forward diffusion with exit-time,
//! approach-time and second-stopping-time bookkeeping.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{Domain, SDECoefficients};
use crate::rng::{substream, uniform, IncrementStream, Purpose};

/// Largest admissible non-exit fraction for an automatically chosen horizon.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return invalid(format!("horizon must be positive and finite (got {t_max})"));
        }
        if n_steps == 0 {
            return invalid("n_steps must be positive");
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Same horizon, twice the number of steps.
    pub fn refined(&self) -> Self {
        Self { t_max: self.t_max, n_steps: 2 * self.n_steps }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitInfo {
    pub exited: bool,
    /// First grid index at or after the crossing (`n_steps` when not exited).
    pub index: usize,
    pub time: f64,
    /// Exit state projected to the boundary (last state when not exited).
    pub state: Vec<f64>,
}

impl ExitInfo {
    pub fn not_exited(grid: &TimeGrid, state: Vec<f64>) -> Self {
        Self { exited: false, index: grid.n_steps(), time: grid.t_max(), state }
    }
}

/// `exp(-2 d_i d_{i+1} / (σ² dt))`: probability that a Brownian bridge between
/// two interior points at distances `d_i`, `d_{i+1}` from a flat boundary
/// touches it within the step.
pub fn bridge_crossing_probability(d_prev: f64, d_next: f64, sigma2: f64, dt: f64) -> f64 {
    if d_prev <= 0.0 || d_next <= 0.0 {
        return 1.0;
    }
    if sigma2 <= 0.0 || dt <= 0.0 {
        return 0.0;
    }
    (-2.0 * d_prev * d_next / (sigma2 * dt)).exp()
}

/// Per-step exit check shared by the simulator and [`detect_exit`].
fn step_exit(
    domain: &Domain,
    grid: &TimeGrid,
    i: usize,
    prev: &[f64],
    next: &[f64],
    bridge: Option<(f64, &mut ChaCha8Rng)>,
) -> Option<ExitInfo> {
    let dt = grid.dt();
    let d_prev = domain.signed_distance_unchecked(prev);
    let d_next = domain.signed_distance_unchecked(next);
    // fixed consumption: one uniform per step whenever the correction is on
    let u = bridge.map(|(s2, rng)| (s2, uniform(rng)));
    if d_next < 0.0 {
        let frac = if d_prev > 0.0 { d_prev / (d_prev - d_next) } else { 0.0 };
        return Some(ExitInfo {
            exited: true,
            index: i + 1,
            time: grid.time(i) + frac * dt,
            state: domain.project_to_boundary(next),
        });
    }
    let (sigma2, u) = u?;
    let Domain::Interval { lo, hi } = domain else {
        return None;
    };
    let p_lo = bridge_crossing_probability(prev[0] - lo, next[0] - lo, sigma2, dt);
    let p_hi = bridge_crossing_probability(hi - prev[0], hi - next[0], sigma2, dt);
    let face = if u < p_lo {
        *lo
    } else if u < p_lo + (1.0 - p_lo) * p_hi {
        *hi
    } else {
        return None;
    };
    Some(ExitInfo { exited: true, index: i + 1, time: grid.time(i) + 0.5 * dt, state: vec![face] })
}

fn bridge_applies(domain: &Domain, coeffs_dim: usize) -> bool {
    coeffs_dim == 1 && matches!(domain, Domain::Interval { .. })
}

/// First exit of a stored path (flat, row-major, `domain.dimension()` per
/// state). The Brownian-bridge correction needs the diffusion coefficient and
/// a uniform stream, and only applies to intervals.
pub fn detect_exit(
    path: &[f64],
    domain: &Domain,
    grid: &TimeGrid,
    bridge: Option<(&SDECoefficients, &mut ChaCha8Rng)>,
) -> Result<ExitInfo> {
    let d = domain.dimension();
    if path.is_empty() || !path.len().is_multiple_of(d) {
        return invalid("path length is not a multiple of the domain dimension");
    }
    let n_states = path.len() / d;
    if n_states > grid.n_steps() + 1 {
        return invalid("path is longer than the time grid");
    }
    if domain.signed_distance_unchecked(&path[..d]) <= 0.0 {
        return invalid("path must start inside the domain");
    }
    let mut bridge = bridge.filter(|(c, _)| bridge_applies(domain, c.dim()));
    let mut sig = vec![0.0; 1];
    for i in 0..n_states - 1 {
        let prev = &path[i * d..(i + 1) * d];
        let next = &path[(i + 1) * d..(i + 2) * d];
        let b = match bridge.as_mut() {
            Some((c, rng)) => {
                c.diffusion(prev, &mut sig);
                Some((sig[0] * sig[0], &mut **rng))
            }
            None => None,
        };
        if let Some(e) = step_exit(domain, grid, i, prev, next, b) {
            return Ok(e);
        }
    }
    Ok(ExitInfo::not_exited(grid, path[(n_states - 1) * d..].to_vec()))
}

/// For each `n`, the first index with `dist ≤ 1/n`, or `None`.
pub fn approach_times(path: &[f64], domain: &Domain, n_list: &[f64]) -> Result<Vec<Option<usize>>> {
    let d = domain.dimension();
    if !path.len().is_multiple_of(d) {
        return invalid("path length is not a multiple of the domain dimension");
    }
    if let Some(n) = n_list.iter().find(|n| !(**n >= 1.0)) {
        return invalid(format!("approach levels must be >= 1 (got {n})"));
    }
    let dists: Vec<f64> = path.chunks(d).map(|x| domain.signed_distance_unchecked(x)).collect();
    Ok(n_list
        .iter()
        .map(|n| {
            let thr = 1.0 / n;
            dists.iter().position(|&v| v <= thr)
        })
        .collect())
}

/// Ragged per-path state storage; path `p` keeps states `0..=last(p)` and
/// is frozen afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    dim: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl Trajectories {
    pub(crate) fn from_paths(dim: usize, paths: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(paths.len() + 1);
        offsets.push(0);
        let total: usize = paths.iter().map(|p| p.len()).sum();
        let mut data = Vec::with_capacity(total);
        for p in paths {
            data.extend_from_slice(&p);
            offsets.push(data.len());
        }
        Self { dim, offsets, data }
    }

    pub(crate) fn dense(dim: usize, n_paths: usize, n_states: usize, data: Vec<f64>) -> Self {
        let offsets = (0..=n_paths).map(|p| p * n_states * dim).collect();
        Self { dim, offsets, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored states of a path.
    pub fn stored(&self, path: usize) -> usize {
        (self.offsets[path + 1] - self.offsets[path]) / self.dim
    }

    pub fn path(&self, path: usize) -> &[f64] {
        &self.data[self.offsets[path]..self.offsets[path + 1]]
    }

    /// State at grid index `i`; indices past the stored range return the
    /// last stored state.
    pub fn state(&self, path: usize, i: usize) -> &[f64] {
        let last = self.stored(path) - 1;
        let j = i.min(last);
        let start = self.offsets[path] + j * self.dim;
        &self.data[start..start + self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauKind {
    Independent,
    SubDomain,
    Given,
}

/// Second stopping time attached to a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct TauTrack {
    pub kind: TauKind,
    pub exits: Vec<ExitInfo>,
    /// States of an independent second diffusion, kept up to `min(τ, S)`.
    pub aux: Option<Trajectories>,
    pub aux_domain: Option<Domain>,
    /// Paths with `τ` and `S` on the same grid index; counted as `τ ≤ S`.
    pub ties: usize,
}

/// Discretized forward paths with exit information.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub(crate) grid: TimeGrid,
    pub(crate) x0: Vec<f64>,
    pub(crate) seed: u64,
    pub(crate) domain: Option<Domain>,
    pub(crate) bridge: bool,
    pub(crate) states: Trajectories,
    pub(crate) exit_s: Vec<ExitInfo>,
    pub(crate) tau: Option<TauTrack>,
}

impl PathBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.states.dim()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn bridge_corrected(&self) -> bool {
        self.bridge
    }

    pub fn n_paths(&self) -> usize {
        self.exit_s.len()
    }

    pub fn states(&self) -> &Trajectories {
        &self.states
    }

    pub fn state(&self, path: usize, i: usize) -> &[f64] {
        self.states.state(path, i)
    }

    pub fn exit_s(&self, path: usize) -> &ExitInfo {
        &self.exit_s[path]
    }

    pub fn exits_s(&self) -> &[ExitInfo] {
        &self.exit_s
    }

    pub fn tau(&self) -> Option<&TauTrack> {
        self.tau.as_ref()
    }

    /// Grid index at which the path stops: the exit index, or the last index
    /// for censored paths.
    pub fn stop_index(&self, path: usize) -> usize {
        let e = &self.exit_s[path];
        if e.exited {
            e.index
        } else {
            self.grid.n_steps()
        }
    }

    pub fn is_censored(&self, path: usize) -> bool {
        !self.exit_s[path].exited
    }

    pub fn censored_count(&self) -> usize {
        self.exit_s.iter().filter(|e| !e.exited).count()
    }

    /// `1{τ ≤ S}`; ties count as `τ ≤ S`. `None` without a second time.
    pub fn tau_le_s(&self, path: usize) -> Option<bool> {
        let tau = self.tau.as_ref()?;
        let t = &tau.exits[path];
        let s = &self.exit_s[path];
        Some(t.exited && (!s.exited || t.index <= s.index))
    }

    /// Whether `τ` has occurred by grid index `i`.
    pub fn tau_occurred(&self, path: usize, i: usize) -> bool {
        match &self.tau {
            Some(t) => t.exits[path].exited && t.exits[path].index <= i,
            None => false,
        }
    }

    /// State of the second diffusion, when `τ` comes from one.
    pub fn aux_state(&self, path: usize, i: usize) -> Option<&[f64]> {
        self.tau.as_ref()?.aux.as_ref().map(|a| a.state(path, i))
    }

    pub fn aux_dim(&self) -> usize {
        self.tau.as_ref().and_then(|t| t.aux.as_ref()).map_or(0, |a| a.dim())
    }

    /// Empirical mean of `S ∧ t_max` and its standard error.
    pub fn mean_exit_time(&self) -> crate::stats::MeanEstimate {
        let times: Vec<f64> = self.exit_s.iter().map(|e| e.time).collect();
        crate::stats::mean_stderr(&times)
    }

    /// Approach indices `S_n` of one path, scanned up to its stop index.
    pub fn approach_indices(&self, path: usize, n_list: &[f64]) -> Result<Vec<Option<usize>>> {
        let domain = self.domain.as_ref().ok_or_else(|| {
            Error::InvalidParameter("approach times need a bounded domain".into())
        })?;
        approach_times(self.states.path(path), domain, n_list)
    }
}

struct SimulatedPath {
    states: Vec<f64>,
    exit: ExitInfo,
}

struct PathJob<'a> {
    coeffs: &'a SDECoefficients,
    domain: Option<&'a Domain>,
    x0: &'a [f64],
    grid: &'a TimeGrid,
    seed: u64,
    bridge: bool,
    increments: Purpose,
    bridge_purpose: Purpose,
}

impl PathJob<'_> {
    /// Simulate until exit (or the horizon). `keep` caps how many states
    /// are stored.
    fn run(&self, path: usize, keep: impl Fn(&ExitInfo) -> usize) -> Result<SimulatedPath> {
        let d = self.coeffs.dim();
        let dt = self.grid.dt();
        let sqdt = dt.sqrt();
        let mut inc = IncrementStream::new(self.seed, path, self.increments, d);
        let use_bridge = self.bridge && self.domain.is_some_and(|dom| bridge_applies(dom, d));
        let mut bridge_rng = use_bridge.then(|| substream(self.seed, path, self.bridge_purpose));
        let mut states = Vec::with_capacity(d * 64);
        states.extend_from_slice(self.x0);
        let mut x = self.x0.to_vec();
        let mut next = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * d];
        let mut z = vec![0.0; d];
        let mut exit = None;
        for i in 0..self.grid.n_steps() {
            self.coeffs.drift(&x, &mut b);
            self.coeffs.diffusion(&x, &mut sig);
            inc.next_normals(&mut z);
            for r in 0..d {
                let mut noise = 0.0;
                for c in 0..d {
                    noise += sig[r * d + c] * z[c];
                }
                next[r] = x[r] + b[r] * dt + noise * sqdt;
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite state on path {path} at step {}", i + 1)));
            }
            states.extend_from_slice(&next);
            if let Some(domain) = self.domain {
                let br = bridge_rng.as_mut().map(|rng| (sig[0] * sig[0], rng));
                if let Some(e) = step_exit(domain, self.grid, i, &x, &next, br) {
                    exit = Some(e);
                    break;
                }
            }
            std::mem::swap(&mut x, &mut next);
        }
        let exit = match exit {
            Some(e) => e,
            None if self.domain.is_none() => ExitInfo {
                exited: true,
                index: self.grid.n_steps(),
                time: self.grid.t_max(),
                state: states[states.len() - d..].to_vec(),
            },
            None => ExitInfo::not_exited(self.grid, states[states.len() - d..].to_vec()),
        };
        let n = keep(&exit).min(states.len() / d);
        states.truncate(n * d);
        Ok(SimulatedPath { states, exit })
    }
}

fn collect_ordered<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Simulate `n_paths` Euler–Maruyama paths from `x0`.
///
/// With a domain, each path stops at its first exit (states are stored up
/// to and including the exit index). Without one, the terminal time is the
/// deterministic horizon and every path is marked exited at `t_max`.
/// Path `i` uses its own counter-based streams, so the bundle does not
/// depend on the number of worker threads.
pub fn simulate_paths(
    coeffs: &SDECoefficients,
    domain: Option<&Domain>,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    bridge: bool,
) -> Result<PathBundle> {
    if n_paths == 0 {
        return invalid("n_paths must be at least 1");
    }
    if x0.len() != coeffs.dim() {
        return invalid(format!("x0 has dimension {} but coefficients have {}", x0.len(), coeffs.dim()));
    }
    if let Some(dom) = domain {
        dom.validate()?;
        if dom.signed_distance(x0)? <= 0.0 {
            return invalid(format!("x0 = {x0:?} is not inside the domain"));
        }
    }
    let job = PathJob {
        coeffs,
        domain,
        x0,
        grid,
        seed,
        bridge,
        increments: Purpose::Increments,
        bridge_purpose: Purpose::Bridge,
    };
    let sims = collect_ordered(n_paths, |p| job.run(p, |_| usize::MAX))?;
    let (paths, exits): (Vec<_>, Vec<_>) = sims.into_iter().map(|s| (s.states, s.exit)).unzip();
    Ok(PathBundle {
        grid: *grid,
        x0: x0.to_vec(),
        seed,
        domain: domain.cloned(),
        bridge,
        states: Trajectories::from_paths(coeffs.dim(), paths),
        exit_s: exits,
        tau: None,
    })
}

/// Pick a horizon by doubling `t_start` until a pilot run leaves fewer than
/// [`MAX_CENSORED_FRACTION`] of its paths inside the domain.
pub fn calibrate_horizon(
    coeffs: &SDECoefficients,
    domain: &Domain,
    x0: &[f64],
    n_steps: usize,
    pilot_paths: usize,
    seed: u64,
    bridge: bool,
) -> Result<TimeGrid> {
    let mut t_max = 1.0;
    for _ in 0..30 {
        let grid = TimeGrid::new(t_max, n_steps)?;
        let pilot = simulate_paths(coeffs, Some(domain), x0, &grid, pilot_paths, seed ^ 0x9E37_79B9_7F4A_7C15, bridge)?;
        let frac = pilot.censored_count() as f64 / pilot_paths as f64;
        log::debug!("horizon pilot t_max={t_max}: censored fraction {frac}");
        if frac < MAX_CENSORED_FRACTION {
            return Ok(grid);
        }
        t_max *= 2.0;
    }
    Err(Error::Numerical("horizon calibration did not reach the censoring target".into()))
}

/// Where the second stopping time `τ` comes from.
#[derive(Debug, Clone)]
pub enum TauSource {
    /// Exit time of an independent diffusion from its own domain.
    Independent { coeffs: SDECoefficients, x0: Vec<f64>, domain: Domain, grid: TimeGrid, bridge: bool },
    /// Exit time of the same path from a sub-domain.
    SubDomain(Domain),
    /// Precomputed per-path exits on the bundle's grid.
    Given(Vec<ExitInfo>),
}

/// Attach `τ` to a bundle. Ties on the grid are resolved as `τ ≤ S` and
/// counted in [`TauTrack::ties`].
pub fn joint_exit(mut bundle: PathBundle, source: TauSource, seed_tau: u64) -> Result<PathBundle> {
    let n = bundle.n_paths();
    let grid = bundle.grid;
    let track = match source {
        TauSource::Independent { coeffs, x0, domain, grid: tau_grid, bridge } => {
            if tau_grid != grid {
                return invalid("second diffusion must use the bundle's time grid");
            }
            if domain.signed_distance(&x0)? <= 0.0 {
                return invalid("second diffusion must start inside its domain");
            }
            let job = PathJob {
                coeffs: &coeffs,
                domain: Some(&domain),
                x0: &x0,
                grid: &grid,
                seed: seed_tau,
                bridge,
                increments: Purpose::TauIncrements,
                bridge_purpose: Purpose::TauBridge,
            };
            let stops: Vec<usize> = (0..n).map(|p| bundle.stop_index(p)).collect();
            let sims = collect_ordered(n, |p| job.run(p, |e| e.index.min(stops[p]) + 1))?;
            let (paths, exits): (Vec<_>, Vec<_>) = sims.into_iter().map(|s| (s.states, s.exit)).unzip();
            TauTrack {
                kind: TauKind::Independent,
                exits,
                aux: Some(Trajectories::from_paths(coeffs.dim(), paths)),
                aux_domain: Some(domain),
                ties: 0,
            }
        }
        TauSource::SubDomain(sub) => {
            if sub.dimension() != bundle.dim() {
                return invalid("sub-domain dimension differs from the bundle");
            }
            if sub.signed_distance(&bundle.x0)? <= 0.0 {
                return invalid("x0 must lie inside the sub-domain");
            }
            let exits = collect_ordered(n, |p| detect_exit(bundle.states.path(p), &sub, &grid, None))?;
            TauTrack { kind: TauKind::SubDomain, exits, aux: None, aux_domain: Some(sub), ties: 0 }
        }
        TauSource::Given(exits) => {
            if exits.len() != n {
                return invalid(format!("{} tau exits given for {n} paths", exits.len()));
            }
            if exits.iter().any(|e| e.index > grid.n_steps()) {
                return invalid("given tau exits do not fit the bundle's grid");
            }
            TauTrack { kind: TauKind::Given, exits, aux: None, aux_domain: None, ties: 0 }
        }
    };
    let ties = (0..n)
        .filter(|&p| {
            let s = &bundle.exit_s[p];
            let t = &track.exits[p];
            s.exited && t.exited && s.index == t.index
        })
        .count();
    bundle.tau = Some(TauTrack { ties, ..track });
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> Domain {
        Domain::interval(0.0, 2.0).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.time(3), 1.5);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn sign_change_detection() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let e = detect_exit(&[1.5, 0.9, -0.2], &interval(), &g, None).unwrap();
        assert!(e.exited);
        assert_eq!(e.index, 2);
        assert_eq!(e.state, vec![0.0]);
        assert!(e.time > 0.5 && e.time <= 1.0);
    }

    #[test]
    fn constant_path_does_not_exit() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let e = detect_exit(&[1.0; 4], &interval(), &g, None).unwrap();
        assert!(!e.exited);
        assert_eq!(e.index, 3);
    }

    #[test]
    fn path_must_start_inside() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        assert!(detect_exit(&[-1.0, 1.0], &interval(), &g, None).is_err());
    }

    #[test]
    fn bridge_probability_closed_form() {
        let p = bridge_crossing_probability(0.05, 0.05, 1.0, 0.01);
        assert!((p - (-0.5f64).exp()).abs() < 1e-15);
        assert!((p - 0.6065306597).abs() < 1e-9);
    }

    #[test]
    fn bridge_crossing_frequency_matches_probability() {
        // a path hugging the lower boundary at 0.05 for many steps
        let steps = 1;
        let g = TimeGrid::new(0.01 * steps as f64, steps).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let trials = 40_000;
        let mut hits = 0;
        for trial in 0..trials {
            let mut rng = substream(5, trial, Purpose::Bridge);
            let e = detect_exit(&[0.05, 0.05], &interval(), &g, Some((&coeffs, &mut rng))).unwrap();
            hits += e.exited as usize;
        }
        let freq = hits as f64 / trials as f64;
        let p = (-0.5f64).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs {p}");
    }

    #[test]
    fn approach_time_thresholds() {
        // distances 0.8, 0.4, 0.09 on interval(0, 2)
        let path = [0.8, 0.4, 0.09];
        let r = approach_times(&path, &interval(), &[2.0, 20.0]).unwrap();
        assert_eq!(r, vec![Some(1), None]);
        assert!(approach_times(&path, &interval(), &[0.5]).is_err());
    }

    #[test]
    fn approach_indices_nondecreasing_in_n() {
        let path: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 / 50.0).collect();
        let ns = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let r = approach_times(&path, &interval(), &ns).unwrap();
        let idx: Vec<usize> = r.iter().map(|o| o.unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] <= w[1]), "{idx:?}");
    }

    #[test]
    fn degenerate_and_pure_drift_paths() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let still = SDECoefficients::constant(vec![0.0], 0.0).unwrap();
        let b = simulate_paths(&still, None, &[1.0], &g, 3, 1, false).unwrap();
        for p in 0..3 {
            for i in 0..=10 {
                assert_eq!(b.state(p, i), &[1.0]);
            }
        }
        let drift = SDECoefficients::constant(vec![1.0], 0.0).unwrap();
        let b = simulate_paths(&drift, None, &[0.0], &g, 1, 1, false).unwrap();
        assert!((b.state(0, 10)[0] - 1.0).abs() < 1e-14);
        assert!(b.exit_s(0).exited && b.exit_s(0).index == 10);
    }

    #[test]
    fn rejects_start_outside() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let c = SDECoefficients::brownian(1).unwrap();
        assert!(simulate_paths(&c, Some(&interval()), &[3.0], &g, 10, 1, false).is_err());
        assert!(simulate_paths(&c, Some(&interval()), &[1.0], &g, 0, 1, false).is_err());
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let c = SDECoefficients::new(
            1,
            std::sync::Arc::new(|_x, out: &mut [f64]| out[0] = f64::NAN),
            std::sync::Arc::new(|_x, out: &mut [f64]| out[0] = 1.0),
            1.0,
        )
        .unwrap();
        let err = simulate_paths(&c, None, &[0.0], &g, 2, 1, false).unwrap_err();
        assert!(err.to_string().contains("path 0"));
    }

    #[test]
    fn stored_states_stay_in_closure_before_exit() {
        let g = TimeGrid::new(4.0, 400).unwrap();
        let c = SDECoefficients::brownian(1).unwrap();
        let dom = interval();
        let b = simulate_paths(&c, Some(&dom), &[1.0], &g, 500, 3, true).unwrap();
        for p in 0..b.n_paths() {
            let e = b.exit_s(p);
            for i in 0..b.stop_index(p) {
                assert!(dom.signed_distance(b.state(p, i)).unwrap() >= 0.0);
            }
            if e.exited {
                assert!(dom.signed_distance(&e.state).unwrap().abs() < 1e-12);
                assert!(e.time > 0.0 && e.time <= g.t_max());
            }
        }
    }

    #[test]
    fn tau_index_comparison() {
        let g = TimeGrid::new(1.0, 40).unwrap();
        let c = SDECoefficients::constant(vec![0.0], 0.0).unwrap();
        let b = simulate_paths(&c, None, &[1.0], &g, 2, 1, false).unwrap();
        let at = |i: usize, exited: bool| ExitInfo { exited, index: i, time: g.time(i), state: vec![0.0] };
        let b = joint_exit(b, TauSource::Given(vec![at(10, true), ExitInfo::not_exited(&g, vec![1.0])]), 0).unwrap();
        assert_eq!(b.tau_le_s(0), Some(true));
        assert_eq!(b.tau_le_s(1), Some(false));
        assert!(b.tau_occurred(0, 10) && !b.tau_occurred(0, 9));
    }

    #[test]
    fn mismatched_tau_grid_rejected() {
        let g = TimeGrid::new(1.0, 40).unwrap();
        let c = SDECoefficients::brownian(1).unwrap();
        let b = simulate_paths(&c, Some(&interval()), &[1.0], &g, 4, 1, false).unwrap();
        let src = TauSource::Independent {
            coeffs: c.clone(),
            x0: vec![1.0],
            domain: interval(),
            grid: TimeGrid::new(1.0, 20).unwrap(),
            bridge: false,
        };
        assert!(joint_exit(b.clone(), src, 2).is_err());
        let short = TauSource::Given(vec![ExitInfo::not_exited(&g, vec![1.0])]);
        assert!(joint_exit(b, short, 2).is_err());
    }

    #[test]
    fn subdomain_tau_precedes_exit() {
        let g = TimeGrid::new(8.0, 800).unwrap();
        let c = SDECoefficients::brownian(1).unwrap();
        let b = simulate_paths(&c, Some(&interval()), &[1.0], &g, 300, 9, false).unwrap();
        let sub = Domain::interval(0.5, 1.5).unwrap();
        let b = joint_exit(b, TauSource::SubDomain(sub), 0).unwrap();
        for p in 0..b.n_paths() {
            if !b.is_censored(p) {
                assert_eq!(b.tau_le_s(p), Some(true));
            }
        }
    }
}
