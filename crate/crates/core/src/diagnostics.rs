//! Statistical checks on a solved field: continuity at the exit time,
//! moments of the first-type terminal value, the boundary envelope, and
//! bounds before the approach times.

use rayon::prelude::*;

use crate::backward::ValueField;
use crate::error::{invalid, Error, Result};
use crate::forward::PathBundle;
use crate::model::{blowup_exponent, TerminalSpec};
use crate::stats::{mean_stderr, pairwise_sum};

/// Points with fewer samples than this are flagged.
pub const MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// `τ ≤ S`
    TauBeforeExit,
    /// `τ > S`
    TauAfterExit,
}

impl Event {
    fn holds(self, bundle: &PathBundle, path: usize) -> bool {
        let le = bundle.tau_le_s(path).unwrap_or(false);
        match self {
            Event::TauBeforeExit => le,
            Event::TauAfterExit => !le,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// Grid times `t_i`, every `stride` steps, over paths still active.
    Calendar { stride: usize },
    /// Times `-h·dt` relative to each path's own exit, for lags
    /// `h = 1, 2, 4, …`. Every uncensored event path contributes at each lag
    /// it has lived through.
    ExitAligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityCurve {
    pub event: Event,
    pub alignment: Alignment,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub counts: Vec<usize>,
    pub low_sample: Vec<bool>,
}

impl ContinuityCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First point with enough samples.
    pub fn initial(&self) -> Option<usize> {
        self.low_sample.iter().position(|l| !l)
    }

    /// Last point with enough samples.
    pub fn terminal(&self) -> Option<usize> {
        self.low_sample.iter().rposition(|l| !l)
    }
}

fn point(values: &[f64]) -> (f64, f64, usize, bool) {
    let est = mean_stderr(values);
    let low = est.count < MIN_SAMPLES;
    let mean = if est.count == 0 { f64::NAN } else { est.mean };
    let se = if est.stderr.is_finite() { est.stderr } else { f64::NAN };
    (mean, se, est.count, low)
}

/// Mean of `Ŷ` over event paths, either on calendar time or aligned on each
/// path's exit.
pub fn continuity_curve(
    field: &ValueField,
    bundle: &PathBundle,
    event: Event,
    alignment: Alignment,
) -> Result<ContinuityCurve> {
    if bundle.tau().is_none() {
        return invalid("continuity curves need a bundle with the second stopping time");
    }
    if !field.spec.needs_tau() {
        return invalid(format!("continuity curves need a xi1/xi2 field (got {:?})", field.spec));
    }
    let n = bundle.n_paths();
    let n_steps = bundle.grid().n_steps();
    let dt = bundle.grid().dt();
    let paths: Vec<usize> = (0..n).filter(|&p| event.holds(bundle, p)).collect();
    let mut curve = ContinuityCurve {
        event,
        alignment,
        times: Vec::new(),
        values: Vec::new(),
        stderr: Vec::new(),
        counts: Vec::new(),
        low_sample: Vec::new(),
    };
    let mut push = |t: f64, samples: &[f64]| {
        let (m, se, c, low) = point(samples);
        curve.times.push(t);
        curve.values.push(m);
        curve.stderr.push(se);
        curve.counts.push(c);
        curve.low_sample.push(low);
    };
    match alignment {
        Alignment::Calendar { stride } => {
            if stride == 0 {
                return invalid("curve stride must be positive");
            }
            for i in (0..n_steps).step_by(stride) {
                let samples: Vec<f64> = paths
                    .par_iter()
                    .filter(|&&p| bundle.stop_index(p) > i)
                    .map(|&p| field.value_at(bundle, p, i))
                    .collect::<Result<_>>()?;
                push(bundle.grid().time(i), &samples);
            }
        }
        Alignment::ExitAligned => {
            let live: Vec<usize> = paths.into_iter().filter(|&p| !bundle.is_censored(p)).collect();
            let mut lags = Vec::new();
            let mut h = 1;
            while h <= n_steps {
                lags.push(h);
                h *= 2;
            }
            for &h in lags.iter().rev() {
                let samples: Vec<f64> = live
                    .par_iter()
                    .filter(|&&p| bundle.stop_index(p) >= h)
                    .map(|&p| field.value_at(bundle, p, bundle.stop_index(p) - h))
                    .collect::<Result<_>>()?;
                push(-(h as f64) * dt, &samples);
            }
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub estimate: f64,
    pub stderr: f64,
    /// Estimate with the largest 0.1% of samples removed.
    pub trimmed: f64,
    pub relative_change: f64,
    pub divergence_suspect: bool,
    /// Paths with `τ ≤ S`.
    pub event_paths: usize,
}

/// Mean of `1{τ ≤ S}·(C·dist(Ξ_τ)^{-2(p-1)})^ϱ`, with a tail-stability
/// flag raised when trimming the top 0.1% moves the estimate by more than
/// 25%.
pub fn moment_estimate_xi1(bundle: &PathBundle, q: f64, varrho: f64, c_fit: f64) -> Result<MomentReport> {
    let alpha = blowup_exponent(q)?;
    if !(varrho.is_finite() && varrho > 1.0) {
        return invalid(format!("moment order must exceed 1 (got {varrho})"));
    }
    if !(c_fit.is_finite() && c_fit > 0.0) {
        return invalid(format!("envelope constant must be positive (got {c_fit})"));
    }
    let tau = bundle.tau().ok_or_else(|| Error::InvalidParameter("bundle has no second stopping time".into()))?;
    let domain = bundle
        .domain()
        .ok_or_else(|| Error::InvalidParameter("moment estimate needs a bounded domain".into()))?;
    let dt = bundle.grid().dt();
    let samples: Vec<f64> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            if !bundle.tau_le_s(p).unwrap_or(false) {
                return 0.0;
            }
            let stop = bundle.stop_index(p);
            let i = ((tau.exits[p].time / dt).floor() as usize).min(stop.saturating_sub(1));
            let d = domain.signed_distance_unchecked(bundle.state(p, i)).max(1e-300);
            (c_fit * d.powf(-alpha)).powf(varrho)
        })
        .collect();
    let event_paths = (0..bundle.n_paths()).filter(|&p| bundle.tau_le_s(p).unwrap_or(false)).count();
    if event_paths == 0 {
        return Err(Error::UndefinedEstimate("no path has τ ≤ S".into()));
    }
    let est = mean_stderr(&samples);
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let drop = (samples.len() as f64 * 1e-3).ceil() as usize;
    let kept = &sorted[..samples.len() - drop.min(samples.len() - 1)];
    let trimmed = pairwise_sum(kept) / kept.len() as f64;
    let relative_change = if est.mean > 0.0 { (est.mean - trimmed).abs() / est.mean } else { 0.0 };
    Ok(MomentReport {
        estimate: est.mean,
        stderr: if est.stderr.is_finite() { est.stderr } else { 0.0 },
        trimmed,
        relative_change,
        divergence_suspect: relative_change > 0.25 || !est.mean.is_finite(),
        event_paths,
    })
}

/// Which `(path, step)` pairs enter the envelope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSampling {
    pub stride: usize,
    /// Only states within this distance of the boundary.
    pub max_dist: Option<f64>,
    /// Only steps at which at least this fraction of all paths is still
    /// active. The regression error grows like `k / √active`, so the thin
    /// late steps would otherwise dominate the maximum.
    pub min_active_fraction: f64,
}

impl Default for EnvelopeSampling {
    fn default() -> Self {
        Self { stride: 1, max_dist: None, min_active_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    pub c_hat: f64,
    pub path: usize,
    pub step: usize,
    pub dist: f64,
    pub value: f64,
    pub samples: usize,
}

/// `max Ŷ·dist^{2(p-1)}` over active `(path, step)` pairs at well-populated
/// steps, with the arg-max.
pub fn ko_bound_fit(field: &ValueField, bundle: &PathBundle, q: f64, sampling: EnvelopeSampling) -> Result<EnvelopeFit> {
    if field.spec.needs_tau() {
        return invalid("envelope fit needs a constant or Markovian terminal condition");
    }
    if !(0.0..=1.0).contains(&sampling.min_active_fraction) {
        return invalid(format!("active fraction must lie in [0, 1] (got {})", sampling.min_active_fraction));
    }
    let floor = sampling.min_active_fraction * bundle.n_paths() as f64;
    let skip = |i: usize| (field.active_counts[i] as f64) < floor;
    envelope_fit(bundle, q, sampling, skip, |p, i, _| field.value_at(bundle, p, i))
}

/// Envelope fit for an arbitrary value function of `(path, step, state)`.
pub fn envelope_fit_with<F>(bundle: &PathBundle, q: f64, sampling: EnvelopeSampling, value: F) -> Result<EnvelopeFit>
where
    F: Fn(usize, usize, &[f64]) -> Result<f64> + Sync,
{
    envelope_fit(bundle, q, sampling, |_| false, value)
}

fn envelope_fit<S, F>(bundle: &PathBundle, q: f64, sampling: EnvelopeSampling, skip_step: S, value: F) -> Result<EnvelopeFit>
where
    S: Fn(usize) -> bool + Sync,
    F: Fn(usize, usize, &[f64]) -> Result<f64> + Sync,
{
    let alpha = blowup_exponent(q)?;
    let domain =
        bundle.domain().ok_or_else(|| Error::InvalidParameter("envelope fit needs a bounded domain".into()))?;
    if sampling.stride == 0 {
        return invalid("sampling stride must be positive");
    }
    let best = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| -> Result<Option<EnvelopeFit>> {
            let mut best: Option<EnvelopeFit> = None;
            let mut samples = 0;
            for i in (0..bundle.stop_index(p)).step_by(sampling.stride) {
                if skip_step(i) {
                    continue;
                }
                let x = bundle.state(p, i);
                let d = domain.signed_distance_unchecked(x);
                if d <= 0.0 || sampling.max_dist.is_some_and(|m| d > m) {
                    continue;
                }
                samples += 1;
                let v = value(p, i, x)?;
                let c = v * d.powf(alpha);
                if best.as_ref().is_none_or(|b| c > b.c_hat) {
                    best = Some(EnvelopeFit { c_hat: c, path: p, step: i, dist: d, value: v, samples: 0 });
                }
            }
            Ok(best.map(|mut b| {
                b.samples = samples;
                b
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: usize = best.iter().flatten().map(|b| b.samples).sum();
    let mut out = best
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.c_hat > a.c_hat { b } else { a })
        .ok_or_else(|| Error::UndefinedEstimate("no sampled interior states".into()))?;
    out.samples = samples;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachBound {
    pub n: f64,
    /// Largest `Ŷ` at steps before `S_n`; 0 for empty windows.
    pub max_value: f64,
    pub bound: f64,
    pub window_samples: usize,
    pub violations: usize,
}

/// For each `n`, the largest `Ŷ` at steps strictly before `S_n` (the first
/// step with `dist ≤ 1/n`, or the stop index if never reached), checked
/// against `c_hat·n^{2(p-1)}·(1 + tol)`.
pub fn bounded_before_sn(
    field: &ValueField,
    bundle: &PathBundle,
    n_list: &[f64],
    q: f64,
    c_hat: f64,
    tol: f64,
) -> Result<Vec<ApproachBound>> {
    let alpha = blowup_exponent(q)?;
    let per_path = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| -> Result<Vec<(f64, usize, usize)>> {
            let stop = bundle.stop_index(p);
            let sn = bundle.approach_indices(p, n_list)?;
            let mut out = Vec::with_capacity(n_list.len());
            for (n, s) in n_list.iter().zip(sn) {
                let end = s.unwrap_or(stop).min(stop);
                let bound = c_hat * n.powf(alpha) * (1.0 + tol);
                let mut max = 0.0f64;
                let mut viol = 0;
                for i in 0..end {
                    let v = field.value_at(bundle, p, i)?;
                    max = max.max(v);
                    viol += usize::from(v > bound);
                }
                out.push((max, end, viol));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| ApproachBound {
            n,
            max_value: per_path.iter().map(|r| r[j].0).fold(0.0, f64::max),
            bound: c_hat * n.powf(alpha) * (1.0 + tol),
            window_samples: per_path.iter().map(|r| r[j].1).sum(),
            violations: per_path.iter().map(|r| r[j].2).sum(),
        })
        .collect())
}

/// Monte Carlo estimate of `E ∫₀^S |Ẑ|²·dist^{4(p-1)+ε} dt`.
pub fn weighted_z_integral(field: &ValueField, bundle: &PathBundle, q: f64, eps: f64) -> Result<crate::stats::MeanEstimate> {
    let alpha = blowup_exponent(q)?;
    if !(eps > 1.0) {
        return invalid(format!("weight exponent offset must exceed 1 (got {eps})"));
    }
    if !field.has_z() {
        return invalid("field has no Z estimates; solve with estimate_z");
    }
    let domain = bundle
        .domain()
        .ok_or_else(|| Error::InvalidParameter("weighted Z integral needs a bounded domain".into()))?;
    let dt = bundle.grid().dt();
    let power = 2.0 * alpha + eps;
    let per_path: Vec<f64> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut terms = Vec::with_capacity(bundle.stop_index(p));
            for i in 0..bundle.stop_index(p) {
                let z = field.z_at(bundle, p, i).unwrap_or_default();
                let d = domain.signed_distance_unchecked(bundle.state(p, i)).max(0.0);
                terms.push(z.iter().map(|v| v * v).sum::<f64>() * d.powf(power) * dt);
            }
            Ok(pairwise_sum(&terms))
        })
        .collect::<Result<_>>()?;
    let mut est = mean_stderr(&per_path);
    if !est.stderr.is_finite() {
        est.stderr = 0.0;
    }
    Ok(est)
}

/// `ξ₁ + ξ₂ = k` on every uncensored path.
pub fn complementarity_holds(bundle: &PathBundle, k: f64) -> Result<bool> {
    let tau = bundle.tau().ok_or_else(|| Error::InvalidParameter("bundle has no second stopping time".into()))?;
    for p in 0..bundle.n_paths() {
        if bundle.is_censored(p) {
            continue;
        }
        let e = bundle.exit_s(p);
        let a = crate::backward::terminal_payoff(&TerminalSpec::Xi1 { k }, e, Some(&tau.exits[p]))?;
        let b = crate::backward::terminal_payoff(&TerminalSpec::Xi2 { k }, e, Some(&tau.exits[p]))?;
        if a + b != k {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{lsmc_solve, LsmcConfig};
    use crate::forward::{joint_exit, simulate_paths, ExitInfo, TauSource, TimeGrid};
    use crate::model::{Domain, Driver, Eta, SDECoefficients};
    use crate::oracle::{boundary_constant, profile_v, ExitProfile};
    use crate::regression::{DegeneratePolicy, RegressionConfig};

    fn config(z: bool) -> LsmcConfig {
        LsmcConfig {
            regression: RegressionConfig { on_degenerate: DegeneratePolicy::LowerDegree, ..Default::default() },
            estimate_z: z,
            ..Default::default()
        }
    }

    fn exit_bundle(n: usize, seed: u64) -> PathBundle {
        let grid = TimeGrid::new(4.0, 400).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let dom = Domain::interval(0.0, 2.0).unwrap();
        simulate_paths(&coeffs, Some(&dom), &[1.0], &grid, n, seed, true).unwrap()
    }

    fn given_tau(bundle: PathBundle, f: impl Fn(usize) -> ExitInfo) -> PathBundle {
        let exits = (0..bundle.n_paths()).map(f).collect();
        joint_exit(bundle, TauSource::Given(exits), 0).unwrap()
    }

    #[test]
    fn empty_event_is_all_low_sample() {
        let b = exit_bundle(200, 1);
        let grid = *b.grid();
        let b = given_tau(b, |_| ExitInfo::not_exited(&grid, vec![0.0]));
        let d = Driver::canonical(3.0, Eta::Constant(1.0)).unwrap();
        let f = lsmc_solve(&b, &d, &TerminalSpec::Xi2 { k: 5.0 }, &config(false)).unwrap();
        for a in [Alignment::Calendar { stride: 50 }, Alignment::ExitAligned] {
            let c = continuity_curve(&f, &b, Event::TauBeforeExit, a).unwrap();
            assert!(!c.is_empty());
            assert!(c.low_sample.iter().all(|&l| l));
            assert!(c.initial().is_none());
        }
    }

    #[test]
    fn zero_terminal_gives_zero_curve() {
        let b = exit_bundle(300, 2);
        let grid = *b.grid();
        let b = given_tau(b, |p| ExitInfo { exited: true, index: p % 50, time: grid.time(p % 50), state: vec![0.0] });
        let d = Driver::canonical(3.0, Eta::Constant(1.0)).unwrap();
        let f = lsmc_solve(&b, &d, &TerminalSpec::Xi2 { k: 0.0 }, &config(false)).unwrap();
        let c = continuity_curve(&f, &b, Event::TauBeforeExit, Alignment::Calendar { stride: 10 }).unwrap();
        assert!(c.values.iter().filter(|v| v.is_finite()).all(|&v| v == 0.0));
        assert!(complementarity_holds(&b, 7.0).unwrap());
    }

    #[test]
    fn deterministic_moment_sample() {
        let b = exit_bundle(100, 3);
        let b = given_tau(b, |_| ExitInfo { exited: true, index: 0, time: 0.0, state: vec![1.0] });
        let r = moment_estimate_xi1(&b, 3.0, 1.5, 2.0).unwrap();
        let expect = (2.0f64 * 1.0f64.powf(-1.0)).powf(1.5);
        assert!((r.estimate - expect).abs() < 1e-12);
        assert!(!r.divergence_suspect);
        let grid = *b.grid();
        let none = given_tau(exit_bundle(50, 3), |_| ExitInfo::not_exited(&grid, vec![0.0]));
        assert!(matches!(moment_estimate_xi1(&none, 3.0, 1.5, 2.0), Err(Error::UndefinedEstimate(_))));
    }

    #[test]
    fn envelope_needs_domain() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let coeffs = SDECoefficients::brownian(1).unwrap();
        let b = simulate_paths(&coeffs, None, &[0.0], &grid, 100, 1, false).unwrap();
        let d = Driver::canonical(3.0, Eta::Constant(1.0)).unwrap();
        let f = lsmc_solve(&b, &d, &TerminalSpec::Constant { k: 1.0 }, &config(false)).unwrap();
        assert!(ko_bound_fit(&f, &b, 3.0, EnvelopeSampling::default()).is_err());
    }

    #[test]
    fn envelope_of_exact_profile_near_boundary() {
        let b = exit_bundle(2000, 4);
        let profile = ExitProfile::infinite(2.0, 3.0).unwrap();
        let sampling = EnvelopeSampling { max_dist: Some(0.05), ..Default::default() };
        let fit = envelope_fit_with(&b, 3.0, sampling, |_, _, x| profile_v(x[0], &profile)).unwrap();
        let c = boundary_constant(3.0).unwrap();
        assert!((fit.c_hat - c).abs() < 0.02 * c, "{fit:?}");
        let few = exit_bundle(40, 4);
        let whole = envelope_fit_with(&few, 3.0, EnvelopeSampling::default(), |_, _, x| profile_v(x[0], &profile)).unwrap();
        assert!(whole.dist > 0.5, "unrestricted maximum sits in the interior: {whole:?}");
    }

    #[test]
    fn approach_windows_nest() {
        let b = exit_bundle(500, 5);
        let d = Driver::canonical(3.0, Eta::Constant(1.0)).unwrap();
        let f = lsmc_solve(&b, &d, &TerminalSpec::Constant { k: 5.0 }, &config(false)).unwrap();
        let fit = ko_bound_fit(&f, &b, 3.0, EnvelopeSampling::default()).unwrap();
        let r = bounded_before_sn(&f, &b, &[1.0, 2.0, 4.0, 8.0], 3.0, fit.c_hat, 0.05).unwrap();
        assert_eq!(r[0].window_samples, 0);
        assert_eq!(r[0].max_value, 0.0);
        for w in r.windows(2) {
            assert!(w[1].max_value >= w[0].max_value);
        }
        assert_eq!(r[2].violations, 0);
    }

    #[test]
    fn z_integral_cases() {
        let grid = TimeGrid::new(2.0, 100).unwrap();
        let dom = Domain::interval(0.0, 2.0).unwrap();
        let still = SDECoefficients::constant(vec![0.0], 0.0).unwrap();
        let b = simulate_paths(&still, Some(&dom), &[1.0], &grid, 200, 6, false).unwrap();
        let d = Driver::canonical(3.0, Eta::Constant(1.0)).unwrap();
        let f = lsmc_solve(&b, &d, &TerminalSpec::Constant { k: 5.0 }, &config(true)).unwrap();
        assert!(weighted_z_integral(&f, &b, 3.0, 1.5).unwrap().mean < 1e-20);
        let f0 = lsmc_solve(&b, &d, &TerminalSpec::Constant { k: 5.0 }, &config(false)).unwrap();
        assert!(weighted_z_integral(&f0, &b, 3.0, 1.5).is_err());

        let b = exit_bundle(4000, 7);
        let zero = Driver::zero(3.0).unwrap();
        let small = weighted_z_integral(&lsmc_solve(&b, &zero, &TerminalSpec::Constant { k: 1.0 }, &config(true)).unwrap(), &b, 3.0, 1.5).unwrap();
        assert!(small.mean.is_finite());
    }
}
