//! Shared domain types: drivers, domains, forward coefficients and terminal
//! conditions, plus sampled spot checks of the structural conditions the
//! solvers rely on.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Hölder conjugate `p = q / (q - 1)` of the driver exponent.
pub fn conjugate_exponent(q: f64) -> Result<f64> {
    if !(q > 1.0) || !q.is_finite() {
        return invalid(format!("q must exceed 1 (got {q})"));
    }
    Ok(q / (q - 1.0))
}

/// Exponent `2(p - 1) = 2 / (q - 1)` of the boundary blow-up envelope.
pub fn blowup_exponent(q: f64) -> Result<f64> {
    Ok(2.0 * (conjugate_exponent(q)? - 1.0))
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Deterministic, positive, bounded weight `η(t)` of the absorption term.
#[derive(Clone)]
pub enum Eta {
    Constant(f64),
    /// `intercept + slope * t`
    Affine { intercept: f64, slope: f64 },
    Custom(TimeFn),
}

impl Eta {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Eta::Constant(c) => *c,
            Eta::Affine { intercept, slope } => intercept + slope * t,
            Eta::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eta::Constant(c) => write!(f, "Eta::Constant({c})"),
            Eta::Affine { intercept, slope } => write!(f, "Eta::Affine({intercept} + {slope} t)"),
            Eta::Custom(_) => write!(f, "Eta::Custom(..)"),
        }
    }
}

#[derive(Clone)]
enum DriverForm {
    /// `f(t, y, z) = -y |y|^{q-1} / η(t)`
    Canonical,
    Zero,
    Custom { f: DriverFn, stiff: bool },
}

/// Generator `f(t, y, z)` of the backward equation.
#[derive(Clone)]
pub struct Driver {
    q: f64,
    eta: Eta,
    chi: f64,
    l_z: f64,
    form: DriverForm,
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            DriverForm::Canonical => "canonical",
            DriverForm::Zero => "zero",
            DriverForm::Custom { .. } => "custom",
        };
        f.debug_struct("Driver")
            .field("form", &form)
            .field("q", &self.q)
            .field("eta", &self.eta)
            .field("chi", &self.chi)
            .field("l_z", &self.l_z)
            .finish()
    }
}

impl Driver {
    /// `f(t, y) = -y |y|^{q-1} / η(t)`.
    pub fn canonical(q: f64, eta: Eta) -> Result<Self> {
        conjugate_exponent(q)?;
        Ok(Self { q, eta, chi: 0.0, l_z: 0.0, form: DriverForm::Canonical })
    }

    /// `f ≡ 0`. `q` is kept only for the envelope exponents.
    pub fn zero(q: f64) -> Result<Self> {
        conjugate_exponent(q)?;
        Ok(Self { q, eta: Eta::Constant(1.0), chi: 0.0, l_z: 0.0, form: DriverForm::Zero })
    }

    /// User-supplied generator. The solvers integrate `-y^q / η(t)` exactly
    /// and the remainder `f + y^q / η` explicitly.
    pub fn custom(q: f64, eta: Eta, chi: f64, l_z: f64, f: DriverFn) -> Result<Self> {
        conjugate_exponent(q)?;
        Ok(Self { q, eta, chi, l_z, form: DriverForm::Custom { f, stiff: true } })
    }

    /// Custom generator without a superlinear absorption part; stepped
    /// explicitly in full.
    pub fn custom_nonstiff(q: f64, eta: Eta, chi: f64, l_z: f64, f: DriverFn) -> Result<Self> {
        conjugate_exponent(q)?;
        Ok(Self { q, eta, chi, l_z, form: DriverForm::Custom { f, stiff: false } })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn l_z(&self) -> f64 {
        self.l_z
    }

    pub fn eta(&self, t: f64) -> f64 {
        self.eta.eval(t)
    }

    pub fn eta_spec(&self) -> &Eta {
        &self.eta
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.form, DriverForm::Canonical)
    }

    pub fn eval(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        match &self.form {
            DriverForm::Canonical => -y * y.abs().powf(self.q - 1.0) / self.eta(t),
            DriverForm::Zero => 0.0,
            DriverForm::Custom { f, .. } => f(t, y, z),
        }
    }

    /// Whether `-y^q / η` is split off and integrated exactly.
    pub fn has_stiff_part(&self) -> bool {
        match &self.form {
            DriverForm::Canonical => true,
            DriverForm::Zero => false,
            DriverForm::Custom { stiff, .. } => *stiff,
        }
    }

    /// `f(t, y, z) + y^q / η(t)` for `y ≥ 0`: what is left after removing the
    /// absorption term. Identically zero for the canonical driver.
    pub fn remainder(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        match &self.form {
            DriverForm::Canonical => 0.0,
            DriverForm::Zero => 0.0,
            DriverForm::Custom { f, stiff } => {
                let base = f(t, y, z);
                if *stiff {
                    base + y.max(0.0).powf(self.q) / self.eta(t)
                } else {
                    base
                }
            }
        }
    }
}

/// Bounded open set with a closed-form signed distance.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let d = Domain::Interval { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = Domain::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = Domain::Box { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Domain::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return invalid(format!("interval needs finite lo < hi (got {lo}, {hi})"));
                }
            }
            Domain::Ball { center, radius } => {
                if center.is_empty() || !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return invalid("ball needs a finite center and a positive radius");
                }
            }
            Domain::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || !finite(lo) || !finite(hi) {
                    return invalid("box corners must be finite and of equal dimension");
                }
                if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return invalid("box needs lo < hi in every coordinate");
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Ball { center, .. } => center.len(),
            Domain::Box { lo, .. } => lo.len(),
        }
    }

    /// Positive inside, zero on the boundary, negative outside.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return invalid(format!(
                "point has dimension {} but the domain has dimension {}",
                x.len(),
                self.dimension()
            ));
        }
        Ok(self.signed_distance_unchecked(x))
    }

    pub(crate) fn signed_distance_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            Domain::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                radius - r2.sqrt()
            }
            Domain::Box { lo, hi } => {
                let mut outside2 = 0.0;
                let mut inside = f64::INFINITY;
                for ((&xi, &l), &h) in x.iter().zip(lo).zip(hi) {
                    let excess = (l - xi).max(xi - h).max(0.0);
                    outside2 += excess * excess;
                    inside = inside.min((xi - l).min(h - xi));
                }
                if outside2 > 0.0 {
                    -outside2.sqrt()
                } else {
                    inside
                }
            }
        }
    }

    /// Nearest boundary point.
    pub fn project_to_boundary(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Domain::Interval { lo, hi } => {
                if x[0] - lo <= hi - x[0] {
                    vec![*lo]
                } else {
                    vec![*hi]
                }
            }
            Domain::Ball { center, radius } => {
                let r: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if r == 0.0 {
                    let mut p = center.clone();
                    p[0] += radius;
                    return p;
                }
                x.iter().zip(center).map(|(a, c)| c + (a - c) * radius / r).collect()
            }
            Domain::Box { lo, hi } => {
                let mut p: Vec<f64> = x.iter().zip(lo).zip(hi).map(|((v, l), h)| v.clamp(*l, *h)).collect();
                if self.signed_distance_unchecked(&p) > 0.0 {
                    // interior point: push the closest face out
                    let (axis, to_lo) = (0..p.len())
                        .map(|i| {
                            let dl = p[i] - lo[i];
                            let dh = hi[i] - p[i];
                            (i, dl <= dh, dl.min(dh))
                        })
                        .min_by(|a, b| a.2.total_cmp(&b.2))
                        .map(|(i, l, _)| (i, l))
                        .unwrap();
                    p[axis] = if to_lo { lo[axis] } else { hi[axis] };
                }
                p
            }
        }
    }

    /// Axis-aligned bounding box, used to scale regression features.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub(crate) fn sample_closure(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect();
            if self.signed_distance_unchecked(&x) >= 0.0 {
                return x;
            }
        }
    }
}

/// Drift `b` and diffusion `σ` (row-major `d × d`) of the forward diffusion.
#[derive(Clone)]
pub struct SDECoefficients {
    dim: usize,
    drift: VectorField,
    diffusion: VectorField,
    lipschitz_bound: f64,
    scalar: Option<(Vec<f64>, f64)>,
}

impl fmt::Debug for SDECoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SDECoefficients")
            .field("dim", &self.dim)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("constant", &self.scalar)
            .finish()
    }
}

impl SDECoefficients {
    pub fn new(dim: usize, drift: VectorField, diffusion: VectorField, lipschitz_bound: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        Ok(Self { dim, drift, diffusion, lipschitz_bound, scalar: None })
    }

    /// Constant drift and `σ·I` diffusion.
    pub fn constant(drift: Vec<f64>, sigma: f64) -> Result<Self> {
        let dim = drift.len();
        if dim == 0 || !sigma.is_finite() || drift.iter().any(|b| !b.is_finite()) {
            return invalid("constant coefficients must be finite and non-empty");
        }
        let b = drift.clone();
        let drift_fn: VectorField = Arc::new(move |_x, out| out.copy_from_slice(&b));
        let diffusion_fn: VectorField = Arc::new(move |_x, out| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = sigma;
            }
        });
        Ok(Self { dim, drift: drift_fn, diffusion: diffusion_fn, lipschitz_bound: 0.0, scalar: Some((drift, sigma)) })
    }

    /// Standard Brownian motion in `dim` dimensions.
    pub fn brownian(dim: usize) -> Result<Self> {
        Self::constant(vec![0.0; dim], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// `Some((b, σ))` when the coefficients are constant with `σ·I` diffusion.
    pub fn as_constant(&self) -> Option<(&[f64], f64)> {
        self.scalar.as_ref().map(|(b, s)| (b.as_slice(), *s))
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }
}

/// Terminal data at the exit time, already truncated at level `k`.
#[derive(Clone)]
pub enum TerminalSpec {
    Constant { k: f64 },
    /// `g(Ξ_S) ∧ k`; `g` may return `+∞`.
    Markovian { g: BoundaryFn, k: f64 },
    /// `k · 1{τ ≤ S}`
    Xi1 { k: f64 },
    /// `k · 1{τ > S}`
    Xi2 { k: f64 },
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalSpec::Constant { k } => write!(f, "constant({k})"),
            TerminalSpec::Markovian { k, .. } => write!(f, "markovian(g, {k})"),
            TerminalSpec::Xi1 { k } => write!(f, "xi1({k})"),
            TerminalSpec::Xi2 { k } => write!(f, "xi2({k})"),
        }
    }
}

impl TerminalSpec {
    pub fn k(&self) -> f64 {
        match self {
            TerminalSpec::Constant { k }
            | TerminalSpec::Markovian { k, .. }
            | TerminalSpec::Xi1 { k }
            | TerminalSpec::Xi2 { k } => *k,
        }
    }

    pub fn needs_tau(&self) -> bool {
        matches!(self, TerminalSpec::Xi1 { .. } | TerminalSpec::Xi2 { .. })
    }

    /// Same family at a different truncation level.
    pub fn with_k(&self, k: f64) -> Self {
        match self {
            TerminalSpec::Constant { .. } => TerminalSpec::Constant { k },
            TerminalSpec::Markovian { g, .. } => TerminalSpec::Markovian { g: g.clone(), k },
            TerminalSpec::Xi1 { .. } => TerminalSpec::Xi1 { k },
            TerminalSpec::Xi2 { .. } => TerminalSpec::Xi2 { k },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if !(k.is_finite() && k >= 0.0) {
            return invalid(format!("truncation level must be finite and non-negative (got {k})"));
        }
        Ok(())
    }
}

/// Sampling grid for [`validate_driver`].
#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub t_max: f64,
    pub y_max: f64,
    pub n_t: usize,
    pub n_y: usize,
    pub z_samples: Vec<Vec<f64>>,
    pub eta_max: f64,
    pub tol: f64,
}

impl SampleSpec {
    pub fn new(t_max: f64, y_max: f64, eta_max: f64) -> Self {
        Self { t_max, y_max, n_t: 11, n_y: 41, z_samples: vec![vec![0.0], vec![1.0], vec![-2.0]], eta_max, tol: 1e-9 }
    }

    fn times(&self) -> Vec<f64> {
        let n = self.n_t.max(1);
        (0..n).map(|i| if n == 1 { 0.0 } else { self.t_max * i as f64 / (n - 1) as f64 }).collect()
    }

    fn levels(&self) -> Vec<f64> {
        let n = self.n_y.max(2);
        (0..n).map(|i| self.y_max * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub y: f64,
    pub y_other: Option<f64>,
    pub z: Vec<f64>,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub condition: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub worst: Option<Violation>,
    pub first: Option<Violation>,
}

impl ConditionCheck {
    fn new(condition: &'static str, description: &'static str) -> Self {
        Self { condition, description, passed: true, samples: 0, worst: None, first: None }
    }

    fn record(&mut self, excess: f64, tol: f64, sample: impl FnOnce() -> Violation) {
        self.samples += 1;
        let failing = excess > tol || excess.is_nan();
        if !failing {
            return;
        }
        self.passed = false;
        let v = sample();
        if self.first.is_none() {
            self.first = Some(v.clone());
        }
        let worse = match &self.worst {
            None => true,
            Some(w) => excess > w.excess || excess.is_nan(),
        };
        if worse {
            self.worst = Some(Violation { excess, ..v });
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

/// Grid spot checks of positivity of `η`, the absorption bound, monotonicity
/// in `y` and the Lipschitz bound in `z`. Failures go into the report.
pub fn validate_driver(driver: &Driver, spec: &SampleSpec) -> ValidationReport {
    let times = spec.times();
    let levels = spec.levels();
    let tol = spec.tol;
    let q = driver.q();

    let mut eta = ConditionCheck::new("eta", "0 < eta(t) <= eta_max");
    for &t in &times {
        let e = driver.eta(t);
        let excess = if e > 0.0 { e - spec.eta_max } else { f64::INFINITY };
        eta.record(excess, tol, || Violation { t, y: e, y_other: None, z: vec![], excess });
    }

    let mut b1 = ConditionCheck::new("B1", "f(t,y,z) <= -y^q/eta(t) + f(t,0,z) for y >= 0");
    let mut a1 = ConditionCheck::new("A1", "(f(t,y,z)-f(t,y',z))(y-y') <= chi (y-y')^2");
    let mut a4 = ConditionCheck::new("A4", "|f(t,y,z)-f(t,y,z')| <= L_z |z-z'|");
    for &t in &times {
        let e = driver.eta(t);
        for z in &spec.z_samples {
            let f0 = driver.eval(t, 0.0, z);
            for &y in &levels {
                let f = driver.eval(t, y, z);
                let bound = -y.powf(q) / e + f0;
                let scale = 1.0 + bound.abs();
                let excess = (f - bound) / scale;
                b1.record(excess, tol, || Violation { t, y, y_other: None, z: z.clone(), excess });
            }
            for (i, &y) in levels.iter().enumerate() {
                for &y2 in &levels[i + 1..] {
                    let dy = y - y2;
                    let lhs = (driver.eval(t, y, z) - driver.eval(t, y2, z)) * dy;
                    let rhs = driver.chi() * dy * dy;
                    let excess = (lhs - rhs) / (1.0 + rhs.abs());
                    a1.record(excess, tol, || Violation { t, y, y_other: Some(y2), z: z.clone(), excess });
                }
            }
        }
        for &y in &levels {
            for (i, z) in spec.z_samples.iter().enumerate() {
                for z2 in &spec.z_samples[i + 1..] {
                    let dz: f64 = z.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let lhs = (driver.eval(t, y, z) - driver.eval(t, y, z2)).abs();
                    let rhs = driver.l_z() * dz;
                    let excess = (lhs - rhs) / (1.0 + rhs);
                    a4.record(excess, tol, || Violation { t, y, y_other: None, z: z.clone(), excess });
                }
            }
        }
    }

    let mut notes = Vec::new();
    if driver.chi() != 0.0 {
        notes.push(format!(
            "exponential-moment constants are only explicit for chi = 0; chi = {} so that check is skipped",
            driver.chi()
        ));
    } else {
        notes.push("exponential-moment condition on the exit time is not checked (informational)".into());
    }
    ValidationReport { checks: vec![eta, b1, a1, a4], notes }
}

/// Spot check that the coefficients are finite on the closure of the domain
/// and that sampled difference quotients respect the declared Lipschitz bound.
pub fn validate_coefficients(coeffs: &SDECoefficients, domain: &Domain, samples: usize, seed: u64) -> ValidationReport {
    let d = coeffs.dim();
    let mut finite = ConditionCheck::new("finite", "b and sigma finite on the closure of D");
    let mut lip = ConditionCheck::new("lipschitz", "|b(x)-b(x')| + |sigma(x)-sigma(x')| <= K |x-x'|");
    if domain.dimension() != d {
        finite.passed = false;
        return ValidationReport {
            checks: vec![finite],
            notes: vec![format!("dimension mismatch: coefficients {d}, domain {}", domain.dimension())],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];
    for _ in 0..samples {
        let x = domain.sample_closure(&mut rng);
        let y = domain.sample_closure(&mut rng);
        coeffs.drift(&x, &mut b1);
        coeffs.diffusion(&x, &mut s1);
        coeffs.drift(&y, &mut b2);
        coeffs.diffusion(&y, &mut s2);
        let all_finite = b1.iter().chain(&s1).chain(&b2).chain(&s2).all(|v| v.is_finite());
        let excess = if all_finite { 0.0 } else { f64::INFINITY };
        finite.record(excess, 0.0, || Violation { t: 0.0, y: x[0], y_other: Some(y[0]), z: x.clone(), excess });
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dx == 0.0 || !all_finite {
            continue;
        }
        let db: f64 = b1.iter().zip(&b2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let ds: f64 = s1.iter().zip(&s2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let excess = (db + ds) / dx - coeffs.lipschitz_bound();
        lip.record(excess, 1e-9, || Violation { t: 0.0, y: x[0], y_other: Some(y[0]), z: x.clone(), excess });
    }
    ValidationReport { checks: vec![finite, lip], notes: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_exponent_values() {
        assert_eq!(conjugate_exponent(2.0).unwrap(), 2.0);
        assert!((conjugate_exponent(3.0).unwrap() - 1.5).abs() < 1e-15);
        assert!(conjugate_exponent(1.0).is_err());
        assert!(conjugate_exponent(0.5).is_err());
        assert!(conjugate_exponent(f64::NAN).is_err());
    }

    #[test]
    fn conjugate_exponent_decreases_towards_one() {
        let mut prev = f64::INFINITY;
        for q in [1.1, 2.0, 5.0, 50.0, 1e4] {
            let p = conjugate_exponent(q).unwrap();
            assert!(p < prev && p > 1.0);
            prev = p;
        }
    }

    #[test]
    fn conjugate_is_an_involution() {
        for q in [1.5, 2.0, 3.0, 7.0] {
            let back = conjugate_exponent(conjugate_exponent(q).unwrap()).unwrap();
            assert!((back - q).abs() < 1e-12);
            let p = conjugate_exponent(q).unwrap();
            assert!((2.0 * (p - 1.0) - 2.0 / (q - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_distance_examples() {
        let iv = Domain::interval(0.0, 2.0).unwrap();
        assert_eq!(iv.signed_distance(&[1.0]).unwrap(), 1.0);
        assert_eq!(iv.signed_distance(&[0.0]).unwrap(), 0.0);
        assert_eq!(iv.signed_distance(&[-0.5]).unwrap(), -0.5);
        assert!(iv.signed_distance(&[1.0, 0.0]).is_err());

        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(ball.signed_distance(&[0.6, 0.8]).unwrap().abs() < 1e-15);
        assert!((ball.signed_distance(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);

        let bx = Domain::cube(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert!((bx.signed_distance(&[1.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((bx.signed_distance(&[3.0, 2.0]).unwrap() + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::ball(vec![0.0], 0.0).is_err());
        assert!(Domain::cube(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn projection_lands_on_boundary() {
        let bx = Domain::cube(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        for p in [[0.5, 0.2], [1.4, 0.5], [-0.1, -0.3]] {
            let b = bx.project_to_boundary(&p);
            assert!(bx.signed_distance(&b).unwrap().abs() < 1e-15);
        }
        let ball = Domain::ball(vec![1.0, 1.0], 2.0).unwrap();
        let b = ball.project_to_boundary(&[4.0, 5.0]);
        assert!(ball.signed_distance(&b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn canonical_driver_passes_validation() {
        let d = Driver::canonical(2.0, Eta::Constant(1.0)).unwrap();
        let r = validate_driver(&d, &SampleSpec::new(1.0, 10.0, 1.0));
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn positive_square_fails_b1_at_one() {
        let f: DriverFn = Arc::new(|_t, y, _z| y * y);
        let d = Driver::custom(2.0, Eta::Constant(1.0), 10.0, 0.0, f).unwrap();
        let mut spec = SampleSpec::new(1.0, 1.0, 1.0);
        spec.n_y = 2;
        let r = validate_driver(&d, &spec);
        let b1 = r.check("B1").unwrap();
        assert!(!b1.passed);
        assert_eq!(b1.first.as_ref().unwrap().y, 1.0);
    }

    #[test]
    fn time_dependent_eta_passes_with_matching_bound() {
        let eta = Eta::Affine { intercept: 1.0, slope: 1.0 };
        let f: DriverFn = Arc::new(|t, y, _z| -y * y * y / (1.0 + t));
        let d = Driver::custom(3.0, eta.clone(), 0.0, 0.0, f.clone()).unwrap();
        assert!(validate_driver(&d, &SampleSpec::new(1.0, 5.0, 2.0)).passed());
        // bound too small for η(1) = 2
        let r = validate_driver(&d, &SampleSpec::new(1.0, 5.0, 1.5));
        assert!(!r.check("eta").unwrap().passed);
    }

    #[test]
    fn terminal_spec_family() {
        let s = TerminalSpec::Xi1 { k: 3.0 };
        assert!(s.needs_tau());
        assert_eq!(s.with_k(7.0).k(), 7.0);
        assert!(TerminalSpec::Constant { k: f64::INFINITY }.validate().is_err());
        assert!(TerminalSpec::Constant { k: -1.0 }.validate().is_err());
    }

    #[test]
    fn brownian_coefficients_validate() {
        let c = SDECoefficients::brownian(2).unwrap();
        let d = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(validate_coefficients(&c, &d, 50, 1).passed());
    }
}
