//! Reference solutions.
//!
//! * the deterministic blow-up profile `((q-1)(T-t))^{1-p}` and its
//!   truncation at level `k`;
//! * the transform `Θ(x) = η x^{1-q} / (q-1)` that linearizes `y' = y^q / η`;
//! * the symmetric solutions of `½ v'' = v^q` on `(0, L)` with boundary value
//!   `n` or `+∞`, obtained by inverting the first integral
//!
//!   `x(v, v_l) = v_l^{(1-q)/2} √((q+1)/4) ∫_1^{v/v_l} (u^{q+1} - 1)^{-1/2} du`;
//! * the boundary envelope `C dist^{-2(p-1)}`.
//!
//! The kernel integral is evaluated with the substitution `u = 1 + s²`
//! (which removes the inverse square root at `u = 1`) on `[1, 10]`, and by
//! its convergent power series in `u^{-(q+1)}` beyond `u = 10`.

use crate::error::{invalid, Error, Result};
use crate::model::conjugate_exponent;
use crate::quadrature;

const SWITCH: f64 = 10.0;
const PANEL_WIDTH: f64 = 0.125;

/// `((q-1)(T-t))^{1-p}`, the solution of `y' = y^q` that explodes at `T`.
pub fn blowup_profile(q: f64, horizon: f64, t: f64) -> Result<f64> {
    let p = conjugate_exponent(q)?;
    if !(t < horizon) {
        return invalid(format!("blow-up profile needs t < T (t = {t}, T = {horizon})"));
    }
    Ok(((q - 1.0) * (horizon - t)).powf(1.0 - p))
}

/// Solution of `y' = y^q`, `y(T) = k`: `(k^{1-q} + (q-1)(T-t))^{-1/(q-1)}`.
pub fn truncated_profile(q: f64, horizon: f64, k: f64, t: f64) -> Result<f64> {
    truncated_profile_eta(q, 1.0, horizon, k, t)
}

/// Same with a constant weight: `y' = y^q / η`.
pub fn truncated_profile_eta(q: f64, eta: f64, horizon: f64, k: f64, t: f64) -> Result<f64> {
    conjugate_exponent(q)?;
    if !(k > 0.0) || !k.is_finite() {
        return invalid(format!("truncation level must be positive and finite (got {k})"));
    }
    if !(eta > 0.0) {
        return invalid(format!("eta must be positive (got {eta})"));
    }
    if t > horizon {
        return invalid(format!("t = {t} lies beyond the horizon {horizon}"));
    }
    Ok((k.powf(1.0 - q) + (q - 1.0) * (horizon - t) / eta).powf(-1.0 / (q - 1.0)))
}

/// `Θ(x) = ∫_x^∞ η / y^q dy = η x^{1-q} / (q-1)`.
pub fn theta(x: f64, q: f64, eta: f64) -> Result<f64> {
    conjugate_exponent(q)?;
    if !(x > 0.0) || !(eta > 0.0) {
        return invalid(format!("theta needs x > 0 and eta > 0 (x = {x}, eta = {eta})"));
    }
    Ok(eta * x.powf(1.0 - q) / (q - 1.0))
}

/// Inverse of [`theta`].
pub fn theta_inv(u: f64, q: f64, eta: f64) -> Result<f64> {
    conjugate_exponent(q)?;
    if !(u > 0.0) || !(eta > 0.0) {
        return invalid(format!("theta_inv needs u > 0 and eta > 0 (u = {u}, eta = {eta})"));
    }
    Ok((u * (q - 1.0) / eta).powf(-1.0 / (q - 1.0)))
}

/// `C · dist^{-2(p-1)}`.
pub fn keller_osserman_envelope(dist: f64, c: f64, q: f64) -> Result<f64> {
    let p = conjugate_exponent(q)?;
    if !(dist > 0.0) {
        return invalid(format!("envelope needs a positive distance (got {dist})"));
    }
    Ok(c * dist.powf(-2.0 * (p - 1.0)))
}

/// Limit of `v(x) · dist(x)^{2/(q-1)}` at the boundary for solutions of
/// `½ v'' = v^q` with infinite boundary values: `(α(α+1)/2)^{1/(q-1)}`,
/// `α = 2/(q-1)`.
pub fn boundary_constant(q: f64) -> Result<f64> {
    conjugate_exponent(q)?;
    let alpha = 2.0 / (q - 1.0);
    Ok((alpha * (alpha + 1.0) / 2.0).powf(1.0 / (q - 1.0)))
}

/// `∫_1^U (u^{q+1} - 1)^{-1/2} du` for one exponent.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    q: f64,
    a: f64,
    head: f64,
    tail_at_switch: f64,
    prefactor: f64,
}

impl Kernel {
    fn new(q: f64) -> Result<Self> {
        conjugate_exponent(q)?;
        let a = q + 1.0;
        let mut k = Self { q, a, head: 0.0, tail_at_switch: 0.0, prefactor: (a / 4.0).sqrt() };
        k.head = k.near(SWITCH);
        k.tail_at_switch = k.tail(SWITCH);
        Ok(k)
    }

    /// Substituted integral over `[1, U]`, `U ≤ SWITCH`.
    fn near(&self, upper: f64) -> f64 {
        let a = self.a;
        let s_max = (upper - 1.0).max(0.0).sqrt();
        quadrature::integrate(
            |s| {
                let s2 = s * s;
                let denom = (a * s2.ln_1p()).exp_m1();
                if denom > 0.0 {
                    2.0 * s / denom.sqrt()
                } else {
                    2.0 / a.sqrt()
                }
            },
            0.0,
            s_max,
            PANEL_WIDTH,
        )
    }

    /// `∫_U^∞ (u^a - 1)^{-1/2} du = Σ_j C(2j, j) 4^{-j} U^{1 - a(j+½)} / (a(j+½) - 1)`.
    fn tail(&self, upper: f64) -> f64 {
        let a = self.a;
        let r = upper.powf(-a);
        let mut coef = 1.0;
        let mut pow = upper.powf(1.0 - 0.5 * a);
        let mut sum = 0.0;
        for j in 0..200 {
            let jf = j as f64;
            let term = coef * pow / (a * (jf + 0.5) - 1.0);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coef *= (2.0 * jf + 1.0) / (2.0 * jf + 2.0);
            pow *= r;
        }
        sum
    }

    fn integral(&self, upper: f64) -> f64 {
        if upper <= 1.0 {
            0.0
        } else if upper <= SWITCH {
            self.near(upper)
        } else if upper.is_infinite() {
            self.head + self.tail_at_switch
        } else {
            self.head + self.tail_at_switch - self.tail(upper)
        }
    }

    fn scale(&self, v_l: f64) -> f64 {
        v_l.powf(0.5 * (1.0 - self.q)) * self.prefactor
    }

    fn x(&self, v: f64, v_l: f64) -> f64 {
        self.scale(v_l) * self.integral(v / v_l)
    }

    fn half_width(&self, v_l: f64) -> f64 {
        self.scale(v_l) * self.integral(f64::INFINITY)
    }
}

/// `x(v, v_l)`: distance from the trough at which the symmetric solution
/// with trough value `v_l` reaches the value `v`.
pub fn bmx(v: f64, v_l: f64, q: f64) -> Result<f64> {
    if !(v_l > 0.0) {
        return invalid(format!("trough value must be positive (got {v_l})"));
    }
    if !(v >= v_l) {
        return invalid(format!("bmx needs v >= v_l (v = {v}, v_l = {v_l})"));
    }
    Ok(Kernel::new(q)?.x(v, v_l))
}

/// `x(∞, v_l)`: half-width of the interval on which the solution with trough
/// value `v_l` blows up at both ends.
#[allow(non_snake_case)]
pub fn bmL(v_l: f64, q: f64) -> Result<f64> {
    if !(v_l > 0.0) || !v_l.is_finite() {
        return invalid(format!("trough value must be positive and finite (got {v_l})"));
    }
    Ok(Kernel::new(q)?.half_width(v_l))
}

/// Bisection on a monotone function until the bracket stops shrinking.
/// `f(lo)` and `f(hi)` must have opposite signs.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo_positive = f(lo) > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == f_lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_length(length: f64) -> Result<()> {
    if !(length > 0.0) || !length.is_finite() {
        return invalid(format!("interval length must be positive (got {length})"));
    }
    Ok(())
}

/// Unique `v*` with `bmL(v*) = L/2`: trough value of the solution that is
/// infinite at both ends of `(0, L)`.
pub fn solve_vstar(length: f64, q: f64) -> Result<f64> {
    check_length(length)?;
    let kernel = Kernel::new(q)?;
    let target = 0.5 * length;
    let g = |v: f64| kernel.half_width(v) - target;
    let (mut lo, mut hi) = (1.0, 1.0);
    if g(1.0) > 0.0 {
        while g(hi) > 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical("v* bracket growth overflowed".into()));
            }
        }
    } else {
        while g(lo) <= 0.0 {
            lo *= 0.5;
            if lo == 0.0 {
                return Err(Error::Numerical("v* bracket shrink underflowed".into()));
            }
        }
    }
    let v = bisect(lo, hi, g);
    let residual = g(v).abs();
    if residual > 1e-9 * (1.0 + target) {
        return Err(Error::Numerical(format!("v* residual {residual} too large")));
    }
    Ok(v)
}

/// Trough value `v_n` of the solution equal to `n` at both ends of `(0, L)`:
/// the root of `bmx(n, v) = L/2`. Increases to `v*` as `n → ∞`.
pub fn solve_vn(n: f64, length: f64, q: f64) -> Result<f64> {
    check_length(length)?;
    if !(n > 0.0) || !n.is_finite() {
        return invalid(format!("boundary value n must be positive and finite so that a trough v <= n exists (got {n})"));
    }
    let kernel = Kernel::new(q)?;
    let target = 0.5 * length;
    let g = |v: f64| kernel.x(n, v) - target;
    // g(n) = -L/2 < 0 and g → +∞ as v → 0
    let hi = n;
    let mut lo = n.min(solve_vstar(length, q)?) * 0.5;
    while g(lo) <= 0.0 {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::Numerical("v_n bracket shrink underflowed".into()));
        }
    }
    let v = bisect(lo, hi, g);
    let residual = g(v).abs();
    if residual > 1e-9 * (1.0 + target) {
        return Err(Error::Numerical(format!("v_n residual {residual} too large")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    /// Boundary value `n` at both ends.
    Finite(f64),
    Infinite,
}

/// Symmetric solution of `½ v'' = v^q` on `(0, L)`.
#[derive(Debug, Clone, Copy)]
pub struct ExitProfile {
    q: f64,
    length: f64,
    v_l: f64,
    kind: ProfileKind,
    kernel: Kernel,
}

impl ExitProfile {
    pub fn finite(n: f64, length: f64, q: f64) -> Result<Self> {
        let v_l = solve_vn(n, length, q)?;
        Ok(Self { q, length, v_l, kind: ProfileKind::Finite(n), kernel: Kernel::new(q)? })
    }

    pub fn infinite(length: f64, q: f64) -> Result<Self> {
        let v_l = solve_vstar(length, q)?;
        Ok(Self { q, length, v_l, kind: ProfileKind::Infinite, kernel: Kernel::new(q)? })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Value at the midpoint.
    pub fn trough(&self) -> f64 {
        self.v_l
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    /// `v(x) = x^{-1}(|x - L/2|, v_l)`; infinite profiles return `+∞` on the
    /// boundary.
    pub fn value(&self, x: f64) -> Result<f64> {
        let half = 0.5 * self.length;
        let r = (x - half).abs();
        if !(r <= half * (1.0 + 1e-12)) {
            return invalid(format!("x = {x} lies outside [0, {}]", self.length));
        }
        let scale = self.kernel.scale(self.v_l);
        let target = r / scale;
        let g = |u: f64| self.kernel.integral(u) - target;
        let upper = match self.kind {
            ProfileKind::Finite(n) => {
                let u_max = n / self.v_l;
                if g(u_max) <= 0.0 {
                    return Ok(n);
                }
                u_max
            }
            ProfileKind::Infinite => {
                if r >= half {
                    return Ok(f64::INFINITY);
                }
                let mut u = 2.0;
                while g(u) <= 0.0 {
                    u *= 2.0;
                    if !u.is_finite() {
                        return Ok(f64::INFINITY);
                    }
                }
                u
            }
        };
        if target <= 0.0 {
            return Ok(self.v_l);
        }
        Ok(self.v_l * bisect(1.0, upper, g))
    }
}

/// Convenience wrapper over [`ExitProfile::value`].
pub fn profile_v(x: f64, profile: &ExitProfile) -> Result<f64> {
    profile.value(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_0^1 dt / sqrt(1 - t^4) = Γ(1/4)Γ(1/2) / (4 Γ(3/4)).
    const LEMNISCATE_QUARTER: f64 = 1.311_028_777_146_059_9;

    #[test]
    fn blowup_profile_values() {
        assert!((blowup_profile(2.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((blowup_profile(3.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(blowup_profile(2.0, 1.0, 1.0).is_err());
        // power law in the time to go
        let q = 2.5;
        let p = conjugate_exponent(q).unwrap();
        let base = blowup_profile(q, 1.0, 0.0).unwrap();
        for s in [0.1, 0.3, 0.9] {
            let y = blowup_profile(q, 1.0, 1.0 - s).unwrap();
            assert!((y - base * s.powf(1.0 - p)).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn truncated_profile_values() {
        assert!((truncated_profile(2.0, 1.0, 10.0, 0.0).unwrap() - 1.0 / 1.1).abs() < 1e-15);
        assert!((truncated_profile(3.0, 2.0, 4.0, 2.0).unwrap() - 4.0).abs() < 1e-14);
        let limit = blowup_profile(2.0, 1.0, 0.3).unwrap();
        let mut prev = 0.0;
        for k in [1.0, 10.0, 1e3, 1e6, 1e9] {
            let y = truncated_profile(2.0, 1.0, k, 0.3).unwrap();
            assert!(y > prev && y < limit);
            prev = y;
        }
        assert!((prev - limit).abs() < 1e-8);
    }

    #[test]
    fn theta_values_and_inverse() {
        assert!((theta(2.0, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        for u in [0.1, 1.0, 10.0] {
            let x = theta_inv(u, 3.0, 1.7).unwrap();
            assert!((theta(x, 3.0, 1.7).unwrap() - u).abs() < 1e-12 * u);
        }
        assert!(theta(0.0, 2.0, 1.0).is_err());
        assert!(theta_inv(-1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn theta_linearizes_blowup_profile() {
        for q in [1.5, 2.0, 3.0, 4.5] {
            for t in [0.0, 0.4, 0.9, 0.999] {
                let y = blowup_profile(q, 1.0, t).unwrap();
                assert!((theta(y, q, 1.0).unwrap() - (1.0 - t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn envelope_values() {
        assert!((keller_osserman_envelope(0.5, 1.0, 3.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((keller_osserman_envelope(0.1, 1.0, 2.0).unwrap() - 100.0).abs() < 1e-10);
        assert!(keller_osserman_envelope(0.0, 1.0, 2.0).is_err());
        let q = 3.7;
        let d = 0.013;
        let e = keller_osserman_envelope(d, 2.5, q).unwrap();
        assert!((e * d.powf(2.0 / (q - 1.0)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn bmx_basics() {
        assert_eq!(bmx(1.3, 1.3, 3.0).unwrap(), 0.0);
        assert!(bmx(1.0, 2.0, 3.0).is_err());
        for lambda in [0.5, 2.0] {
            for (v, vl, q) in [(3.0, 1.0, 3.0), (40.0, 2.0, 2.0), (7.0, 0.3, 5.0)] {
                let lhs = bmx(lambda * v, lambda * vl, q).unwrap();
                let rhs = lambda.powf(0.5 * (1.0 - q)) * bmx(v, vl, q).unwrap();
                assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn bmx_continuous_across_switch() {
        let q = 2.3;
        let below = bmx(10.0 * (1.0 - 1e-12), 1.0, q).unwrap();
        let above = bmx(10.0 * (1.0 + 1e-12), 1.0, q).unwrap();
        assert!((above - below).abs() < 1e-10);
    }

    #[test]
    fn bmx_tends_to_lemniscate_constant() {
        let big = bmx(1e12, 1.0, 3.0).unwrap();
        assert!((big - LEMNISCATE_QUARTER).abs() < 1e-10);
        assert!((bmL(1.0, 3.0).unwrap() - LEMNISCATE_QUARTER).abs() < 1e-12);
    }

    #[test]
    fn bml_power_law_and_monotonicity() {
        for v in [0.3, 1.0, 2.0, 17.0] {
            assert!((bmL(v, 3.0).unwrap() - LEMNISCATE_QUARTER / v).abs() < 1e-12);
        }
        for q in [2.0, 3.0, 5.0] {
            assert!(bmL(1.0, q).unwrap() > bmL(2.0, q).unwrap());
            let c = bmL(1.0, q).unwrap();
            for v in [0.1, 3.0, 50.0] {
                assert!((bmL(v, q).unwrap() * v.powf(0.5 * (q - 1.0)) - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn vstar_closed_form() {
        let v = solve_vstar(2.0, 3.0).unwrap();
        assert!((v - LEMNISCATE_QUARTER).abs() < 1e-9);
        let v4 = solve_vstar(4.0, 3.0).unwrap();
        assert!((v4 - LEMNISCATE_QUARTER / 2.0).abs() < 1e-9);
        assert!(solve_vstar(0.0, 3.0).is_err());
    }

    #[test]
    fn vstar_bisection_and_secant_agree() {
        for (length, q) in [(2.0, 3.0), (1.0, 2.0), (5.0, 4.0)] {
            let v = solve_vstar(length, q).unwrap();
            let g = |x: f64| bmL(x, q).unwrap() - 0.5 * length;
            let (mut a, mut b) = (0.5 * v, 2.0 * v);
            for _ in 0..100 {
                let c = b - g(b) * (b - a) / (g(b) - g(a));
                a = b;
                b = c;
                if (b - a).abs() < 1e-15 * b {
                    break;
                }
            }
            assert!((b - v).abs() < 1e-8);
        }
    }

    #[test]
    fn vn_ladder_increases_to_vstar() {
        let vstar = solve_vstar(2.0, 3.0).unwrap();
        let v5 = solve_vn(5.0, 2.0, 3.0).unwrap();
        let v50 = solve_vn(50.0, 2.0, 3.0).unwrap();
        let v500 = solve_vn(500.0, 2.0, 3.0).unwrap();
        assert!(v5 < v50 && v50 < v500 && v500 < vstar);
        for (n, v) in [(5.0, v5), (50.0, v50), (500.0, v500)] {
            assert!((bmx(n, v, 3.0).unwrap() - 1.0).abs() < 1e-9);
        }
        assert!((solve_vn(1000.0, 2.0, 3.0).unwrap() - vstar).abs() < 1e-2);
        assert!(solve_vn(0.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn profile_boundary_and_center() {
        let prof = ExitProfile::finite(5.0, 2.0, 3.0).unwrap();
        assert!((prof.value(1.0).unwrap() - prof.trough()).abs() < 1e-15);
        assert!((prof.value(0.0).unwrap() - 5.0).abs() < 1e-6);
        assert!((prof.value(2.0).unwrap() - 5.0).abs() < 1e-6);
        assert!(prof.value(2.5).is_err());
        for x in [0.1, 0.37, 0.8] {
            assert!((prof.value(x).unwrap() - prof.value(2.0 - x).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn profile_solves_the_ode() {
        let h = 1e-4;
        for prof in [ExitProfile::finite(5.0, 2.0, 3.0).unwrap(), ExitProfile::infinite(2.0, 3.0).unwrap()] {
            for i in 1..100 {
                let x = 0.02 + 0.96 * i as f64 / 100.0;
                let v = prof.value(x).unwrap();
                let d2 = (prof.value(x - h).unwrap() - 2.0 * v + prof.value(x + h).unwrap()) / (h * h);
                let res = 0.5 * d2 - v.powf(3.0);
                assert!(res.abs() <= 1e-4 * (1.0 + v.powf(3.0)), "x={x} res={res}");
            }
        }
    }

    #[test]
    fn infinite_profile_boundary_asymptotics() {
        let prof = ExitProfile::infinite(2.0, 3.0).unwrap();
        let c = boundary_constant(3.0).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let d = 1e-4;
        let v = prof.value(d).unwrap();
        assert!((v * d - c).abs() < 0.02 * c, "{}", v * d);
        assert!(prof.value(0.0).unwrap().is_infinite());
    }

    #[test]
    fn ladder_profiles_are_ordered() {
        let a = ExitProfile::finite(5.0, 2.0, 3.0).unwrap();
        let b = ExitProfile::finite(50.0, 2.0, 3.0).unwrap();
        let inf = ExitProfile::infinite(2.0, 3.0).unwrap();
        for i in 1..100 {
            let x = 2.0 * i as f64 / 100.0;
            let (va, vb, vi) = (a.value(x).unwrap(), b.value(x).unwrap(), inf.value(x).unwrap());
            assert!(va <= vb && vb <= vi, "x={x}: {va} {vb} {vi}");
        }
    }

    #[test]
    fn bmx_strictly_increasing_in_v() {
        let mut prev = -1.0;
        for i in 0..200 {
            let v = 1.0 + 0.25 * i as f64;
            let x = bmx(v, 1.0, 2.5).unwrap();
            assert!(x > prev);
            prev = x;
        }
    }
}
