//! Flat TOML experiment configuration.
//!
//! Every key lives at the top level of the document. Unknown keys are
//! errors, so a typo never silently falls back to a default.

use std::fmt;

use singular_bsde::backward::StepScheme;
use singular_bsde::regression::{BasisKind, DegeneratePolicy, RegressionConfig};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("line {line}: key `{key}` expects {expected}")]
    Type { key: String, line: usize, expected: &'static str },
    #[error("line {line}: key `{key}`: {message}")]
    Invalid { key: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LadderDeterministic,
    LadderExit,
    Xi1,
    Xi2,
    PdeCrosscheck,
    OracleTable,
}

impl ExperimentKind {
    pub const ALL: [(&'static str, ExperimentKind); 6] = [
        ("ladder-deterministic", ExperimentKind::LadderDeterministic),
        ("ladder-exit", ExperimentKind::LadderExit),
        ("xi1", ExperimentKind::Xi1),
        ("xi2", ExperimentKind::Xi2),
        ("pde-crosscheck", ExperimentKind::PdeCrosscheck),
        ("oracle-table", ExperimentKind::OracleTable),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }

    fn simulates(self) -> bool {
        matches!(self, Self::LadderDeterministic | Self::LadderExit | Self::Xi1 | Self::Xi2)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed(f64),
    /// Doubled until a pilot run leaves almost no path inside the domain.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub q: f64,
    pub eta: f64,
    pub eta_slope: f64,
    /// The domain is the interval `(0, length)`.
    pub length: f64,
    pub x0: f64,
    pub tau_x0: f64,
    pub horizon: Horizon,
    pub n_steps: usize,
    pub n_paths: usize,
    pub pilot_paths: usize,
    pub bridge: bool,
    pub k_list: Vec<f64>,
    pub regression: RegressionConfig,
    pub scheme: StepScheme,
    pub seed: u64,
    pub seed_tau: u64,
    pub curve_stride: usize,
    pub boundary_value: f64,
    pub m: usize,
    pub n_list: Vec<f64>,
    pub varrho: Option<f64>,
    pub expect_moment_stable: Option<bool>,
    /// Relative tolerance of each rung against its oracle.
    pub tolerance: f64,
    /// Relative tolerance of the top rung against the singular limit.
    pub limit_tolerance: f64,
    pub refine_check: bool,
    pub output: Option<String>,
}

/// Accepted keys, with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("kind", "ladder-deterministic | ladder-exit | xi1 | xi2 | pde-crosscheck | oracle-table"),
    ("q", "driver exponent, > 1"),
    ("eta", "constant eta, or intercept when eta_slope is set (default 1)"),
    ("eta_slope", "eta(t) = eta + eta_slope * t (default 0)"),
    ("length", "interval length L; the domain is (0, L) (default 2)"),
    ("x0", "start of the state process (default L/2)"),
    ("tau_x0", "start of the second diffusion for xi1/xi2 (default L/2)"),
    ("t_max", "horizon, or \"auto\" for exit problems (default auto)"),
    ("n_steps", "time steps"),
    ("n_paths", "Monte Carlo paths"),
    ("pilot_paths", "paths of the horizon pilot run (default 2000)"),
    ("bridge", "Brownian-bridge exit correction (default true)"),
    ("k_list", "non-decreasing truncation levels"),
    ("basis", "polynomial | inverse-distance"),
    ("degree", "basis degree (default 3)"),
    ("ridge", "ridge weight (default 0)"),
    ("on_degenerate", "fail | lower-degree (default lower-degree)"),
    ("scheme", "exact-flow | implicit-euler (default exact-flow)"),
    ("seed", "master seed (default 0)"),
    ("seed_tau", "seed of the second diffusion (default seed + 1)"),
    ("curve_stride", "steps between calendar curve points (default n_steps / 50)"),
    ("boundary_value", "Dirichlet value n for pde-crosscheck (default 5)"),
    ("m", "interior grid points for pde-crosscheck (default 1999)"),
    ("n_list", "increasing boundary values for the PDE ladder / oracle table"),
    ("varrho", "moment order for the xi1 moment estimate"),
    ("expect_moment_stable", "turn the moment stability flag into a check"),
    ("tolerance", "relative tolerance per rung against the oracle (default 0.01, exit problems 0.05)"),
    ("limit_tolerance", "relative tolerance of the top rung against the singular limit (default 0.015)"),
    ("refine_check", "xi1/xi2: rerun the top rung at double resolution (default false)"),
    ("output", "output sub-directory name"),
];

struct Doc<'a> {
    text: &'a str,
    table: toml::Table,
}

impl Doc<'_> {
    fn line(&self, key: &str) -> usize {
        self.text
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key).is_some_and(|rest| {
                    let rest = rest.trim_start();
                    rest.starts_with('=')
                })
            })
            .map_or(0, |i| i + 1)
    }

    fn type_error(&self, key: &str, expected: &'static str) -> ConfigError {
        ConfigError::Type { key: key.into(), line: self.line(key), expected }
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { key: key.into(), line: self.line(key), message: message.into() }
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&Value, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey { key: key.into() })
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.type_error(key, "a number")),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.type_error(key, "a non-negative integer")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.type_error(key, "a string")),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.type_error(key, "true or false")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.type_error(key, "an array of numbers")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.type_error(key, "an array of numbers")),
        }
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
        ConfigError::Parse { line, message: e.message().to_string() }
    })?;
    let doc = Doc { text, table };
    for (key, value) in &doc.table {
        if !KEYS.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::UnknownKey { key: key.clone(), line: doc.line(key) });
        }
        if value.is_table() {
            return Err(doc.type_error(key, "a plain value (the key set is flat)"));
        }
    }

    let kind_name = doc.string("kind")?.ok_or_else(|| ConfigError::MissingKey { key: "kind".into() })?;
    let kind = ExperimentKind::ALL
        .iter()
        .find(|(n, _)| *n == kind_name)
        .map(|(_, k)| *k)
        .ok_or_else(|| doc.invalid("kind", format!("unknown experiment kind `{kind_name}`")))?;

    doc.require("q")?;
    let q = doc.float("q")?.unwrap_or(f64::NAN);
    if !(q.is_finite() && q > 1.0) {
        return Err(doc.invalid("q", format!("q must exceed 1 (got {q})")));
    }
    let eta = doc.float("eta")?.unwrap_or(1.0);
    let eta_slope = doc.float("eta_slope")?.unwrap_or(0.0);
    if !(eta.is_finite() && eta > 0.0) || !eta_slope.is_finite() || eta_slope < 0.0 {
        return Err(doc.invalid("eta", "eta must be positive with a non-negative slope"));
    }
    let length = doc.float("length")?.unwrap_or(2.0);
    if !(length.is_finite() && length > 0.0) {
        return Err(doc.invalid("length", format!("length must be positive (got {length})")));
    }
    let x0 = doc.float("x0")?.unwrap_or(0.5 * length);
    let tau_x0 = doc.float("tau_x0")?.unwrap_or(0.5 * length);
    let has_domain = matches!(kind, ExperimentKind::LadderExit | ExperimentKind::Xi1 | ExperimentKind::Xi2);
    if has_domain && !(x0 > 0.0 && x0 < length) {
        return Err(doc.invalid("x0", format!("x0 must lie inside (0, {length})")));
    }
    if !(tau_x0 > 0.0 && tau_x0 < length) {
        return Err(doc.invalid("tau_x0", format!("tau_x0 must lie inside (0, {length})")));
    }

    let horizon = match doc.get("t_max") {
        None => Horizon::Auto,
        Some(Value::String(s)) if s == "auto" => Horizon::Auto,
        Some(_) => {
            let t = doc.float("t_max").map_err(|_| doc.type_error("t_max", "a number or \"auto\""))?.unwrap();
            if !(t.is_finite() && t > 0.0) {
                return Err(doc.invalid("t_max", format!("t_max must be positive (got {t})")));
            }
            Horizon::Fixed(t)
        }
    };
    if kind == ExperimentKind::LadderDeterministic && horizon == Horizon::Auto {
        return Err(doc.invalid("t_max", "a deterministic horizon needs a numeric t_max"));
    }

    let count = |key: &str, default: Option<u64>| -> Result<usize, ConfigError> {
        let v = match (doc.uint(key)?, default) {
            (Some(v), _) => v,
            (None, Some(d)) => d,
            (None, None) => return Err(ConfigError::MissingKey { key: key.into() }),
        };
        usize::try_from(v).map_err(|_| doc.invalid(key, "value too large"))
    };
    let simulates = kind.simulates();
    let n_steps = count("n_steps", (!simulates).then_some(1))?;
    let n_paths = count("n_paths", (!simulates).then_some(1))?;
    if simulates && (n_steps == 0 || n_paths < 2) {
        return Err(doc.invalid("n_paths", "need at least one step and two paths"));
    }
    let pilot_paths = count("pilot_paths", Some(2000))?;

    let k_list = match doc.floats("k_list")? {
        Some(v) => v,
        None if simulates => return Err(ConfigError::MissingKey { key: "k_list".into() }),
        None => Vec::new(),
    };
    if simulates {
        if k_list.is_empty() || k_list.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(doc.invalid("k_list", "levels must be finite and non-negative"));
        }
        if k_list.windows(2).any(|w| w[1] < w[0]) {
            return Err(doc.invalid("k_list", "levels must be non-decreasing"));
        }
    }

    let basis = match doc.string("basis")? {
        None if kind == ExperimentKind::LadderDeterministic => BasisKind::Polynomial,
        None => BasisKind::PolynomialInverseDistance,
        Some("polynomial") => BasisKind::Polynomial,
        Some("inverse-distance") => BasisKind::PolynomialInverseDistance,
        Some(other) => return Err(doc.invalid("basis", format!("unknown basis `{other}`"))),
    };
    let on_degenerate = match doc.string("on_degenerate")? {
        None | Some("lower-degree") => DegeneratePolicy::LowerDegree,
        Some("fail") => DegeneratePolicy::Fail,
        Some(other) => return Err(doc.invalid("on_degenerate", format!("unknown policy `{other}`"))),
    };
    let regression = RegressionConfig {
        basis,
        degree: count("degree", Some(3))?,
        ridge: doc.float("ridge")?.unwrap_or(0.0),
        on_degenerate,
    };
    regression.validate().map_err(|e| doc.invalid("ridge", e.to_string()))?;
    let scheme = match doc.string("scheme")? {
        None | Some("exact-flow") => StepScheme::ExactStiffFlow,
        Some("implicit-euler") => StepScheme::ImplicitEuler,
        Some(other) => return Err(doc.invalid("scheme", format!("unknown scheme `{other}`"))),
    };

    let seed = doc.uint("seed")?.unwrap_or(0);
    let seed_tau = doc.uint("seed_tau")?.unwrap_or(seed.wrapping_add(1));
    let curve_stride = count("curve_stride", Some((n_steps as u64 / 50).max(1)))?;
    if curve_stride == 0 {
        return Err(doc.invalid("curve_stride", "stride must be positive"));
    }
    let boundary_value = doc.float("boundary_value")?.unwrap_or(5.0);
    if !(boundary_value.is_finite() && boundary_value > 0.0) {
        return Err(doc.invalid("boundary_value", "boundary value must be positive"));
    }
    let m = count("m", Some(1999))?;
    if m < 3 {
        return Err(doc.invalid("m", "need at least 3 interior points"));
    }
    let n_list = doc.floats("n_list")?.unwrap_or_default();
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(doc.invalid("n_list", "values must be positive and strictly increasing"));
    }
    let varrho = doc.float("varrho")?;
    if varrho.is_some_and(|r| !(r > 1.0)) {
        return Err(doc.invalid("varrho", "moment order must exceed 1"));
    }
    let output = doc.string("output")?.map(str::to_owned);
    if output.as_deref().is_some_and(|o| o.is_empty() || o.contains(['/', '\\']) || o == "..") {
        return Err(doc.invalid("output", "expected a plain directory name"));
    }
    let tolerance = doc.float("tolerance")?.unwrap_or(match kind {
        ExperimentKind::LadderDeterministic => 0.01,
        _ => 0.05,
    });
    let limit_tolerance = doc.float("limit_tolerance")?.unwrap_or(0.015);
    for (key, v) in [("tolerance", tolerance), ("limit_tolerance", limit_tolerance)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(doc.invalid(key, "tolerance must be positive"));
        }
    }
    let needs_unit_eta = matches!(kind, ExperimentKind::PdeCrosscheck | ExperimentKind::OracleTable);
    if needs_unit_eta && (eta != 1.0 || eta_slope != 0.0) {
        return Err(doc.invalid("eta", "the PDE kinds solve the equation with eta = 1"));
    }

    Ok(ExperimentConfig {
        kind,
        q,
        eta,
        eta_slope,
        length,
        x0,
        tau_x0,
        horizon,
        n_steps,
        n_paths,
        pilot_paths,
        bridge: doc.boolean("bridge")?.unwrap_or(true),
        k_list,
        regression,
        scheme,
        seed,
        seed_tau,
        curve_stride,
        boundary_value,
        m,
        n_list,
        varrho,
        expect_moment_stable: doc.boolean("expect_moment_stable")?,
        tolerance,
        limit_tolerance,
        refine_check: doc.boolean("refine_check")?.unwrap_or(false),
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kind = \"ladder-deterministic\"\nq = 2\nt_max = 1.0\nn_steps = 200\nn_paths = 100\nk_list = [1, 10, 100]\n";

    #[test]
    fn minimal_deterministic_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, ExperimentKind::LadderDeterministic);
        assert_eq!(c.q, 2.0);
        assert_eq!(c.horizon, Horizon::Fixed(1.0));
        assert_eq!(c.k_list, vec![1.0, 10.0, 100.0]);
        assert_eq!(c.regression.basis, BasisKind::Polynomial);
        assert_eq!(c.seed_tau, 1);
    }

    #[test]
    fn rejects_small_q() {
        let err = parse_config(&MINIMAL.replace("q = 2", "q = 0.5")).unwrap_err();
        assert!(err.to_string().contains("q must exceed 1"), "{err}");
        assert!(matches!(err, ConfigError::Invalid { line: 2, .. }));
    }

    #[test]
    fn rejects_unknown_key() {
        let err = parse_config(&format!("{MINIMAL}qq = 3\n")).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "qq".into(), line: 7 });
        assert!(err.to_string().contains("`qq`"));
    }

    #[test]
    fn missing_and_mistyped_keys() {
        let err = parse_config("kind = \"xi1\"\nq = 3\nn_steps = 10\nn_paths = 10\n").unwrap_err();
        assert_eq!(err, ConfigError::MissingKey { key: "k_list".into() });
        let err = parse_config(&MINIMAL.replace("n_steps = 200", "n_steps = \"many\"")).unwrap_err();
        assert!(matches!(err, ConfigError::Type { line: 4, .. }), "{err}");
        let err = parse_config(&MINIMAL.replace("k_list = [1, 10, 100]", "k_list = [10, 1]")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));
        assert!(matches!(parse_config("kind = \nq=2").unwrap_err(), ConfigError::Parse { line: 1, .. }));
    }

    #[test]
    fn deterministic_needs_numeric_horizon() {
        let err = parse_config(&MINIMAL.replace("t_max = 1.0", "t_max = \"auto\"")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));
    }

    #[test]
    fn non_simulating_kinds_need_little() {
        let c = parse_config("kind = \"pde-crosscheck\"\nq = 3\n").unwrap();
        assert_eq!(c.m, 1999);
        assert_eq!(c.boundary_value, 5.0);
        let c = parse_config("kind = \"oracle-table\"\nq = 3\nlength = 2\n").unwrap();
        assert!(c.n_list.is_empty());
    }
}
