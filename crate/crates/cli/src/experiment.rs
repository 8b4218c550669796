//! One experiment per configuration: simulate, solve, compare, write.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use singular_bsde::backward::{lsmc_solve, truncation_ladder, LadderResult, LsmcConfig, ValueField};
use singular_bsde::diagnostics::{continuity_curve, ko_bound_fit, moment_estimate_xi1, Alignment, ContinuityCurve, EnvelopeSampling, Event};
use singular_bsde::forward::{calibrate_horizon, joint_exit, simulate_paths, PathBundle, TauSource, TimeGrid};
use singular_bsde::model::{Domain, Driver, Eta, SDECoefficients, TerminalSpec};
use singular_bsde::oracle::{blowup_profile, bmx, boundary_constant, profile_v, solve_vn, solve_vstar, truncated_profile_eta, ExitProfile};
use singular_bsde::pde::{boundary_ladder_fd, fd_solve_1d, residual_check, FDGrid};

use crate::artifacts::{fmt_f64, write_curves, write_summary, Curve, CurvePoint, SummaryRow, CURVES_FILE, META_FILE, SUMMARY_FILE};
use crate::config::{ExperimentConfig, ExperimentKind, Horizon};
use crate::error::{io_at, stage, Result};

/// `∫₀¹ dt / √(1 - t⁴)`, half the lemniscate constant.
pub const LEMNISCATE_HALF: f64 = 1.311_028_777_146_059_9;

/// Consecutive ladder increments may dip this many standard errors below 0.
pub const MONOTONE_SIGMAS: f64 = 3.0;
pub const CONTINUITY_RATIO: f64 = 0.1;
pub const C_HAT_SPREAD: f64 = 0.2;
pub const FD_MAX_ERROR: f64 = 1e-3;
pub const FD_ORDER_RANGE: (f64, f64) = (3.5, 4.5);
pub const VSTAR_TOLERANCE: f64 = 1e-2;
pub const ROOT_TOLERANCE: f64 = 1e-9;
pub const LEMNISCATE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<Curve>,
    pub checks: Vec<Check>,
    /// Extra `key = value` lines for `meta.txt`.
    pub notes: Vec<(String, String)>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn note(&self, key: &str) -> Option<&str> {
        self.notes.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Default)]
struct Run {
    summary: Vec<SummaryRow>,
    curves: Vec<Curve>,
    checks: Vec<Check>,
    notes: Vec<(String, String)>,
}

impl Run {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_owned(), value.to_string()));
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }
}

fn driver(cfg: &ExperimentConfig) -> Result<Driver> {
    let eta = if cfg.eta_slope == 0.0 {
        Eta::Constant(cfg.eta)
    } else {
        Eta::Affine { intercept: cfg.eta, slope: cfg.eta_slope }
    };
    stage("model", Driver::canonical(cfg.q, eta))
}

fn constant_eta(cfg: &ExperimentConfig) -> Option<f64> {
    (cfg.eta_slope == 0.0).then_some(cfg.eta)
}

fn lsmc_config(cfg: &ExperimentConfig) -> LsmcConfig {
    LsmcConfig { regression: cfg.regression, scheme: cfg.scheme, estimate_z: false }
}

/// Ladder over `cfg.k_list`; a single level is solved on its own.
fn ladder(bundle: &PathBundle, driver: &Driver, family: impl Fn(f64) -> TerminalSpec, cfg: &ExperimentConfig) -> Result<LadderResult> {
    let lsmc = lsmc_config(cfg);
    if cfg.k_list.len() == 1 {
        let field = stage("backward", lsmc_solve(bundle, driver, &family(cfg.k_list[0]), &lsmc))?;
        return Ok(LadderResult {
            k_list: cfg.k_list.clone(),
            y0_sequence: vec![field.y0],
            fields: vec![field],
            increment_stderr: Vec::new(),
            monotone_violation: 0.0,
        });
    }
    stage("backward", truncation_ladder(bundle, driver, family, &cfg.k_list, &lsmc))
}

fn ladder_rows(ladder: &LadderResult) -> Vec<SummaryRow> {
    ladder
        .fields
        .iter()
        .map(|f| SummaryRow { stderr: Some(f.y0_stderr), ..SummaryRow::new(f.k, f.y0) })
        .collect()
}

fn monotone_check(run: &mut Run, ladder: &LadderResult) {
    let worst = ladder
        .y0_sequence
        .windows(2)
        .zip(&ladder.increment_stderr)
        .map(|(w, se)| (w[1] - w[0]) / se)
        .fold(f64::INFINITY, f64::min);
    let detail = if worst.is_finite() {
        format!("smallest increment {} standard errors", fmt_f64(worst))
    } else {
        "single rung".into()
    };
    run.check("ladder_monotone", ladder.is_monotone(MONOTONE_SIGMAS), detail);
}

fn tolerance_checks(run: &mut Run, tol: f64) {
    let results: Vec<(f64, f64)> = run.summary.iter().filter_map(|r| r.rel_error.map(|e| (r.k, e))).collect();
    for (k, e) in results {
        run.check(format!("oracle_k{}", fmt_f64(k)), e.abs() <= tol, format!("relative error {} (tolerance {tol})", fmt_f64(e)));
    }
}

/// Mean `Ŷ` over paths still active, every `stride` steps.
fn mean_value_curve(id: String, field: &ValueField, bundle: &PathBundle, stride: usize) -> Result<Curve> {
    let grid = bundle.grid();
    let mut points = Vec::new();
    for i in (0..grid.n_steps()).step_by(stride) {
        let values: Vec<f64> = (0..bundle.n_paths())
            .filter(|&p| bundle.stop_index(p) > i)
            .map(|p| field.value_at(bundle, p, i))
            .collect::<singular_bsde::Result<_>>()
            .map_err(|source| crate::error::CliError::Stage { stage: "curves", source })?;
        let est = singular_bsde::stats::mean_stderr(&values);
        if est.count >= singular_bsde::diagnostics::MIN_SAMPLES {
            points.push(CurvePoint { t: grid.time(i), value: est.mean, stderr: Some(est.stderr) });
        }
    }
    Ok(Curve { id, points })
}

fn continuity_points(id: String, curve: &ContinuityCurve) -> Curve {
    let points = (0..curve.len())
        .filter(|&j| !curve.low_sample[j])
        .map(|j| CurvePoint { t: curve.times[j], value: curve.values[j], stderr: Some(curve.stderr[j]) })
        .collect();
    Curve { id, points }
}

fn k_tag(k: f64) -> String {
    format!("k{}", fmt_f64(k))
}

fn run_deterministic(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let driver = driver(cfg)?;
    let Horizon::Fixed(t_max) = cfg.horizon else { unreachable!("validated by parse_config") };
    let grid = stage("forward", TimeGrid::new(t_max, cfg.n_steps))?;
    let bm = stage("model", SDECoefficients::brownian(1))?;
    let bundle = stage("forward", simulate_paths(&bm, None, &[cfg.x0], &grid, cfg.n_paths, cfg.seed, false))?;
    let ladder = ladder(&bundle, &driver, |k| TerminalSpec::Constant { k }, cfg)?;
    run.summary = ladder_rows(&ladder);
    if let Some(eta) = constant_eta(cfg) {
        for row in &mut run.summary {
            let exact = stage("oracle", truncated_profile_eta(cfg.q, eta, t_max, row.k, 0.0))?;
            *row = row.clone().with_oracle(exact, "truncated_profile");
        }
        tolerance_checks(run, cfg.tolerance);
        // y' = y^q / η blows up like (η / ((q-1)(T-t)))^{1/(q-1)}.
        let limit = stage("oracle", blowup_profile(cfg.q, t_max / eta, 0.0))?;
        let top = *ladder.y0_sequence.last().unwrap();
        let rel = (top - limit) / limit;
        run.note("singular_limit", fmt_f64(limit));
        run.check(
            "singular_limit",
            rel.abs() <= cfg.limit_tolerance,
            format!("top rung {} vs limit {}, relative error {}", fmt_f64(top), fmt_f64(limit), fmt_f64(rel)),
        );
        let field = ladder.fields.last().unwrap();
        let exact = (0..grid.n_steps())
            .step_by(cfg.curve_stride)
            .map(|i| {
                let t = grid.time(i);
                stage("oracle", truncated_profile_eta(cfg.q, eta, t_max, field.k, t)).map(|v| CurvePoint { t, value: v, stderr: None })
            })
            .collect::<Result<_>>()?;
        run.curves.push(Curve { id: format!("oracle_{}", k_tag(field.k)), points: exact });
    }
    monotone_check(run, &ladder);
    let field = ladder.fields.last().unwrap();
    run.curves.push(mean_value_curve(format!("mean_value_{}", k_tag(field.k)), field, &bundle, cfg.curve_stride)?);
    Ok(())
}

fn exit_bundle(cfg: &ExperimentConfig, n_steps: usize, t_max: Option<f64>, with_tau: bool) -> Result<PathBundle> {
    let domain = stage("model", Domain::interval(0.0, cfg.length))?;
    let bm = stage("model", SDECoefficients::brownian(1))?;
    let grid = match (t_max, cfg.horizon) {
        (Some(t), _) | (None, Horizon::Fixed(t)) => stage("forward", TimeGrid::new(t, n_steps))?,
        (None, Horizon::Auto) => stage(
            "horizon calibration",
            calibrate_horizon(&bm, &domain, &[cfg.x0], n_steps, cfg.pilot_paths, cfg.seed, cfg.bridge),
        )?,
    };
    let bundle = stage("forward", simulate_paths(&bm, Some(&domain), &[cfg.x0], &grid, cfg.n_paths, cfg.seed, cfg.bridge))?;
    if !with_tau {
        return Ok(bundle);
    }
    let source = TauSource::Independent { coeffs: bm, x0: vec![cfg.tau_x0], domain, grid, bridge: cfg.bridge };
    stage("joint exit", joint_exit(bundle, source, cfg.seed_tau))
}

fn bundle_notes(run: &mut Run, bundle: &PathBundle) {
    run.note("t_max", fmt_f64(bundle.grid().t_max()));
    run.note("censored_paths", bundle.censored_count());
    let exit = bundle.mean_exit_time();
    run.note("mean_exit_time", format!("{} +- {}", fmt_f64(exit.mean), fmt_f64(exit.stderr)));
    if let Some(tau) = bundle.tau() {
        let events = (0..bundle.n_paths()).filter(|&p| bundle.tau_le_s(p) == Some(true)).count();
        run.note("tau_le_s_paths", events);
        run.note("tau_ties", tau.ties);
    }
}

fn run_exit(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let driver = driver(cfg)?;
    let bundle = exit_bundle(cfg, cfg.n_steps, None, false)?;
    bundle_notes(run, &bundle);
    let ladder = ladder(&bundle, &driver, |k| TerminalSpec::Constant { k }, cfg)?;
    run.summary = ladder_rows(&ladder);
    if let Some(eta) = constant_eta(cfg) {
        // ½v'' = v^q/η is solved by η^{1/(q-1)}·w with ½w'' = w^q.
        let scale = eta.powf(1.0 / (cfg.q - 1.0));
        for row in &mut run.summary {
            let profile = stage("oracle", ExitProfile::finite(row.k / scale, cfg.length, cfg.q))?;
            let exact = scale * stage("oracle", profile_v(cfg.x0, &profile))?;
            *row = row.clone().with_oracle(exact, "profile_v");
        }
        tolerance_checks(run, cfg.tolerance);
    }
    let sampling = EnvelopeSampling::default();
    for (row, field) in run.summary.iter_mut().zip(&ladder.fields) {
        row.c_hat = Some(stage("envelope fit", ko_bound_fit(field, &bundle, cfg.q, sampling))?.c_hat);
    }
    if run.summary.len() > 1 {
        let c: Vec<f64> = run.summary.iter().filter_map(|r| r.c_hat).collect();
        let worst = c.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
        run.check(
            "c_hat_k_uniform",
            worst < C_HAT_SPREAD,
            format!("largest change between consecutive rungs {}", fmt_f64(worst)),
        );
    }
    monotone_check(run, &ladder);
    let field = ladder.fields.last().unwrap();
    run.curves.push(mean_value_curve(format!("mean_value_{}", k_tag(field.k)), field, &bundle, cfg.curve_stride)?);
    Ok(())
}

fn event_name(event: Event) -> &'static str {
    match event {
        Event::TauBeforeExit => "tau_le_s",
        Event::TauAfterExit => "tau_gt_s",
    }
}

/// Ratio of the last to the first well-sampled point.
fn decay(curve: &ContinuityCurve) -> Option<(f64, f64)> {
    let (a, b) = (curve.initial()?, curve.terminal()?);
    (a < b).then(|| (curve.values[a], curve.values[b]))
}

fn run_xi(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let driver = driver(cfg)?;
    let xi1 = cfg.kind == ExperimentKind::Xi1;
    let family = move |k| if xi1 { TerminalSpec::Xi1 { k } } else { TerminalSpec::Xi2 { k } };
    // The terminal value vanishes on this event, so Ŷ must fade out there.
    let event = if xi1 { Event::TauAfterExit } else { Event::TauBeforeExit };
    let bundle = exit_bundle(cfg, cfg.n_steps, None, true)?;
    bundle_notes(run, &bundle);
    let ladder = ladder(&bundle, &driver, family, cfg)?;
    run.summary = ladder_rows(&ladder);
    monotone_check(run, &ladder);

    let field = ladder.fields.last().unwrap();
    let tag = format!("{}_{}", event_name(event), k_tag(field.k));
    let aligned = stage("continuity curve", continuity_curve(field, &bundle, event, Alignment::ExitAligned))?;
    let calendar =
        stage("continuity curve", continuity_curve(field, &bundle, event, Alignment::Calendar { stride: cfg.curve_stride }))?;
    match decay(&aligned) {
        Some((first, last)) => run.check(
            "continuity",
            last <= CONTINUITY_RATIO * first,
            format!("final {} vs initial {}, ratio {}", fmt_f64(last), fmt_f64(first), fmt_f64(last / first)),
        ),
        None => run.check("continuity", false, "fewer than two well-sampled points"),
    }
    run.curves.push(continuity_points(format!("exit_aligned_{tag}"), &aligned));
    run.curves.push(continuity_points(format!("calendar_{tag}"), &calendar));

    if cfg.refine_check {
        let fine_bundle = exit_bundle(cfg, 2 * cfg.n_steps, Some(bundle.grid().t_max()), true)?;
        let fine = stage("backward", lsmc_solve(&fine_bundle, &driver, &family(field.k), &lsmc_config(cfg)))?;
        let fine_curve = stage("continuity curve", continuity_curve(&fine, &fine_bundle, event, Alignment::ExitAligned))?;
        let (Some(a), Some(b)) = (aligned.terminal(), fine_curve.terminal()) else {
            run.check("refinement", false, "no well-sampled final point");
            return Ok(());
        };
        let (coarse, refined) = (aligned.values[a], fine_curve.values[b]);
        let se = aligned.stderr[a].hypot(fine_curve.stderr[b]);
        run.note("refined_final_point", fmt_f64(refined));
        run.check(
            "refinement",
            refined <= coarse + 2.0 * se,
            format!("final point {} at double resolution vs {} (2 se = {})", fmt_f64(refined), fmt_f64(coarse), fmt_f64(2.0 * se)),
        );
        run.curves.push(continuity_points(format!("exit_aligned_{tag}_refined"), &fine_curve));
    }

    if let (true, Some(varrho)) = (xi1, cfg.varrho) {
        let c_fit = stage("oracle", boundary_constant(cfg.q))?;
        let m = stage("moment estimate", moment_estimate_xi1(&bundle, cfg.q, varrho, c_fit))?;
        run.note("moment_estimate", format!("{} +- {}", fmt_f64(m.estimate), fmt_f64(m.stderr)));
        run.note("moment_trimmed", fmt_f64(m.trimmed));
        run.note("moment_divergence_suspect", m.divergence_suspect);
        if let Some(stable) = cfg.expect_moment_stable {
            run.check(
                "moment_stability",
                m.divergence_suspect != stable,
                format!("relative change under trimming {}", fmt_f64(m.relative_change)),
            );
        }
    }
    Ok(())
}

fn fd_error(sol: &singular_bsde::pde::FDSolution, profile: &ExitProfile) -> Result<f64> {
    let mut worst = 0.0f64;
    for (j, v) in sol.values.iter().enumerate() {
        worst = worst.max((v - stage("oracle", profile_v(sol.grid.x(j), profile))?).abs());
    }
    Ok(worst)
}

/// About 200 evenly spaced points of a grid function.
fn grid_curve(id: String, grid: &FDGrid, values: impl Fn(usize) -> Result<f64>) -> Result<Curve> {
    let n = grid.interior() + 2;
    let step = (n / 200).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    let points = idx
        .into_iter()
        .map(|j| Ok(CurvePoint { t: grid.x(j), value: values(j)?, stderr: None }))
        .collect::<Result<_>>()?;
    Ok(Curve { id, points })
}

fn run_pde(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let (q, l, n) = (cfg.q, cfg.length, cfg.boundary_value);
    let grid = stage("pde", FDGrid::new(l, cfg.m))?;
    let sol = stage("pde", fd_solve_1d(q, l, n, &grid, None))?;
    let profile = stage("oracle", ExitProfile::finite(n, l, q))?;
    let err = fd_error(&sol, &profile)?;
    let at_x0 = stage("pde", sol.value_at(cfg.x0.clamp(0.0, l)))?;
    let exact = stage("oracle", profile_v(cfg.x0.clamp(0.0, l), &profile))?;
    run.summary.push(SummaryRow::new(n, at_x0).with_oracle(exact, "profile_v"));
    run.note("fd_max_error", fmt_f64(err));
    run.note("newton_iterations", sol.newton_iters);
    run.check("fd_max_error", err <= FD_MAX_ERROR, format!("max grid error {} (m = {})", fmt_f64(err), cfg.m));
    let residual = residual_check(&sol, q);
    let tol = 1e-10 * (1.0 + n.powf(q));
    run.check("fd_residual", residual <= tol, format!("discrete residual {} (tolerance {})", fmt_f64(residual), fmt_f64(tol)));

    // Same interval with twice the spacing: m' = (m - 1) / 2 interior points.
    if cfg.m % 2 == 1 && cfg.m >= 7 {
        let coarse_grid = stage("pde", FDGrid::new(l, (cfg.m - 1) / 2))?;
        let coarse = stage("pde", fd_solve_1d(q, l, n, &coarse_grid, None))?;
        let ratio = fd_error(&coarse, &profile)? / err;
        run.check(
            "fd_second_order",
            (FD_ORDER_RANGE.0..=FD_ORDER_RANGE.1).contains(&ratio),
            format!("error ratio {} under mesh halving", fmt_f64(ratio)),
        );
    }
    let tag = format!("n{}", fmt_f64(n));
    run.curves.push(grid_curve(format!("fd_{tag}"), &grid, |j| Ok(sol.values[j]))?);
    run.curves.push(grid_curve(format!("profile_{tag}"), &grid, |j| stage("oracle", profile_v(grid.x(j), &profile)))?);

    if !cfg.n_list.is_empty() {
        let ladder = stage("pde", boundary_ladder_fd(q, l, &cfg.n_list, &grid))?;
        for (nn, s) in cfg.n_list.iter().zip(&ladder) {
            let vn = stage("oracle", solve_vn(*nn, l, q))?;
            run.summary.push(SummaryRow::new(*nn, s.midpoint()).with_oracle(vn, "solve_vn"));
        }
        let increasing = ladder.windows(2).all(|w| w[1].midpoint() > w[0].midpoint());
        run.check("fd_ladder_monotone", increasing, "midpoint values along the boundary ladder");
        let vstar = stage("oracle", solve_vstar(l, q))?;
        let top = ladder.last().unwrap().midpoint();
        run.note("vstar", fmt_f64(vstar));
        run.check(
            "fd_ladder_vstar",
            (top - vstar).abs() <= VSTAR_TOLERANCE,
            format!("top rung midpoint {} vs v* {}", fmt_f64(top), fmt_f64(vstar)),
        );
    }
    Ok(())
}

fn run_oracle_table(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let (q, l) = (cfg.q, cfg.length);
    let n_list = if cfg.n_list.is_empty() { vec![5.0, 50.0, 500.0, 5000.0] } else { cfg.n_list.clone() };
    let vstar = stage("oracle", solve_vstar(l, q))?;
    let mut worst_root = 0.0f64;
    for &n in &n_list {
        let vn = stage("oracle", solve_vn(n, l, q))?;
        worst_root = worst_root.max((stage("oracle", bmx(n, vn, q))? - 0.5 * l).abs());
        run.summary.push(SummaryRow { oracle_source: Some("solve_vn".into()), ..SummaryRow::new(n, vn) });
        let profile = stage("oracle", ExitProfile::finite(n, l, q))?;
        let grid = stage("oracle", FDGrid::new(l, 399))?;
        run.curves.push(grid_curve(format!("profile_n{}", fmt_f64(n)), &grid, |j| stage("oracle", profile_v(grid.x(j), &profile)))?);
    }
    run.check("root_residual", worst_root <= ROOT_TOLERANCE, format!("largest |x(n; v_n) - L/2| = {}", fmt_f64(worst_root)));
    let below = run.summary.windows(2).all(|w| w[0].y0 < w[1].y0) && run.summary.iter().all(|r| r.y0 < vstar);
    run.check("vn_increase_to_vstar", below, "v_n increasing and below v*");

    let mut row = SummaryRow { oracle_source: Some("solve_vstar".into()), ..SummaryRow::new(f64::INFINITY, vstar) };
    if q == 3.0 {
        // v'² = v⁴ - v*⁴ turns the half-width into ∫₀¹ dt/√(1-t⁴) / v*.
        let closed = 2.0 * LEMNISCATE_HALF / l;
        row = row.with_oracle(closed, "lemniscate");
        let rel = row.rel_error.unwrap();
        run.check("vstar_closed_form", rel.abs() <= LEMNISCATE_TOLERANCE, format!("relative error {}", fmt_f64(rel)));
    }
    run.summary.push(row);
    let profile = stage("oracle", ExitProfile::infinite(l, q))?;
    let grid = stage("oracle", FDGrid::new(l, 399))?;
    let interior = grid_curve("profile_inf".into(), &grid, |j| stage("oracle", profile_v(grid.x(j), &profile)))?;
    let last = grid.interior() + 1;
    run.curves.push(Curve {
        id: interior.id,
        points: interior.points.into_iter().filter(|p| p.t > 0.0 && p.t < grid.x(last)).collect(),
    });
    run.note("boundary_constant", fmt_f64(stage("oracle", boundary_constant(q))?));
    Ok(())
}

/// Run `cfg`, writing `summary.csv`, `curves.csv` and `meta.txt` into `dir`.
/// `source` is the configuration text echoed into the metadata.
pub fn run_experiment(cfg: &ExperimentConfig, source: &str, dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    io_at(dir, fs::create_dir_all(dir))?;
    let mut run = Run::default();
    log::info!("running {} experiment", cfg.kind);
    match cfg.kind {
        ExperimentKind::LadderDeterministic => run_deterministic(cfg, &mut run)?,
        ExperimentKind::LadderExit => run_exit(cfg, &mut run)?,
        ExperimentKind::Xi1 | ExperimentKind::Xi2 => run_xi(cfg, &mut run)?,
        ExperimentKind::PdeCrosscheck => run_pde(cfg, &mut run)?,
        ExperimentKind::OracleTable => run_oracle_table(cfg, &mut run)?,
    }
    let wall_time = start.elapsed();
    write_summary(&dir.join(SUMMARY_FILE), &run.summary)?;
    write_curves(&dir.join(CURVES_FILE), &run.curves)?;
    let report = RunReport { kind: cfg.kind, summary: run.summary, curves: run.curves, checks: run.checks, notes: run.notes, wall_time };
    let meta = dir.join(META_FILE);
    io_at(&meta, fs::write(&meta, meta_text(&report, cfg, source)))?;
    Ok(report)
}

fn meta_text(report: &RunReport, cfg: &ExperimentConfig, source: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind = {}", cfg.kind);
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "seed_tau = {}", cfg.seed_tau);
    let _ = writeln!(s, "threads = {}", rayon::current_num_threads());
    let _ = writeln!(s, "wall_time_s = {:.3}", report.wall_time.as_secs_f64());
    let ids: Vec<&str> = report.curves.iter().map(|c| c.id.as_str()).collect();
    let _ = writeln!(s, "curves = {}", ids.join(" "));
    for (k, v) in &report.notes {
        let _ = writeln!(s, "{k} = {v}");
    }
    for c in &report.checks {
        let _ = writeln!(s, "check {} = {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    let _ = writeln!(s, "passed = {}", report.passed());
    s.push_str("\n[config]\n");
    s.push_str(source);
    if !source.ends_with('\n') {
        s.push('\n');
    }
    s
}
