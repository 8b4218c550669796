use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbsde_cli::artifacts::fmt_f64;
use sbsde_cli::error::CliError;
use sbsde_cli::{emit_plot_data, parse_config, run_experiment, ArtifactSet};
use singular_bsde::bundle_io::write_bundle;
use singular_bsde::forward::{calibrate_horizon, simulate_paths, TimeGrid};
use singular_bsde::model::{Domain, SDECoefficients};
use singular_bsde::oracle::{boundary_constant, solve_vn, solve_vstar};
use singular_bsde::pde::{fd_solve_1d, FDGrid};

#[derive(Parser)]
#[command(name = "sbsde", version, about = "Truncation-ladder experiments for singular BSDEs")]
struct Cli {
    /// Overrides the seed of simulating commands and experiment configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output root.
    #[arg(long, global = true, env = "SBSDE_OUT", default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate exit paths of a Brownian motion from (0, L) and dump the bundle.
    Simulate {
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        #[arg(long, default_value_t = 1000)]
        n_paths: usize,
        #[arg(long, default_value_t = 500)]
        n_steps: usize,
        /// Horizon; calibrated from a pilot run when omitted.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        no_bridge: bool,
        #[arg(long, default_value = "bundle.bin")]
        file: String,
    },
    /// Print trough values v_n and v* of the exit-problem profile.
    Oracle {
        #[arg(long, default_value_t = 3.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        #[arg(long = "n", default_values_t = [5.0, 50.0, 500.0, 5000.0])]
        n: Vec<f64>,
    },
    /// Solve the boundary value problem by finite differences and write it.
    Pde {
        #[arg(long, default_value_t = 3.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        #[arg(long, default_value_t = 5.0)]
        n: f64,
        #[arg(long, default_value_t = 1999)]
        m: usize,
    },
    /// Run the experiment described by a TOML config.
    Experiment { config: PathBuf },
    /// Turn the artifacts of a finished run into plot-ready files.
    Report { dir: PathBuf },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let stage = |stage: &'static str| move |source| CliError::Stage { stage, source };
    let io = |path: &PathBuf| {
        let path = path.clone();
        move |source| CliError::Io { path: path.clone(), source }
    };
    match cli.command {
        Command::Simulate { length, x0, n_paths, n_steps, t_max, no_bridge, file } => {
            let seed = cli.seed.unwrap_or(0);
            let domain = Domain::interval(0.0, length).map_err(stage("model"))?;
            let bm = SDECoefficients::brownian(1).map_err(stage("model"))?;
            let grid = match t_max {
                Some(t) => TimeGrid::new(t, n_steps).map_err(stage("forward"))?,
                None => calibrate_horizon(&bm, &domain, &[x0], n_steps, 2000, seed, !no_bridge)
                    .map_err(stage("horizon calibration"))?,
            };
            let bundle =
                simulate_paths(&bm, Some(&domain), &[x0], &grid, n_paths, seed, !no_bridge).map_err(stage("forward"))?;
            fs::create_dir_all(&cli.out).map_err(io(&cli.out))?;
            let path = cli.out.join(file);
            let mut out = BufWriter::new(fs::File::create(&path).map_err(io(&path))?);
            write_bundle(&bundle, &mut out).map_err(stage("bundle dump"))?;
            let exit = bundle.mean_exit_time();
            println!(
                "wrote {} ({} paths, {} steps, t_max {}, mean exit time {} +- {}, censored {})",
                path.display(),
                n_paths,
                n_steps,
                fmt_f64(grid.t_max()),
                fmt_f64(exit.mean),
                fmt_f64(exit.stderr),
                bundle.censored_count()
            );
        }
        Command::Oracle { q, length, n } => {
            println!("n v_n");
            for n in n {
                println!("{} {}", fmt_f64(n), fmt_f64(solve_vn(n, length, q).map_err(stage("oracle"))?));
            }
            println!("inf {}", fmt_f64(solve_vstar(length, q).map_err(stage("oracle"))?));
            println!("# boundary constant {}", fmt_f64(boundary_constant(q).map_err(stage("oracle"))?));
        }
        Command::Pde { q, length, n, m } => {
            let grid = FDGrid::new(length, m).map_err(stage("pde"))?;
            let sol = fd_solve_1d(q, length, n, &grid, None).map_err(stage("pde"))?;
            fs::create_dir_all(&cli.out).map_err(io(&cli.out))?;
            let path = cli.out.join("pde.dat");
            let mut text = format!("# fd solution q={q} L={length} n={n} m={m}\n# x v\n");
            for (j, v) in sol.values.iter().enumerate() {
                text.push_str(&format!("{} {}\n", fmt_f64(grid.x(j)), fmt_f64(*v)));
            }
            fs::write(&path, text).map_err(io(&path))?;
            println!(
                "midpoint {} after {} Newton steps, residual {}; wrote {}",
                fmt_f64(sol.midpoint()),
                sol.newton_iters,
                fmt_f64(sol.residual_inf),
                path.display()
            );
        }
        Command::Experiment { config } => {
            let text = fs::read_to_string(&config).map_err(io(&config))?;
            let mut cfg = parse_config(&text)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let name = cfg.output.clone().unwrap_or_else(|| cfg.kind.name().to_owned());
            let dir = cli.out.join(name);
            let report = run_experiment(&cfg, &text, &dir)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            println!("artifacts in {} ({:.1} s)", dir.display(), report.wall_time.as_secs_f64());
            return Ok(report.passed());
        }
        Command::Report { dir } => {
            let set = ArtifactSet::load(&dir)?;
            for path in emit_plot_data(&set, &dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
