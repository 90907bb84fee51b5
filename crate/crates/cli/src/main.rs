use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atsm::cli_io;
use atsm::feller::{check_feller, Measure, Tolerances};
use atsm::model::StateVec;
use atsm::montecarlo::{price_bond_mc, Dynamics};
use atsm::riccati::riccati_p;
use atsm::statespace::{
    estimate_stage1, estimate_stage2, simulate_panel, stage1_start, EstimationError,
    EstimationOptions, MaturitySchedule, PANEL_MATURITIES,
};
use atsm::{ModelParams, Vec2};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use sha2::{Digest, Sha256};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("ATSM_GIT_DESCRIBE"));

#[derive(Parser)]
#[command(name = "atsm", version = VERSION, about = "Two-factor affine term-structure toolkit")]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the explicit Feller conditions of the configured model.
    CheckFeller {
        /// Model configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "p")]
        measure: MeasureArg,
        /// Tolerance on |lhs| for the equality conditions.
        #[arg(long, default_value_t = 1e-9)]
        tol_eq: f64,
        /// Slack allowed on the inequality conditions.
        #[arg(long, default_value_t = 0.0)]
        tol_ineq: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Analytic yield curve from the Riccati recursion.
    Yields {
        /// Model configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Start state `x1,x2`; the equilibrium when omitted.
        #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
        state: Option<StateVec<f64>>,
        #[arg(long, default_value_t = 120)]
        max_n: usize,
    },
    /// Monte Carlo versus analytic yields with confidence bands.
    Simulate {
        /// Model configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Start state `x1,x2`; the equilibrium when omitted.
        #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
        state: Option<StateVec<f64>>,
        /// Number of paths; overrides the config.
        #[arg(long)]
        paths: Option<usize>,
        /// RNG seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Floored drift (`cutoff`) or the plain affine drift (`raw`).
        #[arg(long, value_enum)]
        dynamics: Option<DynamicsArg>,
        /// Simulated quarters; at least `--max-n`.
        #[arg(long)]
        horizon: Option<usize>,
        /// Longest maturity reported; every quarter from 1 is included.
        #[arg(long, default_value_t = 120)]
        max_n: usize,
        /// Worker threads; overrides ATSM_THREADS and the config.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Two-step maximum likelihood on a panel.
    Estimate {
        /// Model configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Panel CSV; defaults to `io.panel` in the config.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// 1 fits the state dynamics; 2 fits lambda and nu given the
        /// configured parameters as stage-1 estimates.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Jittered optimizer restarts.
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Penalize violated Feller conditions (stage 1).
        #[arg(long)]
        impose_feller: bool,
        /// Start stage 1 from the configured parameters instead of sample
        /// moments.
        #[arg(long)]
        init_from_config: bool,
        /// `json` writes a configuration file that can feed a later run,
        /// e.g. stage 2 after stage 1.
        #[arg(long, value_enum, default_value = "csv")]
        format: ParamsFormat,
    },
    /// Synthetic panel from the configured model.
    GenPanel {
        /// Model configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Panel length.
        #[arg(long)]
        quarters: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "german")]
        schedule: ScheduleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    #[value(alias = "P")]
    P,
    #[value(alias = "Q")]
    Q,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamsFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum DynamicsArg {
    Cutoff,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    /// Yield columns switched on late, as in the German panel.
    German,
    /// Every column observed throughout.
    Balanced,
}

fn parse_state(s: &str) -> Result<StateVec<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err("expected x1,x2".into());
    };
    let a: f64 = a.parse().map_err(|_| format!("bad number '{a}'"))?;
    let b: f64 = b.parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok(Vec2::new(a, b))
}

/// Failure class of a run: validation problems exit with 2, everything
/// else with 1.
enum Failure {
    Validation(String),
    Runtime(String),
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(path: &Path) -> Result<cli_io::RunConfig, Failure> {
    let bytes =
        fs::read(path).map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let hash = Sha256::digest(&bytes);
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    info!("config {} sha256 {hex}", path.display());
    let text = String::from_utf8(bytes).map_err(|_| validation("config is not UTF-8"))?;
    cli_io::parse_config(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn start_state(
    cfg: &cli_io::RunConfig,
    state: Option<StateVec<f64>>,
) -> Result<StateVec<f64>, Failure> {
    match state {
        Some(x) => Ok(x),
        None => cfg.model.equilibrium_state().map_err(validation),
    }
}

/// Paths in the `io` section are relative to the config file.
fn config_relative(config: &Path, path: &Path) -> PathBuf {
    match config.parent() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Result bytes plus the config's `io.output`, used when `--out` is absent.
fn run(cli: &Cli) -> Result<(Vec<u8>, Option<PathBuf>), Failure> {
    let mut out = Vec::new();
    let mut default_out = None;
    let mut note_output = |config: &Path, cfg: &cli_io::RunConfig| {
        default_out = cfg.io.output.as_ref().map(|p| config_relative(config, p));
    };
    match &cli.command {
        Command::CheckFeller {
            config,
            measure,
            tol_eq,
            tol_ineq,
            format,
        } => {
            let cfg = load(config)?;
            note_output(config, &cfg);
            let measure = match measure {
                MeasureArg::P => Measure::P,
                MeasureArg::Q => Measure::Q,
            };
            let report = check_feller(&cfg.model, measure, Tolerances::new(*tol_eq, *tol_ineq))
                .map_err(validation)?;
            let text = match format {
                Format::Text => cli_io::feller_text(&report),
                Format::Json => cli_io::feller_json(&report) + "\n",
            };
            out.extend_from_slice(text.as_bytes());
        }
        Command::Yields {
            config,
            state,
            max_n,
        } => {
            let cfg = load(config)?;
            note_output(config, &cfg);
            let x = start_state(&cfg, *state)?;
            if *max_n == 0 {
                return Err(validation("--max-n must be at least 1"));
            }
            let table = riccati_p(&cfg.model, *max_n);
            cli_io::write_yields_csv(&table, x, &mut out).map_err(runtime)?;
        }
        Command::Simulate {
            config,
            state,
            paths,
            seed,
            dynamics,
            horizon,
            max_n,
            threads,
        } => {
            let cfg = load(config)?;
            note_output(config, &cfg);
            let x = start_state(&cfg, *state)?;
            let mut sim = cfg.sim.clone();
            if let Some(m) = paths {
                sim.paths = *m;
            }
            if let Some(s) = seed {
                sim.seed = *s;
            }
            if let Some(d) = dynamics {
                sim.dynamics = match d {
                    DynamicsArg::Cutoff => Dynamics::Cutoff,
                    DynamicsArg::Raw => Dynamics::Raw,
                };
            }
            if let Some(h) = horizon {
                sim.horizon = *h;
            }
            let env_threads = cli_io::threads_from_env().map_err(validation)?;
            sim.threads = threads.or(env_threads).or(sim.threads);
            info!(
                "seed {} paths {} horizon {} dynamics {:?} measure {} threads {:?}",
                sim.seed, sim.paths, sim.horizon, sim.dynamics, sim.measure, sim.threads
            );
            let maturities: Vec<usize> = (1..=*max_n).collect();
            let run = price_bond_mc(&cfg.model, x, &maturities, &sim).map_err(validation)?;
            let [f1, f2] = run.floor_fraction();
            info!("floored states: v1 {f1:.6}, v2 {f2:.6}");
            cli_io::write_simulation_csv(&run, &mut out).map_err(runtime)?;
        }
        Command::Estimate {
            config,
            panel,
            stage,
            restarts,
            seed,
            impose_feller,
            init_from_config,
            format,
        } => {
            let cfg = load(config)?;
            note_output(config, &cfg);
            let panel = match (panel, &cfg.io.panel) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => config_relative(config, p),
                (None, None) => return Err(validation("no panel: pass --panel or set io.panel")),
            };
            let data = cli_io::load_panel(&panel)
                .map_err(|e| validation(format!("{}: {e}", panel.display())))?;
            info!("seed {seed} stage {stage} restarts {restarts}");
            let opts = EstimationOptions {
                restarts: *restarts,
                seed: *seed,
                impose_feller: *impose_feller,
                ..EstimationOptions::default()
            };
            let result = if *stage == 1 {
                let init = if *init_from_config {
                    cfg.model
                } else {
                    keep_noise(stage1_start(cfg.model.kind, &data), &cfg.model)
                };
                estimate_stage1(&data, &init, &opts)
            } else {
                estimate_stage2(&data, &cfg.model, &cfg.model, &opts)
            };
            let report = match result {
                Ok(r) => r,
                Err(EstimationError::NotConverged { report, .. }) => {
                    log::warn!("optimizer did not converge; reporting the best point found");
                    *report
                }
                Err(e) => return Err(runtime(e)),
            };
            info!("loglik {} (start {})", report.loglik, report.start_loglik);
            match format {
                ParamsFormat::Csv => out.extend_from_slice(
                    cli_io::params_csv(&report.params, Some(report.loglik)).as_bytes(),
                ),
                ParamsFormat::Json => {
                    let raw = cli_io::RawConfig {
                        provenance: Some(format!(
                            "stage {stage} estimate, loglik {}",
                            report.loglik
                        )),
                        model: cli_io::RawModel::from_params(&report.params),
                        sim: None,
                        io: None,
                    };
                    let text = serde_json::to_string_pretty(&raw).map_err(runtime)?;
                    out.extend_from_slice(text.as_bytes());
                    out.push(b'\n');
                }
            }
        }
        Command::GenPanel {
            config,
            quarters,
            seed,
            schedule,
        } => {
            let cfg = load(config)?;
            note_output(config, &cfg);
            if *quarters == 0 {
                return Err(validation("--quarters must be at least 1"));
            }
            info!("seed {seed} quarters {quarters}");
            let schedule = match schedule {
                ScheduleArg::German => MaturitySchedule::german_shape(*quarters),
                ScheduleArg::Balanced => MaturitySchedule::balanced(&PANEL_MATURITIES),
            };
            let sim =
                simulate_panel(&cfg.model, *quarters, *seed, &schedule).map_err(validation)?;
            cli_io::write_panel(&sim.panel, &mut out).map_err(runtime)?;
        }
    }
    Ok((out, default_out))
}

/// Stage-1 starting values keep `λ` and `ν` of the configuration.
fn keep_noise(start: ModelParams, cfg: &ModelParams) -> ModelParams {
    ModelParams {
        lambda: cfg.lambda,
        nu0: cfg.nu0,
        nu1: cfg.nu1,
        nu2: cfg.nu2,
        ..start
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    info!("atsm {VERSION}");
    match run(&cli) {
        Ok((bytes, default_out)) => {
            let written = match cli.out.as_ref().or(default_out.as_ref()) {
                Some(path) => fs::write(path, &bytes)
                    .map_err(|e| format!("cannot write {}: {e}", path.display())),
                None => std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
