use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use xdiff_cli::config::parse_config;
use xdiff_cli::experiments::{run_experiment, run_steady, Preset, SteadyRequest};
use xdiff_cli::refine::{default_levels, refinement_study, Level};
use xdiff_cli::RunConfig;

/// Cross-diffusion chemotaxis simulator with runtime checks of its Lyapunov structure.
#[derive(Debug, Parser)]
#[command(name = "xdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration and write diagnostics, snapshots and heatmaps.
    Run {
        config: PathBuf,
        /// lyapunov, mass-mean, pattern or logistic
        #[arg(long)]
        preset: Option<Preset>,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configuration at several resolutions and fit convergence orders.
    Refine {
        config: PathBuf,
        /// Cells along x per level, coarsest first.
        #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256])]
        levels: Vec<usize>,
        /// Time step per level; defaults to the stable step of each level.
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
        /// Write the table here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a nonconstant steady state of the `z^-k` model.
    Steady {
        #[arg(long)]
        d: f64,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        /// Also bisect for the threshold d0 on [lo, hi].
        #[arg(long)]
        bisect: bool,
        #[arg(long, default_value_t = 1e-3)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 12)]
        bisections: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            preset,
            out,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let report = run_experiment(preset, &cfg, &base_of(&config), &out)?;
            print!("{report}");
            Ok(report.passed())
        }
        Command::Refine {
            config,
            levels,
            dt,
            out,
        } => {
            let cfg = load_config(&config)?;
            let levels = match dt {
                None => default_levels(&cfg, &levels)?,
                Some(dts) if dts.len() == levels.len() => {
                    levels.iter().zip(dts).map(|(&nx, dt)| Level { nx, dt }).collect()
                }
                Some(dts) => bail!("{} levels but {} time steps", levels.len(), dts.len()),
            };
            let table = refinement_study(&cfg, &levels, &base_of(&config))?;
            print!("{table}");
            if let Some(path) = out {
                std::fs::write(&path, table.to_string()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(true)
        }
        Command::Steady {
            d,
            k,
            nx,
            length,
            bisect,
            lo,
            hi,
            bisections,
            out,
        } => {
            let req = SteadyRequest {
                d,
                k,
                nx,
                length,
                bisect: bisect.then_some((lo, hi, bisections)),
            };
            let report = run_steady(&req, out.as_deref())?;
            print!("{report}");
            Ok(report.passed())
        }
    }
}
