use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgent_cli::config::Location;
use wgent_cli::{execute, load, CliError, Config, ConfigError, Experiment, Progress};

/// Waveguide-array squeezing and entanglement experiments.
#[derive(Debug, Parser)]
#[command(name = "wgent", version)]
struct Cli {
    /// Worker threads (default: $WGENT_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override one key, e.g. `--set g=1.5` or `--set g_grid=[1,2]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Random seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// No progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// List the available experiments.
    ListExperiments,
    /// Check a config file without running it.
    Validate {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override one key before validating.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

const WORKERS_ENV: &str = "WGENT_WORKERS";

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let invalid = |what: String| {
        CliError::Config(ConfigError {
            location: Location::Unknown,
            message: format!("{what} must be a positive integer"),
        })
    };
    if let Some(n) = flag {
        return if n > 0 { Ok(Some(n)) } else { Err(invalid("--workers".into())) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(invalid(format!("{WORKERS_ENV}={v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn read_config(path: &PathBuf, set: &[String]) -> Result<Config, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(load(&path.display().to_string(), &text, set)?)
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = workers(cli.workers)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<20} {}", e.name(), e.summary());
            }
        }
        Command::Validate { config, set } => {
            let c = read_config(&config, &set)?;
            println!("{}: ok ({})", config.display(), c.experiment());
        }
        Command::Run { config, set, out, seed, quiet } => {
            let mut c = read_config(&config, &set)?;
            if let Some(out) = out {
                c.out_dir = out.display().to_string();
            }
            if let Some(seed) = seed {
                c.seed = seed;
            }
            let progress = Progress::new(!quiet, c.progress_interval);
            let written = execute(&c, &progress)?;
            if !quiet {
                for path in written {
                    eprintln!("wrote {}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wgent: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
