use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stefan_lab::scenarios::execute;
use stefan_lab::sweep::{expand, sweep};
use stefan_lab::{CliError, ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "stefan-lab", version, about = "Null-control experiments for the radial one-phase Stefan problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every config matching a glob concurrently and aggregate `sweep.csv`.
    Sweep {
        #[arg(long)]
        configs: String,
        /// Parent directory for per-run outputs and `sweep.csv`.
        #[arg(long, env = OUT_DIR_ENV, default_value = "sweep-out")]
        out_dir: PathBuf,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out_dir, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let summary = execute(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            Ok(())
        }
        Command::Sweep { configs, out_dir, jobs } => {
            let paths = expand(&configs)?;
            let jobs = jobs.unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map_or(1, |n| n.get())
                    .min(paths.len())
            });
            let rows = sweep(&paths, &out_dir, jobs)?;
            let failed: Vec<&str> = rows.iter().filter(|r| !r.ok()).map(|r| r.config.as_str()).collect();
            println!(
                "{} runs, {} failed; wrote {}",
                rows.len(),
                failed.len(),
                out_dir.join("sweep.csv").display()
            );
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Scenario(format!("failed runs: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
