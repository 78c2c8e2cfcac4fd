use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dasgd_cli::config::ExperimentConfig;
use dasgd_cli::sweep::{sweep_command, Axis};
use dasgd_cli::verify::{oracle_command, verify_command};
use dasgd_cli::{exit_code, input_error, run::run_command};

/// Discrete-event simulator for decentralized asynchronous SGD.
#[derive(Parser)]
#[command(name = "dasgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (all replicas) and write its files.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Vary one configuration field over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Field to vary: n | topology | eta | sigma.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
    /// Re-derive the checks of a finished run directory.
    Verify {
        /// Run directory written by `run` (or one replica of it).
        dir: PathBuf,
    },
    /// Compare incremental and brute-force staleness on an event log.
    Oracle {
        /// Event log in `COMPUTE`/`APPLY` line format.
        log: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.replicas`.
    #[arg(long)]
    replicas: Option<u32>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).map_err(input_error)?;
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(r) = self.replicas {
            cfg.run.replicas = r;
        }
        cfg.check().map_err(input_error)?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { common } => {
            let cfg = common.load()?;
            for r in run_command(&cfg, &common.out)? {
                println!(
                    "{}: eta = {}, S_avg = {}, final psi = {:e} -> {}",
                    r.run_id,
                    r.eta,
                    r.s_avg,
                    r.final_psi,
                    r.dir.display()
                );
            }
        }
        Command::Sweep { common, axis, values } => {
            let cfg = common.load()?;
            let axis: Axis = axis.parse()?;
            let outcome = sweep_command(&cfg, axis, &values, &common.out)?;
            for p in &outcome.points {
                println!(
                    "{}={}: {} completed, {} diverged, mean S_avg = {}, mean final psi = {:e}",
                    axis.name(),
                    p.value,
                    p.completed,
                    p.diverged,
                    p.mean_s_avg,
                    p.mean_final_psi
                );
            }
            println!("wrote {}", common.out.join("sweep.csv").display());
            if let Some(first) = outcome.divergences.into_iter().next() {
                return Err(first.into());
            }
        }
        Command::Verify { dir } => {
            verify_command(&dir)?;
        }
        Command::Oracle { log } => {
            println!("{}", oracle_command(&log)?);
        }
    }
    Ok(())
}
