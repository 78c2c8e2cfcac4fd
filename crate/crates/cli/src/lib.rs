//! Experiment runner behind the `dasgd` binary: configuration, run and sweep
//! orchestration, trace verification and the staleness oracle.

pub mod config;
pub mod output;
pub mod report;
pub mod run;
pub mod sweep;
pub mod verify;

use std::fmt;

/// Bad configuration, unreadable or malformed input files. Exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A run produced non-finite parameters. Exit code 3.
#[derive(Debug)]
pub struct DivergenceError {
    pub eta: f64,
    /// Stepsize bound computed from the configuration's measured staleness.
    pub recommended: f64,
    pub detail: String,
}

impl fmt::Display for DivergenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; eta = {} exceeds what this setup tolerates, recommended eta <= {}", self.detail, self.eta, self.recommended)
    }
}

impl std::error::Error for DivergenceError {}

/// A check reported a failure (verify or oracle). Exit code 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<DivergenceError>()) {
        3
    } else if err.chain().any(|e| e.is::<InputError>()) {
        2
    } else {
        1
    }
}

/// Wraps any error as an input error (exit code 2), keeping its message chain.
pub fn input_error(err: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(InputError(format!("{err:#}")))
}

/// Thread count for replica and sweep parallelism: `DASGD_SIM_THREADS` if set.
pub fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("DASGD_SIM_THREADS") {
        let threads: usize = v
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| anyhow::Error::new(InputError(format!("DASGD_SIM_THREADS must be a positive integer, got `{v}`"))))?;
        builder = builder.num_threads(threads);
    }
    Ok(builder.build()?)
}
