//! Experiment driver: TOML configs in, CSV tables and a JSON run record out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod pipeline;


use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use pipeline::{execute, Command, Summary};

/// Loads `config`, applies the flag overrides and runs `cmd` on a pool of
/// `threads` workers (0 keeps the default pool).
pub fn run_cli(
    cmd: Command,
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: usize,
) -> Result<Summary, CliError> {
    let mut cfg = RunConfig::from_path(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.out = out;
    }
    if threads == 0 {
        return execute(cmd, &cfg, &cfg.out, rayon::current_num_threads());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(cmd, &cfg, &cfg.out, threads))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {message}{}", last_step.as_ref().map(|s| format!(" (last completed: {s})")).unwrap_or_default())]
    Solver { message: String, last_step: Option<String> },

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn config(e: tdbcur::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn solver(e: tdbcur::Error) -> Self {
        match e {
            tdbcur::Error::Config(m) => CliError::Config(m),
            e => CliError::Solver { message: e.to_string(), last_step: None },
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }
}
