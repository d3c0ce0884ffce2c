//! Orchestration behind the `tmsv-forge` binary: configuration, commands and
//! exit-code policy.

pub mod commands;
pub mod config;
pub mod error;
pub mod state;

use std::path::Path;

pub use commands::Outcome;
pub use config::{Measurement, Overrides, RunConfig};
pub use error::{CliError, ErrorKind};

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "TMSV_FORGE_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Optimize,
    Scan,
    Epr,
    Bell,
    Sweep { optimize: bool },
    FitSuperposition,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::Scan => "scan",
            Command::Epr => "epr",
            Command::Bell => "bell",
            Command::Sweep { .. } => "sweep",
            Command::FitSuperposition => "fit-superposition",
        }
    }
}

/// Parses `TMSV_FORGE_THREADS` (a positive integer) into a worker count.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Loads, overrides and validates a config without touching the output directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a command fully in memory.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Optimize => commands::optimize(cfg),
        Command::Scan => commands::scan_cmd(cfg),
        Command::Epr => commands::epr(cfg),
        Command::Bell => commands::bell(cfg),
        Command::Sweep { optimize } => commands::sweep(cfg, optimize),
        Command::FitSuperposition => commands::fit_superposition_cmd(cfg),
    }
}

/// Config to files on disk; returns the process exit code.
pub fn run(command: Command, config: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let cfg = load_config(config, overrides)?;
    let outcome = execute(command, &cfg)?;
    outcome.write(&cfg.output_dir)?;
    println!("{}: {}", command.name(), outcome.summary);
    match &outcome.non_convergence {
        Some(msg) => {
            eprintln!("{}", CliError { kind: ErrorKind::NonConvergence, message: msg.clone() }.report());
            Ok(ErrorKind::NonConvergence.exit_code())
        }
        None => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(thread_cap(None).unwrap(), None);
        assert_eq!(thread_cap(Some("3")).unwrap(), Some(3));
        assert_eq!(thread_cap(Some("0")).unwrap_err().exit_code(), 2);
        assert!(thread_cap(Some("many")).is_err());
    }
}
