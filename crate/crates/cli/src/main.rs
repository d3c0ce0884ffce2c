use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmsv_forge::{run, thread_cap, CliError, Command, Measurement, Overrides, THREADS_VAR};

/// Waveform synthesis and phase-space verification of two-mode squeezed states.
#[derive(Parser)]
#[command(name = "tmsv-forge", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replaces the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noiseless expectation values.
    #[arg(long, global = true, conflicts_with = "sampled")]
    exact: bool,
    /// Finite-shot estimates.
    #[arg(long, global = true)]
    sampled: bool,
    /// Shots per measurement setting in sampled mode.
    #[arg(long, global = true)]
    shots: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Synthesize a waveform for the target state.
    Optimize,
    /// Characteristic-function grids in each quadrature plane.
    Scan,
    /// Reid EPR product from fitted χ variances.
    Epr,
    /// Bell signal against the number of repetitions.
    Bell,
    /// Squeezing in dB against the squeezing parameter.
    Sweep {
        /// Prepare each state with an optimized waveform instead of the ideal constructor.
        #[arg(long)]
        optimize: bool,
    },
    /// Two-ridge fit of the Re–Re grid.
    FitSuperposition,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match start(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.report());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn start(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = thread_cap(std::env::var(THREADS_VAR).ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot size the worker pool: {e}")))?;
    }
    let config = cli.config.ok_or_else(|| CliError::config("--config <path> is required"))?;
    let measurement = match (cli.exact, cli.sampled) {
        (true, _) => Some(Measurement::Exact),
        (_, true) => Some(Measurement::Sampled),
        _ => None,
    };
    let overrides = Overrides { seed: cli.seed, out: cli.out, measurement, shots: cli.shots };
    let command = match cli.command {
        Sub::Optimize => Command::Optimize,
        Sub::Scan => Command::Scan,
        Sub::Epr => Command::Epr,
        Sub::Bell => Command::Bell,
        Sub::Sweep { optimize } => Command::Sweep { optimize },
        Sub::FitSuperposition => Command::FitSuperposition,
    };
    run(command, &config, &overrides)
}
