//! Command-line driver: reads a JSON experiment configuration, runs one
//! subcommand and writes CSV or JSON-lines results with a run manifest.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical
//! failure, 3 a validation check failed.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{exit, run_command, Command};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "tracerflow", version, about = "Passive tracers in Gaussian-Markov velocity fields")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Report the spectral gap and the summability checks of the model
    Validate(Common),
    /// Compare OU covariances and lag correlations with their closed forms
    Field(Common),
    /// Check per-mode exponential decay of the noiseless flow
    Decay(Common),
    /// Simulate tracer trajectories and estimate the Stokes drift
    Tracer(Common),
    /// Run the ergodicity probes
    Ergodic(Common),
    /// Tabulate the counterexample chain
    Chain(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output file; the configured path or standard output otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured master seed
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    let (cmd, common) = match cli.command {
        Sub::Validate(c) => (Command::Validate, c),
        Sub::Field(c) => (Command::Field, c),
        Sub::Decay(c) => (Command::Decay, c),
        Sub::Tracer(c) => (Command::Tracer, c),
        Sub::Ergodic(c) => (Command::Ergodic, c),
        Sub::Chain(c) => (Command::Chain, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", common.config.display());
            return exit::CONFIG;
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return exit::CONFIG;
        }
    };
    if let Some(seed) = common.seed_override {
        cfg.simulation.seed = Some(seed);
    }
    if let Some(threads) = common.threads {
        if threads == 0 {
            eprintln!("--threads must be at least 1");
            return exit::CONFIG;
        }
        // only the first pool configuration in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run_command(cmd, &cfg, common.out.as_deref()) {
        Ok(code) => {
            if code != exit::OK {
                eprintln!("{}: a check failed; see the report", cmd.name());
            }
            code
        }
        Err(e) => {
            eprintln!("{}: {e}", cmd.name());
            e.exit_code()
        }
    }
}
