// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: `spinstore run <config.toml>`.

pub mod config;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{ConfigError, OutputFormat};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] crate::Error),
    #[error("{0} spins requested, dense simulation is limited to {max}", max = crate::MAX_SPINS)]
    TooManySpins(usize),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "spinstore", version, about = "Dipolar spin storage simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `[output] format`.
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `[protocol] seed`; TOML integers cap it at `i64::MAX`.
        #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
        seed: Option<u64>,
        /// Check system invariants before running; abort if any fails.
        #[arg(long)]
        verify: bool,
    },
}

/// Runs a parsed command line and returns the written report path.
pub fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Run {
            config,
            format,
            out,
            seed,
            verify,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = config::parse_config(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(format) = format {
                cfg.output.format = format;
            }
            if let Some(out) = out {
                cfg.output.dir = out.to_string_lossy().into_owned();
            }
            let verification = if verify {
                let v = run::verify_system(&cfg)?;
                if !v.passed {
                    let failed: Vec<_> = v.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                    return Err(CliError::Verification(failed.join(", ")));
                }
                Some(v)
            } else {
                None
            };
            let mut report = run::run_experiment(&cfg)?;
            report.verification = verification;
            report::emit_report(&report, cfg.output.format, std::path::Path::new(&cfg.output.dir))
        }
    }
}
