//! Command-line front end: `simulate`, `fit`, `evaluate` and `verify`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svdd_cfar::classical::TylerMutation;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "svdd-cfar", version, about = "CFAR radar detection with adaptive filters, SVDD and Deep SVDD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw the train, calibration, verification and test splits.
    Simulate(CommonArgs),
    /// Fit the SVDD and Deep SVDD models on the train split.
    Fit(CommonArgs),
    /// Calibrate thresholds and measure Pd over the SNR/Doppler grid.
    Evaluate(CommonArgs),
    /// Run the oracle suite and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration or a manifest.json from an earlier run.
    /// Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Injects a fault to check that the suite catches it.
    #[arg(long, value_enum, hide = true)]
    pub mutate: Option<Mutation>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mutation {
    Tyler,
}

impl CommonArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => manifest::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&a.resolve()?, &a.out).map(drop),
        Command::Fit(a) => commands::fit(&a.resolve()?, &a.out).map(drop),
        Command::Evaluate(a) => commands::evaluate(&a.resolve()?, &a.out).map(drop),
        Command::Verify(v) => {
            let cfg = v.common.resolve()?;
            let mutation = v.mutate.map(|Mutation::Tyler| TylerMutation::DenominatorOffset(1.0));
            commands::verify(cfg.seed, mutation, &v.common.out).map(drop)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 validation error, 2 runtime failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
