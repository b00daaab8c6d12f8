//! Command-line front end: train reference models, fit explanations, run
//! the evaluation suite and serve models over the subprocess protocol.

pub mod args;
mod commands;
pub mod config;
pub mod grid;
mod io;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;

/// Exit status for usage errors, matching clap's.
pub const USAGE_ERROR: u8 = 2;

/// Runs one command; `Ok(false)` means it finished but something it was
/// asked to produce is missing.
pub fn run(cli: &Cli) -> Result<bool> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Train(a) => commands::train(a).map(|_| true),
        Command::Explain(a) => commands::explain(a, &file, false).map(|_| true),
        Command::Compare(a) => commands::explain(a, &file, true).map(|_| true),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Serve(a) => commands::serve(a).map(|_| true),
        Command::Synth(a) => commands::synth(a).map(|_| true),
    }
}

pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
