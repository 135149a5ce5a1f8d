mod args;
mod commands;
mod pipeline;
mod run;
mod stages;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(run::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    match &cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Clean(a) => commands::clean(a),
        Command::Dedup(a) => commands::dedup(a),
        Command::Bpe(c) => commands::bpe(c),
        Command::Mix(a) => commands::mix(a),
        Command::Scaling(c) => commands::scaling(c),
        Command::Oracle(c) => commands::oracle(c),
        Command::Select(a) => commands::select(a),
        Command::Elo(c) => commands::elo(c),
        Command::Pipeline(a) => pipeline::run(a),
        Command::Testkit(c) => commands::testkit(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
