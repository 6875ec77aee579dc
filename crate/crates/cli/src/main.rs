//! `patchrec` command-line driver.
//!
//! Exit codes: 0 on success, 2 on usage or validation errors, 1 on runtime
//! failures.

mod bench;
mod degrade;
mod files;
mod learn;
mod recover;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "patchrec", version, about = "Patch dictionary learning and image recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a patch dictionary from a folder of PGM images.
    Learn(learn::Args),
    /// Measure an image with a sampling, sensing or blur operator and add noise.
    Degrade(degrade::Args),
    /// Recover an image from measurements written by `degrade`.
    Recover(recover::Args),
    /// Synthetic dictionary-recovery benchmark.
    BenchSynth(bench::Args),
}

/// Marks errors caused by bad input rather than a failed computation.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(patchrec::Error::Argument(_) | patchrec::Error::Shape(_) | patchrec::Error::Parse { .. }) =
            cause.downcast_ref::<patchrec::Error>()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Learn(a) => learn::run(a),
        Command::Degrade(a) => degrade::run(a),
        Command::Recover(a) => recover::run(a),
        Command::BenchSynth(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
