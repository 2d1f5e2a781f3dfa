//! `ubiqtree` command-line tool.
//!
//! Exit codes: 0 success, 1 failed self-test, 2 usage error, 3 data or
//! model error.

mod args;
mod explain;
mod fsio;
mod report;
mod selftest;
mod train;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// An error caused by the command line itself rather than by its inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Output switches shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Ctx {
    pub seed: u64,
    pub quiet: bool,
}

impl Ctx {
    pub fn say(&self, msg: impl fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| anyhow::anyhow!("cannot start worker threads: {e}"))?;
    pool.install(|| match &cli.command {
        Command::Train(a) => train::run(a, &ctx).map(|()| ExitCode::SUCCESS),
        Command::Explain(a) => explain::run(a, &ctx).map(|()| ExitCode::SUCCESS),
        Command::Report(a) => report::run(a).map(|()| ExitCode::SUCCESS),
        Command::Selftest(a) => selftest::run(a, &ctx),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
