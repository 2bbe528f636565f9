//! `opticalvn`: verification suites, POM tables, Monte Carlo trials and parameter sweeps.

mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunArgs, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exit status 2.
    Config(String),
    /// A check or experiment failed; exit status 1.
    Failure(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "opticalvn",
    version,
    about = "All-optical von Neumann quadrature measurement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the invariant suite over the preset grid (or the given eta/sigma).
    Verify(RunArgs),
    /// Outcome density of the input state with oracle comparison and Gaussian fit.
    Pom(RunArgs),
    /// Monte Carlo trials; with --repeat, repeatability statistics.
    Sample(RunArgs),
    /// Long-format sweep over --etas, --sigmas and --betas.
    Sweep(RunArgs),
}

fn run(command: Command, args: &RunArgs) -> Result<bool, CliError> {
    let cfg = RunConfig::resolve(command, args)?;
    let report = match command {
        Command::Verify => commands::verify(&cfg)?,
        Command::Pom => commands::pom(&cfg)?,
        Command::Sample => commands::sample(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
    };
    let text = report.render(cfg.format);
    match &cfg.out {
        Some(path) => report::write_atomic(path, &text)?,
        None => print!("{text}"),
    }
    for c in &report.checks {
        let value = c.value.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
        let mark = if c.pass { "PASS" } else { "FAIL" };
        eprintln!(
            "[{mark}] {} {value} (tolerance {:e}): {}",
            c.name, c.tolerance, c.detail
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Pom(a) => (Command::Pom, a),
        Cmd::Sample(a) => (Command::Sample, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    match run(command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: one or more checks failed", command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Failure(_) => 1,
            })
        }
    }
}
