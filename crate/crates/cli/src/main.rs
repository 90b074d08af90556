//! `fadeflow`: simulate, audit and probe the models described by a TOML file.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 blow-up,
//! 4 hypothesis failure, 5 inversion residual too large, 6 no return pairs.

mod commands;
mod config;
mod datum;
mod error;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Config, Overrides};
use crate::error::CliError;
use crate::output::Format;

#[derive(Parser)]
#[command(name = "fadeflow", version, about = "Nonautonomous FDE/NFDE simulation and probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid step, overriding `[grid].step`.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Grid depth, overriding `[grid].depth`.
    #[arg(long, global = true)]
    depth: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate from `[run].initial` and write the trajectory.
    Simulate,
    /// Run the hypothesis audit.
    Verify,
    /// Invert the convolution operator on `[invert].h`.
    Invert,
    /// Run the copy-of-the-base probe.
    Omega,
    /// Repeat `simulate` over `[sweep].values` of `[sweep].param`.
    Sweep,
}

impl Command {
    fn default_format(self) -> Format {
        match self {
            Command::Verify | Command::Omega => Format::Json,
            _ => Format::Csv,
        }
    }
}

fn run(cli: &Cli) -> Result<Option<CliError>, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config { msg: "--config is required".into(), at: None })?;
    for (flag, v) in [("--dt", cli.dt), ("--depth", cli.depth)] {
        if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return Err(CliError::Config { msg: format!("{flag} must be positive"), at: None });
        }
    }
    let cfg = Config::load(path, Overrides { seed: cli.seed, dt: cli.dt, depth: cli.depth })?;
    let (report, failure) = match cli.command {
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Verify => commands::verify(&cfg)?,
        Command::Invert => commands::invert(&cfg)?,
        Command::Omega => commands::omega(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
    };
    let format = cli.format.unwrap_or(cli.command.default_format());
    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    report.write(format, &mut out)?;
    out.flush()?;
    Ok(failure)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) | Err(e) => {
            eprintln!("fadeflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
