//! `dirtile` command line: instance generation, decomposition, verification,
//! sweeps and report aggregation.
//!
//! Exit codes: 0 success, 1 cap or structural check failed, 2 config or input
//! error, 3 accuracy error, 4 internal error. Every failure prints one
//! `dirtile-error kind=... key=value ...` line per problem on stderr.

mod artifacts;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dirtile::Error;

use artifacts::{Failure, Outcome, Run};

#[derive(Parser)]
#[command(name = "dirtile", version, about = "Tile decompositions and measured constants on a periodic grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance snapshots.
    Gen(Common),
    /// Write forest and organization text files (generating missing instances).
    Decompose(Common),
    /// Run every check on existing artifacts (building missing ones), then report.
    Verify(Common),
    /// Full pipeline from scratch over the seed list, then report.
    Sweep(Common),
    /// Aggregate report CSVs under the output directory into a summary and plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap file (default: the config's `constants.caps`).
    #[arg(long)]
    cap_file: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Supplies the output directory and cap file when those flags are absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cap_file: Option<PathBuf>,
}

fn error_line(e: &Error) -> (String, u8) {
    match e {
        Error::Config { field, msg } => (format!("kind=config field={field} msg={msg:?}"), 2),
        Error::Accuracy { what, achieved, tolerance } => (format!("kind=accuracy what={what:?} achieved={achieved:e} tolerance={tolerance:e}"), 3),
        Error::Io(m) => (format!("kind=io msg={m:?}"), 2),
        Error::Parse(m) => (format!("kind=parse msg={m:?}"), 2),
        Error::Dimension(m) => (format!("kind=internal msg={m:?}"), 4),
        Error::Internal(m) => (format!("kind=internal msg={m:?}"), 4),
    }
}

fn failure_line(f: &Failure) -> String {
    match f {
        Failure::Cap(v) => format!("kind=cap id={} bound={} value={:e} limit={:e}", v.id, v.kind, v.value, v.limit),
        Failure::Structural { instance, check } => format!("kind=structural instance={instance} check={check}"),
    }
}

fn run(cli: Cli) -> dirtile::Result<Outcome> {
    match cli.command {
        Command::Gen(c) => Run::new(&c.config, c.seed, c.jobs, c.out, c.cap_file)?.gen(),
        Command::Decompose(c) => Run::new(&c.config, c.seed, c.jobs, c.out, c.cap_file)?.decompose(),
        Command::Verify(c) => Run::new(&c.config, c.seed, c.jobs, c.out, c.cap_file)?.verify(false),
        Command::Sweep(c) => Run::new(&c.config, c.seed, c.jobs, c.out, c.cap_file)?.verify(true),
        Command::Report(r) => artifacts::report(r.config.as_deref(), r.out, r.cap_file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for line in &outcome.notes {
                println!("{line}");
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("dirtile-error {}", failure_line(f));
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let (line, code) = error_line(&e);
            eprintln!("dirtile-error {line}");
            ExitCode::from(code)
        }
    }
}
