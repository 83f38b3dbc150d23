//! Command-line runner: reads a JSON [`config::RunConfig`], runs one pipeline and writes
//! CSV, JSON and SVG artifacts into the output directory.
//!
//! Exit codes report infrastructure only: 2 for a malformed configuration, 1 for any
//! other failure, 0 otherwise. Mathematical findings such as O–T chords are data.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ogc_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(ogc_core::Error::Config(_) | ogc_core::Error::Usage(_) | ogc_core::Error::Parse(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Shoot orthogonally from a boundary grid and report chords that arrive tangentially.
    ScanOt,
    /// Descend from a chord (or shoot from a point) to a single verified OGC.
    FindOgc,
    /// Multistart catalog of distinct OGCs.
    Multiplicity,
    /// Brake orbits from OGCs of the Jacobi metric.
    Brake,
    /// Transversality criteria on the demonstration instances and random linear algebra.
    TransversalityDemo,
    /// delta0, K0, M0 and the strip inequalities.
    Constants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ScanOt => "scan-ot",
            Command::FindOgc => "find-ogc",
            Command::Multiplicity => "multiplicity",
            Command::Brake => "brake",
            Command::TransversalityDemo => "transversality-demo",
            Command::Constants => "constants",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ogc", version, about = "Orthogonal geodesic chords: scans, searches, catalogs and brake orbits")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    config: PathBuf,
}

/// Files written by a run, and a short human-readable summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Loads `config` and runs `command` on it.
pub fn run(command: Command, config: &Path) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(config)?;
    execute(command, &cfg)
}

/// Runs `command` on a validated configuration inside a pool of `cfg.workers` threads.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let job = || match command {
        Command::ScanOt => commands::scan_ot(cfg),
        Command::FindOgc => commands::find_ogc(cfg),
        Command::Multiplicity => commands::multiplicity(cfg),
        Command::Brake => commands::brake(cfg),
        Command::TransversalityDemo => commands::transversality_demo(cfg),
        Command::Constants => commands::constants(cfg),
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Entry point shared by the binary: parses `args`, runs, prints, returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(args.command, &args.config) {
        Ok(out) => {
            // a closed pipe (`ogc ... | head`) is not a failure of the run
            let mut stdout = std::io::stdout().lock();
            let _ = write!(stdout, "{}", out.summary);
            for f in &out.files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
