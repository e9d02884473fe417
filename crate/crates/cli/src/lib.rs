//! Command-line front end: config loading, worker pools and the four analysis
//! commands, each writing a report directory with a manifest.

pub mod commands;
pub mod config;
pub mod resolve;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{run_command, Command};
pub use config::RunConfig;
pub use resolve::{resolve, Overrides, Qoi, Resolved};

pub const WORKERS_ENV: &str = "PRT_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] prt_core::Error),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::Core(e) => e.class(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prt", version, about = "Sensitivity FIM, active subspaces and profile analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Report directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Local sFIM at the nominal parameters.
    Sfim(CommonArgs),
    /// Average sFIM over samples and the active/inactive split.
    Active(CommonArgs),
    /// Profile likelihood-style traces and confidence sets.
    Profile(CommonArgs),
    /// Accuracy of the low-rank approximation on fresh samples.
    Approx(CommonArgs),
}

impl CliCommand {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::Sfim(a) => (Command::Sfim, a),
            CliCommand::Active(a) => (Command::Active, a),
            CliCommand::Profile(a) => (Command::Profile, a),
            CliCommand::Approx(a) => (Command::Approx, a),
        }
    }
}

/// Outcome of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

/// Load the config, build a pool with the requested worker count and run.
pub fn run_with_args(command: Command, args: &CommonArgs) -> Result<RunSummary, CliError> {
    let (cfg, bytes) = RunConfig::load(&args.config)?;
    let overrides = Overrides { seed: args.seed, out: args.out.clone() };
    run_config(command, &cfg, &bytes, &overrides, args.workers)
}

pub fn run_config(
    command: Command,
    cfg: &RunConfig,
    config_bytes: &[u8],
    overrides: &Overrides,
    workers: Option<usize>,
) -> Result<RunSummary, CliError> {
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let resolved = resolve(cfg, overrides)?;
        run_command(command, cfg, &resolved, config_bytes)
    })
}

/// Parse `argv`, run, and map the outcome to a process exit code. Errors are
/// written to `stderr` as `prt: error[Class]: message`.
pub fn main_with<I, T>(argv: I, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(stderr, "prt: error[UsageError]: {first}");
            return 2;
        }
    };
    let (command, args) = cli.command.split();
    match run_with_args(command, args) {
        Ok(summary) => {
            println!("wrote {} files to {}", summary.files.len() + 1, summary.dir.display());
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "prt: error[{}]: {}", e.class(), e);
            e.exit_code()
        }
    }
}
