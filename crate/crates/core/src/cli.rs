//! Batch front-end behind the `srblab` binary.
//!
//! Each subcommand reads an optional TOML [`RunConfig`], applies command
//! line overrides, runs on a dedicated worker pool and writes its outputs to
//! the configured directory. Exit status: 0 success, 1 criterion failure,
//! 2 usage or configuration error, 3 numerical error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{
    AseSection, CriteriaSection, EnsembleSection, IdentitySection, NueSection, PlissSection,
    PushforwardSection, RunConfig, SimulateSection, SplittingSection, SrSection, SrbSection,
    TraceSection,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "srblab", version, about = "Expansion, recurrence and physical-measure diagnostics for flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// System spec, e.g. `lorenz` or `linear(0,1,0,0,0,0,0,0,1)`, or a `.toml` definition file.
    #[arg(long, global = true)]
    pub system: Option<String>,
    /// Ensemble seed (required whenever an ensemble is drawn).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one orbit and write `t, x, |G|` rows.
    Simulate,
    /// Estimate the splitting, its normal section and cone invariance at a point.
    Splitting,
    /// Cocycle trace and hyperbolic times of one orbit.
    Pliss,
    /// Run one ensemble criterion or structural check.
    Criteria {
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Empirical measures, clusters and basin coverage.
    Srb,
    /// Summarize the criterion reports in the output directory.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Nue,
    #[value(name = "nueT")]
    NueT,
    Sr,
    Ase,
    Identity,
}

impl Which {
    pub fn name(self) -> &'static str {
        match self {
            Which::Nue => "nue",
            Which::NueT => "nueT",
            Which::Sr => "sr",
            Which::Ase => "ase",
            Which::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Which::Nue, Which::NueT, Which::Sr, Which::Ase, Which::Identity]
            .into_iter()
            .find(|w| w.name() == s)
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Splitting => "splitting",
            Command::Pliss => "pliss",
            Command::Criteria { .. } => "criteria",
            Command::Srb => "srb",
            Command::Report => "report",
        }
    }
}

/// Failure of a run, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::UnknownSystem { .. }
            | Error::Definition(_)
            | Error::InvalidArgument(_)
            | Error::Precondition(_)
            | Error::Io(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e),
        }
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
        }
    }
}

/// Outcome of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Fail,
}

/// Builds the effective configuration: file, then flags, then overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if let Some(s) = &c.system {
        cfg.system = s.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.display().to_string();
    }
    for o in &c.overrides {
        cfg.set(o).map_err(CliError::Usage)?;
    }
    cfg.command = Some(cli.command.name().to_string());
    if let Command::Criteria { which } = &cli.command {
        cfg.which = Some(which.name().to_string());
    }
    Ok(cfg)
}

/// Runs the subcommand named in `cfg.command`.
pub fn execute(cfg: &RunConfig) -> Result<Status, CliError> {
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", cfg.out_dir)))?;
    pool.install(|| match cfg.command.as_deref() {
        Some("simulate") => commands::simulate(cfg),
        Some("splitting") => commands::splitting(cfg),
        Some("pliss") => commands::pliss(cfg),
        Some("criteria") => {
            let which = cfg
                .which
                .as_deref()
                .and_then(Which::parse)
                .ok_or_else(|| CliError::Usage("criteria needs which = nue|nueT|sr|ase|identity".into()))?;
            commands::criteria(cfg, which)
        }
        Some("srb") => commands::srb(cfg),
        Some("report") => commands::report(cfg),
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    })
}

/// Parses `args`, runs, prints diagnostics to stderr and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| execute(&cfg));
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::Fail) => EXIT_FAIL,
        Err(e) => {
            eprintln!("srblab: {e}");
            e.code()
        }
    }
}
