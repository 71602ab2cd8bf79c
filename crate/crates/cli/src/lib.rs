//! `onomastat` command-line front end.
//!
//! Every command writes a JSON report (the canonical output, with its run
//! manifest embedded) plus CSV projections of it into `--out`. `report`
//! replays a run from a JSON report's manifest.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use onomastat_core::{Error, RunManifest};

pub use commands::ReportFile;

pub const DATA_DIR_ENV: &str = "ONOMASTAT_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("replay differs from the original in: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

impl CliError {
    /// 0 success, 1 replay mismatch, 2 input or schema error, 3 infeasible
    /// configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_infeasible() => 3,
            CliError::Mismatch(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "onomastat", version, about = "Name-frequency statistics for ancient corpora")]
pub struct Cli {
    /// Worker threads; affects speed only, never output.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a lexicon into reference distributions.
    Ingest(commands::IngestArgs),
    /// Chi-squared goodness-of-fit of corpora against a reference.
    Test(commands::TestArgs),
    /// Historical and uniform percentile intervals per name.
    Intervals(commands::IntervalsArgs),
    /// Binomial upper-tail test for individual names.
    Tail(commands::TailArgs),
    /// Rare-name count distribution and pool calibration.
    Table4(commands::Table4Args),
    /// Rejection rates of test methods on simulated corpora.
    Power(commands::PowerArgs),
    /// Disambiguating qualifiers by popularity tier.
    Qualifiers(commands::QualifiersArgs),
    /// Re-run a report from its embedded manifest.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Test(_) => "test",
            Command::Intervals(_) => "intervals",
            Command::Tail(_) => "tail",
            Command::Table4(_) => "table4",
            Command::Power(_) => "power",
            Command::Qualifiers(_) => "qualifiers",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by an earlier run.
    pub report: PathBuf,
    /// Compare the replay byte-for-byte with the files next to the report.
    #[arg(long)]
    pub check: bool,
    /// Where to write the replay (ignored with --check).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Shared output flag.
#[derive(Debug, Args, Clone)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `argv` (program name first) and runs it. Returns a message for
/// stdout on success.
pub fn run<I, T>(argv: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv)?;
    let replay_args = replay_args(&argv, cli.command.name());
    match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(cli.command, replay_args))
        }
        None => dispatch(cli.command, replay_args),
    }
}

fn dispatch(command: Command, args: Vec<String>) -> CliResult<String> {
    let manifest = RunManifest::new(command.name(), args);
    match command {
        Command::Ingest(a) => commands::ingest(a, manifest),
        Command::Test(a) => commands::test(a, manifest),
        Command::Intervals(a) => commands::intervals(a, manifest),
        Command::Tail(a) => commands::tail(a, manifest),
        Command::Table4(a) => commands::table4(a, manifest),
        Command::Power(a) => commands::power(a, manifest),
        Command::Qualifiers(a) => commands::qualifiers(a, manifest),
        Command::Report(a) => replay(a),
    }
}

/// Arguments after the subcommand, without the output directory and worker
/// count, which never influence report contents.
fn replay_args(argv: &[OsString], command: &str) -> Vec<String> {
    let tokens: Vec<String> = argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    let start = tokens.iter().position(|t| t == command).map_or(tokens.len(), |i| i + 1);
    let mut out = Vec::new();
    let mut it = tokens[start..].iter();
    while let Some(t) = it.next() {
        if t == "--out" || t == "--workers" {
            it.next();
        } else if !(t.starts_with("--out=") || t.starts_with("--workers=")) {
            out.push(t.clone());
        }
    }
    out
}

/// Resolves a relative input path against `ONOMASTAT_DATA_DIR` when set.
pub fn resolve_input(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => Path::new(&root).join(path),
        _ => path.to_path_buf(),
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Core(io_error(dir, e)))
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Core(io_error(&path, e)))
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, manifest: &RunManifest, body: &T) -> CliResult<()> {
    let report = commands::Report { manifest, results: body };
    let mut text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    text.push('\n');
    write_bytes(dir, name, text.as_bytes())
}

fn replay(args: ReportArgs) -> CliResult<String> {
    let path = resolve_input(&args.report);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Core(io_error(&path, e)))?;
    let report: ReportFile = serde_json::from_str(&text).map_err(Error::from)?;
    let m = report.manifest;
    let build_argv = |out: &Path| {
        let mut argv = vec!["onomastat".to_string(), m.command.clone()];
        argv.extend(m.args.iter().cloned());
        argv.push("--out".into());
        argv.push(out.display().to_string());
        argv
    };
    if !args.check {
        let out = args.out.unwrap_or_else(|| PathBuf::from("."));
        run(build_argv(&out))?;
        return Ok(format!("replayed `{}` into {}", m.command, out.display()));
    }
    let original_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let scratch = tempfile::tempdir().map_err(|e| CliError::Core(io_error(Path::new("<tempdir>"), e)))?;
    run(build_argv(scratch.path()))?;
    let mut differing = Vec::new();
    for name in &m.outputs {
        let a = fs::read(original_dir.join(name));
        let b = fs::read(scratch.path().join(name));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => differing.push(name.clone()),
        }
    }
    if differing.is_empty() {
        Ok(format!("replay of `{}` is byte-identical ({} files)", m.command, m.outputs.len()))
    } else {
        Err(CliError::Mismatch(differing))
    }
}
