//! `ergolab` command line: reads a TOML run config, runs one experiment and
//! writes `report.json`, `manifest.json` and per-grid artifacts to the output
//! directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ergolab::config::{ExperimentKind, RunConfig};
use ergolab::Error;

pub mod experiments;

pub use experiments::Outcome;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about = "Degenerate elliptic solver and ergodic-problem experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Dirichlet solve on each configured grid.
    Solve,
    /// Ergodic constant estimate, with an optional uniqueness check.
    Ergodic,
    /// Blow-up profile, gradient rate and rescaling checks at the estimated constant.
    Asymptotics,
    /// Error against an exact solution under grid refinement.
    Convergence,
    /// Randomized operator property checks.
    PropertySuite,
    /// One-dimensional shooting oracle.
    Oracle,
}

impl Command {
    pub fn kind(self) -> ExperimentKind {
        match self {
            Command::Solve => ExperimentKind::Solve,
            Command::Ergodic => ExperimentKind::Ergodic,
            Command::Asymptotics => ExperimentKind::Asymptotics,
            Command::Convergence => ExperimentKind::Convergence,
            Command::PropertySuite => ExperimentKind::PropertySuite,
            Command::Oracle => ExperimentKind::Oracle,
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Exit code 2.
    Config(String),
    /// Exit code 1; the report has been written when `report` is set.
    Experiment { message: String, report: Option<PathBuf> },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Experiment { .. } => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Experiment { message, .. } => write!(f, "experiment failed: {message}"),
        }
    }
}

fn io_err(e: io::Error) -> RunError {
    RunError::Experiment {
        message: e.to_string(),
        report: None,
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub experiment: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub error: Option<String>,
    pub results: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration after flag overrides.
    pub config: String,
    pub files: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the effective configuration, ignoring the output location.
pub fn config_hash(cfg: &RunConfig) -> Result<String, RunError> {
    let mut c = cfg.clone();
    c.out = None;
    let text = c.to_toml().map_err(|e| RunError::Config(e.to_string()))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Whether a written report belongs to this configuration.
pub fn report_matches_config(report_json: &str, cfg: &RunConfig) -> Result<bool, RunError> {
    let v: serde_json::Value = serde_json::from_str(report_json).map_err(|e| RunError::Config(e.to_string()))?;
    Ok(v.get("config_hash").and_then(|h| h.as_str()) == Some(config_hash(cfg)?.as_str()))
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| RunError::Config(e.to_string()))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), RunError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| RunError::Config(format!("{}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(RunError::Config(format!(
                "output directory {} is not empty (use --force)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| RunError::Config(format!("{}: {e}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

/// Validates, runs and writes all artifacts. Returns the report path.
pub fn run(cfg: &RunConfig, force: bool) -> Result<PathBuf, RunError> {
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let kind = cfg.kind().map_err(|e| RunError::Config(e.to_string()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| RunError::Config("no output directory (give --out or `out`)".into()))?;
    let hash = config_hash(cfg)?;
    prepare_out_dir(&out, force)?;

    let (passed, error, outcome) = match experiments::run_experiment(kind, cfg) {
        Ok(o) => (o.passed, None, o),
        Err(Error::Config(m)) => return Err(RunError::Config(m)),
        Err(e) => (false, Some(e.to_string()), Outcome::default()),
    };
    let report = Report {
        experiment: kind.name(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        passed,
        error: error.clone(),
        results: outcome.results,
    };
    let mut files = outcome.files;
    files.push(("report.json".into(), to_json(&report)));
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::new();
    for (rel, bytes) in &files {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(&path, bytes).map_err(io_err)?;
        entries.push(ManifestEntry {
            path: rel.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }
    let mut effective = cfg.clone();
    effective.out = None;
    let manifest = Manifest {
        tool: "ergolab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: kind.name(),
        seed: cfg.seed,
        config_hash: hash,
        config: effective.to_toml().map_err(|e| RunError::Config(e.to_string()))?,
        files: entries,
    };
    fs::write(out.join("manifest.json"), to_json(&manifest)).map_err(io_err)?;

    let report_path = out.join("report.json");
    if passed {
        Ok(report_path)
    } else {
        Err(RunError::Experiment {
            message: error.unwrap_or_else(|| "one or more checks failed".into()),
            report: Some(report_path),
        })
    }
}

/// Parses arguments, applies flag overrides and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("ergolab: {e}");
            if let RunError::Experiment { report: Some(p), .. } = &e {
                eprintln!("ergolab: report written to {}", p.display());
            }
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<PathBuf, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => return Err(RunError::Config("--config is required".into())),
    };
    cfg.experiment = Some(cli.command.kind());
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    run(&cfg, cli.force)
}
