//! Batch experiment runner: one command per experiment, flat config files,
//! seeded runs, `report.json` plus CSV tables per run.

// `!(x > 0.0)` also rejects NaN, which is the intent wherever it is used.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use stoplab::StopLabError;
use thiserror::Error;

pub use config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] StopLabError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical preconditions, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Price,
    OracleCheck,
    ConvergeValues,
    ConvergeTimes,
    Coupling,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::OracleCheck => "oracle-check",
            Command::ConvergeValues => "converge-values",
            Command::ConvergeTimes => "converge-times",
            Command::Coupling => "coupling",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Effective configuration after defaults and overrides.
    pub config: BTreeMap<String, String>,
    /// The `u`, `d`, `rho` convention behind every tree in the run.
    pub normalization: serde_json::Value,
    pub reference_method: Option<String>,
    /// Per-`n` results.
    pub results: serde_json::Value,
    pub summary: serde_json::Value,
    pub wall_clock_seconds: f64,
}

/// A finished run: the report plus named CSV tables, `table.csv` first.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }

    pub fn summary_flag(&self, key: &str) -> Option<bool> {
        self.report.summary.get(key).and_then(serde_json::Value::as_bool)
    }
}

/// What a command hands back before the runner stamps the report.
pub(crate) struct Run {
    pub normalization: serde_json::Value,
    pub reference_method: Option<String>,
    pub results: serde_json::Value,
    pub summary: serde_json::Value,
    pub tables: Vec<(String, String)>,
}

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 7;

pub fn run(command: Command, settings: &Settings) -> Result<Outcome, CliError> {
    let start = Instant::now();
    settings.get("seed", DEFAULT_SEED)?;
    let run = match command {
        Command::Price => commands::price(settings)?,
        Command::OracleCheck => commands::oracle_check(settings)?,
        Command::ConvergeValues => commands::converge_values(settings)?,
        Command::ConvergeTimes => commands::converge_times(settings)?,
        Command::Coupling => commands::coupling(settings)?,
        Command::Diagnose => commands::diagnose(settings)?,
    };
    settings.check_unused()?;
    Ok(Outcome {
        report: RunReport {
            tool: "stoplab",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            config: settings.effective(),
            normalization: run.normalization,
            reference_method: run.reference_method,
            results: run.results,
            summary: run.summary,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
        tables: run.tables,
    })
}

/// Writes `report.json` and every table into `dir`, each through a temporary
/// file renamed into place. Returns the written paths.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut report = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    report.push('\n');
    let files = std::iter::once(("report.json", report.as_str()))
        .chain(outcome.tables.iter().map(|(n, t)| (n.as_str(), t.as_str())));
    let mut written = Vec::new();
    for (name, body) in files {
        let target = dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
        tmp.write_all(body.as_bytes()).map_err(io(&target))?;
        tmp.persist(&target).map_err(|e| CliError::Io {
            path: target.clone(),
            source: e.error,
        })?;
        written.push(target);
    }
    Ok(written)
}
