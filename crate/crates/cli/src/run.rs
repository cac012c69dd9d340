//! Executes a [`RunConfig`]: integrate, diagnose, write files.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sizespec::diagnostics::{run_report, RunReport};
use sizespec::grid::linear_initial_condition;
use sizespec::integrator::{integrate, IntegrationStatus, Trajectory};
use sizespec::{Distribution, ModelError};

use crate::config::{InitialState, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Numerical(m) | RunError::Io(m) => m,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for RunError {}

fn model_error(e: ModelError) -> RunError {
    match e {
        ModelError::InvalidParam(_) | ModelError::Unsupported(_) | ModelError::UnknownName { .. } => {
            RunError::Config(e.to_string())
        }
        other => RunError::Numerical(other.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// The numerical failure behind a truncated run.
    pub fn failure(&self) -> Option<RunError> {
        let msg = match self.report.status {
            IntegrationStatus::Completed => return None,
            IntegrationStatus::MaxStepsExceeded { t } => {
                format!("step budget exhausted at t = {t}; outputs truncated")
            }
            IntegrationStatus::StepSizeUnderflow { t } => {
                format!("step size underflow (likely blow-up) at t = {t}; outputs truncated")
            }
        };
        Some(RunError::Numerical(msg))
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    config: &'a RunConfig,
    status: IntegrationStatus,
    accepted_steps: usize,
    rejected_steps: usize,
}

pub fn initial_state(cfg: &RunConfig) -> Result<Distribution, RunError> {
    let d = match &cfg.initial {
        InitialState::Linear { left, right } => {
            linear_initial_condition(cfg.grid, *left, *right).map_err(|e| RunError::Config(e.to_string()))?
        }
        InitialState::Csv { path } => {
            let file = File::open(path).map_err(|e| io_error(path, e))?;
            Distribution::read_csv(BufReader::new(file), cfg.grid)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        }
    };
    if d.min_value() < 0.0 {
        return Err(RunError::Config("initial values must be nonnegative".into()));
    }
    Ok(d)
}

/// File name of the snapshot at time `t`.
pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_t{t}.csv")
}

/// Integrates, computes the report and writes snapshot CSVs, `report.json`
/// and `meta.json` into `out_dir`. A run stopped by the integrator still
/// returns `Ok`, with `report.truncated` set and [`RunOutcome::failure`]
/// describing why.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let d0 = initial_state(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let traj = integrate(&cfg.model, &d0, cfg.t_end, &cfg.control, &cfg.snapshot_times).map_err(model_error)?;
    let report = run_report(&cfg.model, &traj, &cfg.diagnostics).map_err(model_error)?;

    let mut files = Vec::new();
    for snap in &traj.snapshots {
        let path = out_dir.join(snapshot_file_name(snap.time()));
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = BufWriter::new(file);
        snap.write_csv(&mut w).map_err(|e| io_error(&path, e))?;
        w.flush().map_err(|e| io_error(&path, e))?;
        files.push(path);
    }
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        status: traj.status,
        accepted_steps: traj.accepted_steps(),
        rejected_steps: traj.rejected_steps(),
    };
    for (name, json) in [
        ("report.json", serde_json::to_string_pretty(&report)),
        ("meta.json", serde_json::to_string_pretty(&meta)),
    ] {
        let path = out_dir.join(name);
        let mut text = json.map_err(|e| RunError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        files.push(path);
    }
    Ok(RunOutcome {
        report,
        trajectory: traj,
        files,
    })
}
