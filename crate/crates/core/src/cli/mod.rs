//! Config ingestion, run orchestration and exports behind the `mgdeform` binary.

mod config;

pub use config::{parse_config, ConfigError, GridSpec, OutputConfig, RunConfig, CONFIG_VERSION};

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{run_flow_with, FlowError, FlowSummary, Snapshot, SnapshotRow, StepRecord};
use crate::surface::{build_surface_unchecked, validate_hypotheses, HypothesisReport, SurfaceError};
use crate::vekua::{bvp_solve, ProblemFile, SolutionFile, VekuaError};

pub const SUMMARY_FORMAT: &str = "mgdeform-run/1";
pub const SNAPSHOT_FORMAT: &str = "mgdeform-snapshot/1";
/// Rates below this count as no motion.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("surface hypotheses violated: {0}")]
    Hypotheses(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Vekua(#[from] VekuaError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Hypotheses(_) => "hypotheses",
            Self::Surface(_) => "surface",
            Self::Flow(_) => "flow",
            Self::Vekua(_) => "bvp",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON error report.
    pub fn report(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_config(&text)?)
}

/// Summary written at the end of a run, with the resolved config for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format: String,
    pub config: RunConfig,
    pub hypotheses: HypothesisReport,
    pub flow: FlowSummary,
    pub identity_flow: bool,
    pub last_step: Option<StepRecord>,
}

/// Checks the surface hypotheses of a config without running the flow.
pub fn validate(cfg: &RunConfig) -> Result<HypothesisReport, CliError> {
    let grid = cfg.disk_grid().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let surface = build_surface_unchecked(&cfg.surface, &cfg.ambient(), grid)?;
    Ok(validate_hypotheses(&surface))
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("step_{step:05}.csv"))
}

/// Writes a snapshot as CSV with a format comment and a header line; floats
/// carry 17 significant digits.
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = || -> io::Result<()> {
        writeln!(w, "# {SNAPSHOT_FORMAT} step={} t={:.16e}", snap.step, snap.t)?;
        writeln!(w, "{}", SnapshotRow::COLUMNS.join(","))?;
        for r in &snap.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.node, r.r, r.theta, r.a1, r.a2, r.c, r.dk, r.r1, r.r2
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// Runs the flow of `cfg`, writing all artifacts below `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    cfg.validate().map_err(ConfigError::Invalid)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let metric = cfg.ambient();
    let grid = cfg.disk_grid().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let surface = build_surface_unchecked(&cfg.surface, &metric, grid)?;
    let hypotheses = validate_hypotheses(&surface);
    if !hypotheses.passed() {
        return Err(CliError::Hypotheses(format!(
            "min eig g {:e}, min eig b {:e}, min H {:e}, coordinate residual {:e}",
            hypotheses.min_eig_g, hypotheses.min_eig_b, hypotheses.min_h, hypotheses.max_coordinate_residual
        )));
    }
    if cfg.output.snapshots {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let trace_path = out.join("trace.jsonl");
    let mut trace = if cfg.output.trace {
        Some(BufWriter::new(File::create(&trace_path).map_err(io_err(&trace_path))?))
    } else {
        None
    };
    // errors inside the observer are carried out through this slot
    let mut export_error = None;
    let every = cfg.output.snapshot_every;
    let result = run_flow_with(metric, surface, cfg.flow.clone(), |flow, rec| {
        let mut write = || -> Result<(), CliError> {
            if let Some(w) = trace.as_mut() {
                let line = serde_json::to_string(rec).expect("record is serializable");
                writeln!(w, "{line}").map_err(io_err(&trace_path))?;
            }
            if cfg.output.snapshots && (rec.step % every == 0 || flow.finished()) {
                write_snapshot(&snapshot_path(out, rec.step), &flow.snapshot())?;
            }
            Ok(())
        };
        write().map_err(|e| {
            let msg = e.to_string();
            export_error = Some(e);
            FlowError::Config(msg)
        })
    });
    let run = match result {
        Ok(r) => r,
        Err(e) => return Err(export_error.unwrap_or(CliError::Flow(e))),
    };
    if let Some(mut w) = trace {
        w.flush().map_err(io_err(&trace_path))?;
    }
    let summary = RunSummary {
        format: SUMMARY_FORMAT.into(),
        config: cfg.clone(),
        hypotheses,
        identity_flow: run.summary.identity_flow(IDENTITY_TOL),
        flow: run.summary,
        last_step: run.records.last().cloned(),
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    info!("run finished: {} steps, artifacts in {}", summary.flow.steps, out.display());
    Ok(summary)
}

/// Solves a dumped boundary-value problem and writes the solution file.
pub fn bvp(problem: &Path, out: &Path) -> Result<SolutionFile, CliError> {
    let text = fs::read_to_string(problem).map_err(io_err(problem))?;
    let file = ProblemFile::parse(&text)?;
    let p = file.problem()?;
    let fam = bvp_solve(&p, None, &file.policy, &file.options)?;
    let sol = SolutionFile::new(&fam, file.exact.as_deref());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let json = serde_json::to_string_pretty(&sol).expect("solution is serializable");
    fs::write(out, json + "\n").map_err(io_err(out))?;
    Ok(sol)
}

#[cfg(test)]
mod tests;
