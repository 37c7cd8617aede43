use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ambient::{AmbientMetric, MetricKind};
use crate::flow::FlowConfig;
use crate::grid::DiskGrid;
use crate::surface::SurfaceSpec;

/// Version of the config grammar accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Line-delimited step records.
    pub trace: bool,
    /// Per-node field tables.
    pub snapshots: bool,
    /// Write a snapshot every this many steps; the final state is always written.
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), trace: true, snapshots: true, snapshot_every: 1 }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Bound constant M₀ of the metric; a per-kind default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    pub metric: MetricKind,
    pub surface: SurfaceSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse { line: usize, column: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse { line, column, message } => write!(f, "line {line}, column {column}: {message}"),
            Self::Invalid(errs) => write!(f, "invalid config: {}", errs.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a TOML run config.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse { line, column, message: e.message().trim().to_string() }
    })?;
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

impl RunConfig {
    /// Config with the given problem and all other settings at their defaults.
    pub fn new(metric: MetricKind, surface: SurfaceSpec, n_r: usize, n_theta: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            m0: None,
            metric,
            surface,
            grid: GridSpec { n_r, n_theta },
            flow: FlowConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Canonical TOML form; `parse_config(emit())` gives back the same config.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn ambient(&self) -> AmbientMetric {
        let m0 = self.m0.unwrap_or(match self.metric {
            MetricKind::Flat | MetricKind::Constant { .. } => 10.0,
            _ => 100.0,
        });
        AmbientMetric { kind: self.metric.clone(), m0 }
    }

    pub fn disk_grid(&self) -> Result<DiskGrid, String> {
        let g = DiskGrid::new(self.grid.n_r, self.grid.n_theta).map_err(|e| format!("grid: {e}"))?;
        if g.n_theta % 4 != 0 {
            return Err(format!("grid: n_theta = {} must be divisible by 4", g.n_theta));
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version: unsupported config version {}, expected {CONFIG_VERSION}", self.version));
        }
        if let Some(m0) = self.m0 {
            if !(m0 > 0.0) {
                errs.push(format!("m0: must be positive, got {m0}"));
            }
        }
        match &self.metric {
            MetricKind::Constant { matrix } => {
                let m = nalgebra::Matrix3::from_fn(|i, j| matrix[i][j]);
                if (m - m.transpose()).amax() > 0.0 || m.cholesky().is_none() {
                    errs.push("metric.matrix: must be symmetric positive definite".into());
                }
            }
            MetricKind::Ripple { epsilon } if !(epsilon.abs() < 0.5) => {
                errs.push(format!("metric.epsilon: |epsilon| must be below 0.5, got {epsilon}"));
            }
            _ => {}
        }
        if let Err(e) = self.surface.validate() {
            errs.push(format!("surface: {e}"));
        }
        if let Err(e) = self.disk_grid() {
            errs.push(e);
        }
        if let Err(e) = self.flow.validate() {
            errs.push(format!("flow: {e}"));
        }
        if self.flow.cdot.max_iter == 0 || self.flow.bvp.max_iter == 0 {
            errs.push("flow: iteration limits must be positive".into());
        }
        if self.output.dir.as_os_str().is_empty() {
            errs.push("output.dir: must not be empty".into());
        }
        if self.output.snapshot_every == 0 {
            errs.push("output.snapshot_every: must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
