//! Interpreter-free layer behind the Python functions.

use std::path::Path;

use num_complex::Complex64;

use mgdeform_core::cli::{self, parse_config, RunConfig};
use mgdeform_core::flow::Flow;
use mgdeform_core::grid::{DiskGrid, Field};
use mgdeform_core::surface::build_surface;
use mgdeform_core::vekua::{bvp_solve, PompeiuOperator, ProblemFile, SolutionFile};

fn config(text: &str) -> Result<RunConfig, String> {
    parse_config(text).map_err(|e| e.to_string())
}

pub fn canonical_config(text: &str) -> Result<String, String> {
    config(text).map(|c| c.emit())
}

pub fn validate_json(text: &str) -> Result<String, String> {
    let report = cli::validate(&config(text)?).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&report).expect("report is serializable"))
}

pub fn run_json(text: &str, out: &str) -> Result<String, String> {
    let s = cli::run(&config(text)?, Path::new(out)).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&s).expect("summary is serializable"))
}

pub fn solve_bvp_json(problem: &str) -> Result<String, String> {
    let file = ProblemFile::parse(problem).map_err(|e| e.to_string())?;
    let p = file.problem().map_err(|e| e.to_string())?;
    let fam = bvp_solve(&p, None, &file.policy, &file.options).map_err(|e| e.to_string())?;
    let sol = SolutionFile::new(&fam, file.exact.as_deref());
    Ok(serde_json::to_string(&sol).expect("solution is serializable"))
}

pub fn pompeiu(n_r: usize, n_theta: usize, values: Vec<Complex64>) -> Result<Vec<Complex64>, String> {
    let g = DiskGrid::new(n_r, n_theta).map_err(|e| e.to_string())?;
    let f = Field::from_vec(g, values).map_err(|e| e.to_string())?;
    Ok(PompeiuOperator::new(g).apply(&f).into_vec())
}

pub fn grid_points(n_r: usize, n_theta: usize) -> Result<Vec<[f64; 2]>, String> {
    Ok(DiskGrid::new(n_r, n_theta).map_err(|e| e.to_string())?.points())
}

pub fn flow(text: &str) -> Result<Flow, String> {
    let cfg = config(text)?;
    let grid = cfg.disk_grid()?;
    let metric = cfg.ambient();
    let surface = build_surface(&cfg.surface, &metric, grid).map_err(|e| e.to_string())?;
    Flow::new(metric, surface, cfg.flow).map_err(|e| e.to_string())
}
