use std::fs;
use std::path::Path;
use std::process::Command;

use num_complex::Complex64;

use mgdeform_core::grid::{DiskGrid, Field};
use mgdeform_core::vekua::{monomial_symbol, BoundaryProblem, ProblemFile, SolutionFile};

fn mgdeform(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mgdeform")).args(args).output().expect("binary runs")
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

#[test]
fn run_writes_trace_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mgdeform(&[
        "run",
        "--config",
        &repo_config("zero_data_negative_index.toml"),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
        "--log-level",
        "warn",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["identity_flow"], true);
    assert_eq!(summary["flow"]["steps"], 4);
    assert_eq!(summary["config"]["metric"]["kind"], "conformal_linear");
    assert_eq!(fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count(), 4);
    assert_eq!(fs::read_dir(out.join("snapshots")).unwrap().count(), 4);
}

#[test]
fn validate_reports_hypotheses() {
    let o = mgdeform(&["validate", "--config", &repo_config("flat_cap_n1.toml")]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["positivity_ok"], true);
    assert_eq!(report["coordinate_ok"], true);
}

#[test]
fn config_errors_exit_with_a_structured_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[metric]\nkind = \"hyperbolic\"\n").unwrap();
    let o = mgdeform(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("line 2"));
    let o = mgdeform(&["run"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_problem(dir: &Path, file: &ProblemFile) -> String {
    let p = dir.join("problem.json");
    fs::write(&p, file.to_json()).unwrap();
    p.display().to_string()
}

#[test]
fn bvp_reports_the_family_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let g = DiskGrid::new(16, 32).unwrap();
    let phi: Vec<f64> = (0..g.n_theta).map(|j| (2.0 * g.angle(j)).cos()).collect();
    let file = ProblemFile::from_problem(&BoundaryProblem::holomorphic(g, monomial_symbol(1, g.n_theta), phi));
    let problem = write_problem(dir.path(), &file);
    let o = mgdeform(&["bvp", &problem, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: SolutionFile =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol.index, 1);
    assert_eq!(sol.dimension, 3);
    assert_eq!(sol.basis.len(), 3);
    assert!(sol.boundary_residual < 1e-12);
}

#[test]
fn bvp_reports_recovery_error_for_manufactured_files() {
    let dir = tempfile::tempdir().unwrap();
    let g = DiskGrid::new(16, 32).unwrap();
    // w = 1 + z solves the holomorphic problem with λ = 1, φ = Re w
    let exact = Field::from_fn(g, |p| Complex64::new(1.0 + p[0], p[1]));
    let phi: Vec<f64> = exact.boundary().iter().map(|w| w.re).collect();
    let mut file = ProblemFile::from_problem(&BoundaryProblem::holomorphic(g, monomial_symbol(0, g.n_theta), phi));
    file.policy = mgdeform_core::vekua::ParameterPolicy::Fixed(vec![0.0]);
    file.exact = Some(exact.values().to_vec());
    let problem = write_problem(dir.path(), &file);
    let o = mgdeform(&["bvp", &problem, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: SolutionFile =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert!(sol.recovery_error.unwrap() < 1e-12, "{:?}", sol.recovery_error);
    assert!(String::from_utf8_lossy(&o.stdout).contains("recovery error"));
}

#[test]
fn empty_problem_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.json");
    fs::write(&p, "").unwrap();
    let o = mgdeform(&["bvp", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "bvp");
}
