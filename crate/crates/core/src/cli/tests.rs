use super::*;
use crate::ambient::MetricKind;
use crate::flow::{BoundarySpec, GammaRate, TangentField};

const MINIMAL: &str = r#"
[metric]
kind = "flat"

[surface]
kind = "sphere_cap"
radius = 1.0
rho = 0.4

[grid]
n_r = 12
n_theta = 24
"#;

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.version, CONFIG_VERSION);
    assert_eq!(cfg.metric, MetricKind::Flat);
    assert_eq!(cfg.flow, crate::flow::FlowConfig::default());
    assert_eq!(cfg.output, OutputConfig::default());
    assert_eq!(cfg.ambient().m0, 10.0);
}

#[test]
fn unknown_metric_kind_names_the_valid_set() {
    let text = MINIMAL.replace("\"flat\"", "\"hyperbolic\"");
    let err = parse_config(&text).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, ConfigError::Parse { line: 2..=3, .. }), "{err:?}");
    assert!(msg.contains("hyperbolic") && msg.contains("conformal_linear"), "{msg}");
}

#[test]
fn unknown_key_and_bad_type_carry_position() {
    let err = parse_config(&format!("{MINIMAL}\n[flow]\nt0 = 0.05\nsteps = 3\n")).unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 16, column: 1, .. }), "{err:?}");
    assert!(err.to_string().contains("steps"));
    let err = parse_config(&MINIMAL.replace("n_r = 12", "n_r = \"twelve\"")).unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 11, .. }), "{err:?}");
}

#[test]
fn missing_section_is_reported() {
    let text = MINIMAL.replace("[grid]\nn_r = 12\nn_theta = 24\n", "");
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
}

#[test]
fn semantic_errors_are_collected() {
    let mut cfg = parse_config(MINIMAL).unwrap();
    cfg.grid.n_theta = 26;
    cfg.flow.t0 = 0.0;
    cfg.flow.bvp.tol = -1.0;
    let errs = cfg.validate().unwrap_err();
    assert_eq!(errs.len(), 2, "{errs:?}");
    assert!(errs[0].contains("divisible by 4"));
    assert!(errs[1].contains("t0"));
}

#[test]
fn config_round_trips() {
    let mut cfg = parse_config(MINIMAL).unwrap();
    cfg.m0 = Some(12.5);
    cfg.metric = MetricKind::ConformalRadial { beta: 0.1 + 0.2, center: [1e-17, -3.0, 0.0] };
    cfg.flow.dt = Some(0.005);
    cfg.flow.boundary =
        BoundarySpec { tangent: TangentField::Constant { l: [0.6, 0.8] }, gamma: GammaRate::Zero, epsilon: 1e-3 };
    cfg.flow.parameters = crate::flow::ParameterChoice::Fixed { values: vec![0.1, -2.5e-9] };
    let text = cfg.emit();
    let back = parse_config(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.emit(), text);
    // a config that spells out its defaults normalizes to the same text
    assert_eq!(parse_config(&parse_config(MINIMAL).unwrap().emit()).unwrap(), parse_config(MINIMAL).unwrap());
}

#[test]
fn zero_data_run_is_identity_flow() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    let mut cfg = parse_config(MINIMAL).unwrap();
    cfg.flow.t0 = 0.01;
    cfg.flow.dt = Some(0.005);
    cfg.flow.boundary.tangent = TangentField::Winding { index: -2 };
    cfg.flow.boundary.gamma = GammaRate::Zero;
    let s = run(&cfg, &out).unwrap();
    assert!(s.identity_flow);
    assert_eq!(s.flow.steps, 2);
    assert_eq!(s.flow.family_dimension, Some(0));
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    let rec: StepRecord = serde_json::from_str(trace.lines().last().unwrap()).unwrap();
    assert_eq!(rec.step, 2);
    let snap = fs::read_to_string(snapshot_path(&out, 2)).unwrap();
    let mut lines = snap.lines();
    assert!(lines.next().unwrap().starts_with("# mgdeform-snapshot/1"));
    assert_eq!(lines.next().unwrap(), "node,r,theta,a1,a2,c,dK,r1,r2");
    assert_eq!(lines.count(), 1 + 12 * 24);
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.config, cfg);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let cfg = parse_config(MINIMAL).unwrap();
    let err = run(&cfg, &file.join("out")).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 1);
    assert!(err.report().contains("\"error\":\"io\""));
}

#[test]
fn inadmissible_surface_is_rejected_before_the_flow() {
    let mut cfg = parse_config(MINIMAL).unwrap();
    cfg.surface = crate::surface::SurfaceSpec::QuadraticGraph { scale: 0.5, hessian: [[1.0, 0.0], [0.0, 2.0]] };
    assert!(!validate(&cfg).unwrap().passed());
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run(&cfg, dir.path()), Err(CliError::Hypotheses(_))));
}

#[test]
fn empty_problem_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    fs::write(&p, "  \n").unwrap();
    let err = bvp(&p, &dir.path().join("s.json")).unwrap_err();
    assert!(matches!(err, CliError::Vekua(VekuaError::Format(_))), "{err:?}");
}
