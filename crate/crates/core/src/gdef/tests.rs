use super::*;
use crate::surface::{build_surface, SurfaceSpec};

fn setup(metric: &AmbientMetric, nr: usize) -> (SurfaceState, PolarDiff) {
    let grid = DiskGrid::new(nr, 2 * nr).unwrap();
    let s = build_surface(&SurfaceSpec::unit_cap(0.4), metric, grid).unwrap();
    (s, PolarDiff::new(grid))
}

fn smooth_fields(grid: DiskGrid, amp: f64) -> ([RealField; 2], RealField) {
    let a1 = Field::from_fn(grid, |[x, y]| amp * (0.3 + x * y - 0.2 * y * y));
    let a2 = Field::from_fn(grid, |[x, y]| amp * (-0.1 + 0.5 * x + 0.4 * x * x * y));
    let c = Field::from_fn(grid, |[x, y]| amp * (0.2 * x - 0.3 * y * y + 0.1 * x * x * x));
    ([a1, a2], c)
}

#[test]
fn flat_metric_coefficients_vanish() {
    let m = AmbientMetric::flat();
    let (s, _) = setup(&m, 12);
    let (a, c) = smooth_fields(s.grid, 1e-2);
    let d = DeformationState::prescribed(&s, a, c, 0.05, 5).unwrap();
    let co = assemble_coefficients(&m, &s, &d, 4).unwrap();
    for n in &co.nodes {
        assert_eq!(n.s1, Matrix3::zeros());
        assert_eq!(n.s2, Matrix3::zeros());
        assert!(n.s5.iter().chain(&n.s4).chain(&n.s3).all(|v| *v == Vector3::zeros()));
        assert_eq!(n.n, [0.0; 3]);
        assert_eq!(n.q, [0.0; 2]);
    }
}

#[test]
fn undeformed_state_has_zero_coefficients() {
    let m = AmbientMetric::conformal_linear([0.3, -0.2, 0.1]);
    let (s, diff) = setup(&m, 10);
    let d = DeformationState::initial(s.grid);
    let co = assemble_coefficients(&m, &s, &d, 4).unwrap();
    assert_eq!(co.norms(), CoefficientNorms::default());
    let r = gdef_residual(&s, &co, &d, &d.partials(&diff));
    assert!(r[0].sup_norm() == 0.0 && r[1].sup_norm() == 0.0);
    let rn = gdef_normal_residual(&m, &s, &d, &diff, 4).unwrap();
    assert!(rn[0].sup_norm() < 1e-15 && rn[1].sup_norm() < 1e-15);
}

#[test]
fn flat_residual_reduces_to_two_term_relation() {
    let m = AmbientMetric::flat();
    let (s, diff) = setup(&m, 24);
    // c = polynomial, aⁱ = -∂ᵢc / V
    let c = Field::from_fn(s.grid, |[x, y]| 1e-3 * (x * x - 0.5 * x * y + 0.3 * y));
    let dc = diff.gradient(&c);
    let a = [0, 1].map(|i| Field::from_nodes(s.grid, |n| -dc[i][n] / s.points[n].v));
    let d = DeformationState::prescribed(&s, a, c, 0.05, 4).unwrap();
    let co = assemble_coefficients(&m, &s, &d, 4).unwrap();
    let r = gdef_residual(&s, &co, &d, &d.partials(&diff));
    assert!(r[0].sup_norm() < 1e-17 && r[1].sup_norm() < 1e-17);
    let rn = gdef_normal_residual(&m, &s, &d, &diff, 4).unwrap();
    assert!(rn[0].sup_norm() < 1e-8 && rn[1].sup_norm() < 1e-8, "{}", rn[0].sup_norm());
}

#[test]
fn two_formulations_agree_in_curved_space() {
    let m = AmbientMetric::conformal_linear([0.3, -0.2, 0.4]);
    let (s, diff) = setup(&m, 24);
    let (a, c) = smooth_fields(s.grid, 1e-2);
    let d = DeformationState::prescribed(&s, a, c, 0.05, 8).unwrap();
    let co = assemble_coefficients(&m, &s, &d, 8).unwrap();
    assert!(co.norms().n > 1e-6);
    let r = gdef_residual(&s, &co, &d, &d.partials(&diff));
    let rn = gdef_normal_residual(&m, &s, &d, &diff, 8).unwrap();
    for i in 0..2 {
        let scale = r[i].sup_norm();
        assert!(r[i].sup_diff(&rn[i]) < 1e-5 * scale.max(1e-3), "{} vs {}", r[i].sup_diff(&rn[i]), scale);
    }
}

#[test]
fn coefficients_shrink_linearly_with_time() {
    let m = AmbientMetric::conformal_linear([0.3, -0.2, 0.4]);
    let (s, _) = setup(&m, 10);
    let norms = |scale: f64| {
        let (a, c) = smooth_fields(s.grid, 1e-2 * scale);
        let d = DeformationState::prescribed(&s, a, c, 0.05 * scale, 4).unwrap();
        assemble_coefficients(&m, &s, &d, 4).unwrap().norms()
    };
    let (full, half) = (norms(1.0), norms(0.5));
    for (f, h) in [(full.s1, half.s1), (full.n, half.n)] {
        let ratio = f / h;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }
    // S₂ is the quadratic tail; in Q the first-order parts of S₁ and Γz cancel
    assert!((full.s2 / half.s2 - 4.0).abs() < 0.4);
    assert!((full.q / half.q - 4.0).abs() < 0.4);
}

#[test]
fn n_is_bounded_by_s1() {
    let m = AmbientMetric::conformal_radial(0.3, [0.1, 0.0, -0.5]);
    let (s, _) = setup(&m, 10);
    let (a, c) = smooth_fields(s.grid, 2e-2);
    let d = DeformationState::prescribed(&s, a, c, 0.05, 4).unwrap();
    let co = assemble_coefficients(&m, &s, &d, 4).unwrap();
    for (p, n) in s.points.iter().zip(&co.nodes) {
        let bound = n.s1.norm() * p.metric.norm() * p.n.norm() * p.dy[0].norm().max(p.dy[1].norm()).max(p.n.norm());
        assert!(n.n.iter().all(|v| v.abs() <= bound * (1.0 + 1e-12)));
    }
}

#[test]
fn series_matches_ode_transport() {
    let m = AmbientMetric::conformal_linear([0.3, -0.2, 0.4]);
    let (s, _) = setup(&m, 8);
    let (a, c) = smooth_fields(s.grid, 5e-2);
    let d = DeformationState::prescribed(&s, a, c, 0.05, 8).unwrap();
    let defect = series_defect(&m, &s, &d, 4, 8).unwrap();
    assert!(defect < 1e-9, "{defect}");
}

#[test]
fn euler_step_keeps_history_consistent() {
    let m = AmbientMetric::flat();
    let (s, _) = setup(&m, 8);
    let (a, c) = smooth_fields(s.grid, 1.0);
    let d0 = DeformationState::initial(s.grid);
    let d1 = d0.advanced(&s, 0.01, &a, &c).unwrap();
    let d2 = d1.advanced(&s, 0.01, &a, &c).unwrap();
    assert!(d2.consistency(&s) < 1e-15);
    assert_eq!(d2.histories[5].segments(), 2);
    assert!((d2.a[0][7] - 0.02 * a[0][7]).abs() < 1e-16);
    assert!(d0.advanced(&s, 0.0, &a, &c).is_err());
}
