use super::*;
use crate::gdef::assemble_coefficients;
use crate::grid::DiskGrid;
use crate::surface::{build_surface, rebuild_geometry, SurfaceSpec};

struct Case {
    metric: AmbientMetric,
    surface: SurfaceState,
    diff: PolarDiff,
    eq: EquationCoefficients,
}

impl Case {
    fn new(metric: AmbientMetric, nr: usize, rho: f64) -> Self {
        let grid = DiskGrid::new(nr, 2 * nr).unwrap();
        let surface = build_surface(&SurfaceSpec::unit_cap(rho), &metric, grid).unwrap();
        let diff = PolarDiff::new(grid);
        let eq = coefficients(&surface, &diff).unwrap();
        Self { metric, surface, diff, eq }
    }

    fn grid(&self) -> DiskGrid {
        self.surface.grid
    }

    fn var(&self, d: &DeformationState) -> VariationState {
        let co = assemble_coefficients(&self.metric, &self.surface, d, 8).unwrap();
        variation(&self.metric, &self.surface, d, &co, &d.partials(&self.diff), &self.diff, &self.eq).unwrap()
    }

    fn prescribed(&self, a: [RealField; 2], c: RealField, t: f64) -> DeformationState {
        DeformationState::prescribed(&self.surface, a, c, t, 8).unwrap()
    }

    /// Flat-space G-deformation: aⁱ = -∂ᵢc / V.
    fn g_deformation(&self, c: RealField) -> ([RealField; 2], RealField) {
        let dc = self.diff.gradient(&c);
        let a = [0, 1].map(|i| Field::from_nodes(self.grid(), |n| -dc[i][n] / self.surface.points[n].v));
        (a, c)
    }
}

fn smooth(grid: DiskGrid, amp: f64) -> ([RealField; 2], RealField) {
    let a1 = Field::from_fn(grid, |[x, y]| amp * (0.3 + x * y - 0.2 * y * y));
    let a2 = Field::from_fn(grid, |[x, y]| amp * (-0.1 + 0.5 * x + 0.4 * x * x * y));
    let c = Field::from_fn(grid, |[x, y]| amp * (0.2 * x - 0.3 * y * y + 0.1 * x * x * x));
    ([a1, a2], c)
}

/// g(t)/b(t) - g/b from the rebuilt displaced surface.
fn oracle(case: &Case, d: &DeformationState) -> RealField {
    let r = rebuild_geometry(&case.surface, &case.metric, &d.z).unwrap();
    Field::from_nodes(case.grid(), |i| {
        let p = &case.surface.points[i];
        r.g_det[i] / r.b_det[i] - p.g_det / p.b_det
    })
}

#[test]
fn undeformed_state_has_no_variation() {
    let case = Case::new(AmbientMetric::conformal_linear([0.2, -0.1, 0.3]), 10, 0.4);
    let v = case.var(&DeformationState::initial(case.grid()));
    let n = v.norms();
    // -ã(y,ᵢ, ∇*ⱼn) reproduces b only to rounding
    assert_eq!((n.dg, n.w1, n.w2), (0.0, 0.0, 0.0));
    assert!(n.db < 1e-14 && n.dk < 1e-14 && n.m4 < 1e-14, "{n:?}");
    assert_eq!(v.psi1.sup_norm(), 0.0);
    assert!(v.nodes.iter().all(|n| n.dk_bracket.abs() < 1e-14 && n.remainder.abs() < 1e-14));
}

#[test]
fn metric_variation_matches_direct_forms() {
    let case = Case::new(AmbientMetric::conformal_linear([0.3, -0.2, 0.4]), 12, 0.4);
    let (a, c) = smooth(case.grid(), 2e-2);
    let v = case.var(&case.prescribed(a, c, 0.05));
    for (n, p) in v.nodes.iter().zip(&case.surface.points) {
        assert!((n.dg - (n.g_t - p.g)).amax() < 1e-13);
        let direct = n.g_t.determinant() - p.g_det;
        assert!((n.dg_det - direct).abs() < 1e-13, "{} {}", n.dg_det, direct);
        assert!((n.w2 - n.dg.determinant()).abs() == 0.0);
    }
}

#[test]
fn second_form_cascade_matches_direct_form() {
    let case = Case::new(AmbientMetric::conformal_radial(0.3, [0.1, 0.0, -0.5]), 12, 0.4);
    let (a, c) = smooth(case.grid(), 2e-2);
    let v = case.var(&case.prescribed(a, c, 0.05));
    assert!(v.norms().m4 > 1e-4);
    for (n, p) in v.nodes.iter().zip(&case.surface.points) {
        assert!((n.db - (n.b_t - p.b)).amax() < 1e-13, "{}", (n.db - (n.b_t - p.b)).amax());
    }
}

#[test]
fn both_forms_of_curvature_variation_agree() {
    let case = Case::new(AmbientMetric::conformal_linear([0.3, -0.2, 0.4]), 16, 0.4);
    let (a, c) = smooth(case.grid(), 1e-2);
    let d = case.prescribed(a, c, 0.05);
    let v = case.var(&d);
    let scale = v.norms().dk;
    for (i, (n, p)) in v.nodes.iter().zip(&case.surface.points).enumerate() {
        // the bracket carries the grid derivative of ln √g where the determinant form has Γʲ_jk
        let shift: f64 = (0..2)
            .map(|k| {
                let trace: f64 = (0..2).map(|j| p.chr[j][j][k]).sum();
                2.0 * (trace - case.eq.q[k][i]) * d.a[k][i]
            })
            .sum();
        let bracket = n.dk_bracket + p.g_det / n.b_det_t * shift;
        assert!((n.dk - bracket).abs() < 1e-11 * scale, "{} {}", n.dk, bracket);
    }
}

#[test]
fn translation_preserves_curvature() {
    let case = Case::new(AmbientMetric::flat(), 24, 0.4);
    let w = Vector3::new(1e-3, -2e-3, 5e-4);
    let g = case.grid();
    let a = [0, 1].map(|k| {
        Field::from_nodes(g, |i| {
            let p = &case.surface.points[i];
            (0..2).map(|j| p.g_inv[(k, j)] * inner(&p.metric, &w, &p.dy[j])).sum()
        })
    });
    let c = Field::from_nodes(g, |i| inner(&case.surface.points[i].metric, &w, &case.surface.points[i].n));
    let v = case.var(&case.prescribed(a, c, 0.05));
    assert!(v.dk_field().sup_norm() < 1e-8, "{}", v.dk_field().sup_norm());
}

#[test]
fn flat_g_deformation_matches_rebuild() {
    let case = Case::new(AmbientMetric::flat(), 48, 0.4);
    let c = Field::from_fn(case.grid(), |[x, y]| 2e-4 * (x * x - 0.5 * x * y + 0.3 * y + 0.2 * y * y * y));
    let (a, c) = case.g_deformation(c);
    let d = case.prescribed(a, c, 0.05);
    let zmax = d.z.iter().fold(0.0f64, |m, z| m.max(z.amax()));
    assert!(zmax <= 1e-3);
    let v = case.var(&d);
    let err = v.dk_field().sup_diff(&oracle(&case, &d));
    assert!(v.dk_field().sup_norm() > 1e-5);
    assert!(err < 1e-8_f64.max(1e-2 * zmax * zmax), "{err}");
}

#[test]
fn coefficients_on_unit_sphere() {
    let case = Case::new(AmbientMetric::flat(), 16, 0.4);
    for (i, p) in case.surface.points.iter().enumerate() {
        assert!((case.eq.qb0[i] - 4.0).abs() < 1e-12);
        // g = V² here, and qₖ = Γʲ_jk
        for k in 0..2 {
            let trace: f64 = (0..2).map(|j| p.chr[j][j][k]).sum();
            assert!((case.eq.q[k][i] - trace).abs() < 1e-5, "{} {}", case.eq.q[k][i], trace);
        }
        assert!((case.eq.p[0][i] - case.eq.q[1][i]).abs() < 1e-12);
        assert!((case.eq.p[1][i] + case.eq.q[0][i]).abs() < 1e-12);
    }
    let (a, b) = case.eq.vekua_ab();
    assert!(a.sup_norm() > 0.0 && b.sup_norm() > 0.0);
}

#[test]
fn coefficients_do_not_depend_on_time() {
    let case = Case::new(AmbientMetric::conformal_linear([0.1, 0.1, 0.1]), 10, 0.4);
    assert_eq!(coefficients(&case.surface, &case.diff).unwrap(), case.eq);
}

#[test]
fn metric_rates_agree_with_differences() {
    let case = Case::new(AmbientMetric::conformal_linear([0.3, -0.2, 0.4]), 12, 0.4);
    let (a, c) = smooth(case.grid(), 2e-2);
    let d = case.prescribed(a, c, 0.05);
    let (ad, cd) = smooth(case.grid(), 0.3);
    let partials = d.partials(&case.diff);
    let analytic = w1_rate(&case.metric, &case.surface, &d, &partials, &ad, &cd, &case.diff).unwrap();
    let dg_analytic = delta_g_rate(&case.metric, &case.surface, &d, &partials, &ad, &cd, &case.diff).unwrap();
    let v0 = case.var(&d);
    let mut errors = Vec::new();
    for dt in [1e-3, 5e-4] {
        let v1 = case.var(&d.advanced(&case.surface, dt, &ad, &cd).unwrap());
        let r = v0.rates(&v1, dt);
        let dg_err = (0..r.dg.len()).map(|i| (r.dg[i] - dg_analytic[i]).amax()).fold(0.0, f64::max);
        errors.push((r.w1.sup_diff(&analytic), dg_err));
    }
    // first order in Δt
    for k in 0..2 {
        let (e1, e2) = if k == 0 { (errors[0].0, errors[1].0) } else { (errors[0].1, errors[1].1) };
        assert!(e1 < 1e-3 * analytic.sup_norm().max(1.0), "{e1}");
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{}", e1 / e2);
    }
}

#[test]
fn rates_vanish_at_rest_in_flat_space() {
    let case = Case::new(AmbientMetric::flat(), 10, 0.4);
    let d = DeformationState::initial(case.grid());
    let v = case.var(&d);
    let zero = Field::filled(case.grid(), 0.0);
    let r = rhs_psi(&case.eq, &v, &v, &zero, &zero, 0.01);
    assert_eq!(r.psi().sup_norm() + r.p0.sup_norm(), 0.0);
}

#[test]
fn collapsed_curvature_is_rejected() {
    let case = Case::new(AmbientMetric::flat(), 10, 0.4);
    // unit normal displacement towards the center collapses the cap to a point
    let zero = Field::filled(case.grid(), 0.0);
    let d = case.prescribed([zero.clone(), zero], Field::filled(case.grid(), 1.0), 1.0);
    let co = assemble_coefficients(&case.metric, &case.surface, &d, 4).unwrap();
    let out = variation(&case.metric, &case.surface, &d, &co, &d.partials(&case.diff), &case.diff, &case.eq);
    assert!(matches!(out, Err(KpresError::DegenerateCurvature { .. })), "{out:?}");
}
