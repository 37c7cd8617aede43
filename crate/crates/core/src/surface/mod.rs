//! Surface immersion over the unit disk: fundamental forms, curvatures and the
//! conjugate isothermal coordinate check.

mod immersion;
mod rebuild;

pub use immersion::{Immersion, Jet, SurfaceSpec};
pub use rebuild::{rebuild_geometry, RebuiltGeometry};

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{christoffel_at, inner, AmbientError, AmbientMetric, Christoffel};
use crate::grid::{DiskGrid, Field, PolarDiff, RealField};

/// Relative tolerance of |b₁₁ - b₂₂| and |b₁₂| against V.
pub const COORDINATE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("geometry violation at node {node}: {reason}")]
    Geometry { node: usize, reason: String },
    #[error("coordinates are not conjugate isothermal at node {node}: residual {residual:e}")]
    Coordinate { node: usize, residual: f64 },
    #[error(transparent)]
    Ambient(#[from] AmbientError),
}

/// Geometry at one grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub x: [f64; 2],
    pub y: Vector3<f64>,
    /// y,ᵢ.
    pub dy: [Vector3<f64>; 2],
    /// ∂ᵢ∂ⱼ y.
    pub ddy: [[Vector3<f64>; 2]; 2],
    /// Unit normal: ã(n, y,ᵢ) = 0, ã(n, n) = 1.
    pub n: Vector3<f64>,
    /// ∂ⱼ n.
    pub dn: [Vector3<f64>; 2],
    /// Ambient metric and its Christoffel symbols at y.
    pub metric: Matrix3<f64>,
    pub ambient: Christoffel,
    pub g: Matrix2<f64>,
    pub g_inv: Matrix2<f64>,
    pub b: Matrix2<f64>,
    /// det g, det b.
    pub g_det: f64,
    pub b_det: f64,
    /// b₁₁.
    pub v: f64,
    /// b/g.
    pub k: f64,
    /// ½ g^{ij} b_ij.
    pub h: f64,
    /// Christoffel symbols of g: `chr[k][i][j]` = Γ^k_ij.
    pub chr: [[[f64; 2]; 2]; 2],
}

impl SurfacePoint {
    /// Surface covariant derivative y,ⱼ,ᵢ = ∂ᵢ y,ⱼ - Γ^k_ij y,ₖ.
    pub fn cov_dy(&self, j: usize, i: usize) -> Vector3<f64> {
        self.ddy[j][i] - self.dy[0] * self.chr[0][i][j] - self.dy[1] * self.chr[1][i][j]
    }

    /// ∇*ⱼ u = ∂ⱼ u + Γ̃(y,ⱼ, u) for a vector field with derivative `du`.
    pub fn nabla(&self, j: usize, u: &Vector3<f64>, du: &Vector3<f64>) -> Vector3<f64> {
        du + self.ambient.contract(&self.dy[j], u)
    }

    /// Conjugate isothermal residual max(|b₁₁ - b₂₂|, |b₁₂|, |b₂₁|)/|V|.
    pub fn coordinate_residual(&self) -> f64 {
        let b = &self.b;
        (b[(0, 0)] - b[(1, 1)]).abs().max(b[(0, 1)].abs()).max(b[(1, 0)].abs()) / self.v.abs().max(1e-300)
    }
}

/// Immutable surface geometry on a [`DiskGrid`].
#[derive(Debug, Clone)]
pub struct SurfaceState {
    pub grid: DiskGrid,
    pub points: Vec<SurfacePoint>,
}

impl SurfaceState {
    pub fn scalar(&self, f: impl Fn(&SurfacePoint) -> f64) -> RealField {
        Field::from_nodes(self.grid, |i| f(&self.points[i]))
    }

    pub fn v_field(&self) -> RealField {
        self.scalar(|p| p.v)
    }

    pub fn boundary_points(&self) -> &[SurfacePoint] {
        &self.points[self.grid.boundary()]
    }
}

fn point_geometry(metric: &AmbientMetric, x: [f64; 2], jet: Jet) -> Result<SurfacePoint, AmbientError> {
    let a = metric.check_positive(&jet.y)?;
    let ambient = christoffel_at(metric, &jet.y)?;
    let a_inv = a
        .try_inverse()
        .ok_or(AmbientError::DegenerateMetric { point: [jet.y[0], jet.y[1], jet.y[2]], det: a.determinant() })?;
    let cross = jet.dy[0].cross(&jet.dy[1]);
    let raw = a_inv * cross;
    let len = inner(&a, &raw, &raw).sqrt();
    let n = if len > 0.0 { raw / len } else { raw };
    let g = Matrix2::from_fn(|i, j| inner(&a, &jet.dy[i], &jet.dy[j]));
    // ∇*ⱼ y,ᵢ = ∂ⱼ y,ᵢ + Γ̃(y,ⱼ, y,ᵢ)
    let nab = |i: usize, j: usize| jet.ddy[i][j] + ambient.contract(&jet.dy[j], &jet.dy[i]);
    let b = Matrix2::from_fn(|i, j| inner(&a, &n, &nab(i, j)));
    let g_det = g.determinant();
    let g_inv = g.try_inverse().unwrap_or_else(Matrix2::zeros);
    let mut chr = [[[0.0; 2]; 2]; 2];
    for (k, ck) in chr.iter_mut().enumerate() {
        for (i, cki) in ck.iter_mut().enumerate() {
            for (j, c) in cki.iter_mut().enumerate() {
                *c = (0..2).map(|l| g_inv[(k, l)] * inner(&a, &nab(i, j), &jet.dy[l])).sum();
            }
        }
    }
    let mut p = SurfacePoint {
        x,
        y: jet.y,
        dy: jet.dy,
        ddy: jet.ddy,
        n,
        dn: [Vector3::zeros(); 2],
        metric: a,
        ambient,
        g,
        g_inv,
        b,
        g_det,
        b_det: b.determinant(),
        v: b[(0, 0)],
        k: 0.0,
        h: 0.0,
        chr,
    };
    p.finish();
    Ok(p)
}

impl SurfacePoint {
    fn finish(&mut self) {
        self.b_det = self.b.determinant();
        self.v = self.b[(0, 0)];
        self.k = self.b_det / self.g_det;
        self.h = 0.5 * (self.g_inv.component_mul(&self.b)).sum();
        // Weingarten: ∇*ⱼ n = -b_jk g^{kl} y,ₗ
        let wb = self.b * self.g_inv;
        for j in 0..2 {
            let tang = self.dy[0] * wb[(j, 0)] + self.dy[1] * wb[(j, 1)];
            self.dn[j] = -tang - self.ambient.contract(&self.dy[j], &self.n);
        }
    }

    fn flip(&mut self) {
        self.n = -self.n;
        self.b = -self.b;
        self.finish();
    }
}

/// Geometry without hypothesis checks (used for reporting on inadmissible input).
pub fn build_surface_unchecked(
    immersion: &dyn Immersion,
    metric: &AmbientMetric,
    grid: DiskGrid,
) -> Result<SurfaceState, SurfaceError> {
    let mut points = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            point_geometry(metric, x, immersion.jet(x))
        })
        .collect::<Result<Vec<_>, _>>()?;
    // one orientation for the whole surface, fixed by the sign of H at the center
    if points[0].h < 0.0 {
        points.par_iter_mut().for_each(SurfacePoint::flip);
    }
    Ok(SurfaceState { grid, points })
}

/// Builds the surface and enforces positive definite g and b, H > 0 and the
/// conjugate isothermal form b₁₁ = b₂₂ = V, b₁₂ = 0.
pub fn build_surface(
    immersion: &dyn Immersion,
    metric: &AmbientMetric,
    grid: DiskGrid,
) -> Result<SurfaceState, SurfaceError> {
    let s = build_surface_unchecked(immersion, metric, grid)?;
    for (node, p) in s.points.iter().enumerate() {
        if !(p.g_det > 0.0 && p.g[(0, 0)] > 0.0) {
            return Err(SurfaceError::Geometry {
                node,
                reason: format!("g not positive definite (det {:e})", p.g_det),
            });
        }
        if !(p.b_det > 0.0 && p.b[(0, 0)] > 0.0) {
            return Err(SurfaceError::Geometry {
                node,
                reason: format!("b not positive definite (det {:e}, b11 {:e})", p.b_det, p.b[(0, 0)]),
            });
        }
        if !(p.h > 0.0) {
            return Err(SurfaceError::Geometry { node, reason: format!("mean curvature {:e} not positive", p.h) });
        }
        let residual = p.coordinate_residual();
        if residual > COORDINATE_TOL {
            return Err(SurfaceError::Coordinate { node, residual });
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldNorm {
    pub name: String,
    pub c0: f64,
    pub c1: f64,
}

/// Discrete diagnostics of the surface hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub min_eig_g: f64,
    pub min_eig_b: f64,
    pub min_h: f64,
    pub max_coordinate_residual: f64,
    /// max |ã(n, y,ᵢ)| and max |ã(n, n) - 1|.
    pub normal_residual: f64,
    pub positivity_ok: bool,
    pub coordinate_ok: bool,
    pub norms: Vec<FieldNorm>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.positivity_ok && self.coordinate_ok
    }
}

fn min_eig(m: &Matrix2<f64>) -> f64 {
    let s = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let (a, d) = (m[(0, 0)], m[(1, 1)]);
    0.5 * (a + d) - (0.25 * (a - d).powi(2) + s * s).sqrt()
}

pub fn validate_hypotheses(state: &SurfaceState) -> HypothesisReport {
    let pts = &state.points;
    let fold_min = |f: &dyn Fn(&SurfacePoint) -> f64| pts.iter().map(f).fold(f64::INFINITY, f64::min);
    let min_eig_g = fold_min(&|p| min_eig(&p.g));
    let min_eig_b = fold_min(&|p| min_eig(&p.b));
    let min_h = fold_min(&|p| p.h);
    let max_coordinate_residual = pts.iter().map(SurfacePoint::coordinate_residual).fold(0.0, f64::max);
    let normal_residual = pts
        .iter()
        .map(|p| {
            let t = inner(&p.metric, &p.n, &p.dy[0]).abs().max(inner(&p.metric, &p.n, &p.dy[1]).abs());
            t.max((inner(&p.metric, &p.n, &p.n) - 1.0).abs())
        })
        .fold(0.0, f64::max);
    let diff = PolarDiff::new(state.grid);
    type Named<'a> = (&'a str, Box<dyn Fn(&SurfacePoint) -> f64>);
    let named: Vec<Named> = vec![
        ("y1", Box::new(|p| p.y[0])),
        ("y2", Box::new(|p| p.y[1])),
        ("y3", Box::new(|p| p.y[2])),
        ("n1", Box::new(|p| p.n[0])),
        ("n2", Box::new(|p| p.n[1])),
        ("n3", Box::new(|p| p.n[2])),
        ("g11", Box::new(|p| p.g[(0, 0)])),
        ("g12", Box::new(|p| p.g[(0, 1)])),
        ("g22", Box::new(|p| p.g[(1, 1)])),
        ("b11", Box::new(|p| p.b[(0, 0)])),
        ("b12", Box::new(|p| p.b[(0, 1)])),
        ("b22", Box::new(|p| p.b[(1, 1)])),
        ("V", Box::new(|p| p.v)),
        ("K", Box::new(|p| p.k)),
        ("H", Box::new(|p| p.h)),
    ];
    let norms = named
        .iter()
        .map(|(name, f)| {
            let field = state.scalar(f);
            let [dx, dy] = diff.gradient(&field);
            let c0 = field.sup_norm();
            FieldNorm { name: name.to_string(), c0, c1: c0.max(dx.sup_norm()).max(dy.sup_norm()) }
        })
        .collect();
    HypothesisReport {
        min_eig_g,
        min_eig_b,
        min_h,
        max_coordinate_residual,
        normal_residual,
        positivity_ok: min_eig_g > 0.0 && min_eig_b > 0.0 && min_h > 0.0,
        coordinate_ok: max_coordinate_residual <= COORDINATE_TOL,
        norms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DiskGrid {
        DiskGrid::new(12, 24).unwrap()
    }

    #[test]
    fn unit_sphere_cap_in_flat_space() {
        let s = build_surface(&SurfaceSpec::unit_cap(0.5), &AmbientMetric::flat(), grid()).unwrap();
        for p in &s.points {
            assert!((p.k - 1.0).abs() < 1e-12 && (p.h - 1.0).abs() < 1e-12);
            assert!((p.g - p.b).amax() < 1e-12);
            assert!((p.v - p.g[(0, 0)]).abs() < 1e-12);
            assert!(p.g[(0, 1)].abs() < 1e-14);
            assert!((p.k * p.g_det - p.b_det).abs() <= 1e-15 * p.b_det.abs().max(1.0));
        }
    }

    #[test]
    fn normal_constraints_hold() {
        let m = AmbientMetric::conformal_linear([0.2, -0.1, 0.3]);
        let s = build_surface_unchecked(&SurfaceSpec::unit_cap(0.5), &m, grid()).unwrap();
        let r = validate_hypotheses(&s);
        assert!(r.normal_residual < 1e-10, "{}", r.normal_residual);
    }

    #[test]
    fn plane_is_rejected() {
        let plane = SurfaceSpec::Paraboloid { scale: 1.0, curvature: 0.0 };
        let e = build_surface(&plane, &AmbientMetric::flat(), grid()).unwrap_err();
        assert!(matches!(e, SurfaceError::Geometry { .. }));
        let s = build_surface_unchecked(&plane, &AmbientMetric::flat(), grid()).unwrap();
        assert!(!validate_hypotheses(&s).positivity_ok);
    }

    #[test]
    fn skew_graph_violates_coordinates() {
        let spec = SurfaceSpec::QuadraticGraph { scale: 0.5, hessian: [[1.0, 0.05], [0.05, 1.0]] };
        let e = build_surface(&spec, &AmbientMetric::flat(), grid()).unwrap_err();
        assert!(matches!(e, SurfaceError::Coordinate { .. }));
        let s = build_surface_unchecked(&spec, &AmbientMetric::flat(), grid()).unwrap();
        let r = validate_hypotheses(&s);
        assert!(r.positivity_ok && !r.coordinate_ok);
    }

    #[test]
    fn paraboloid_is_admissible() {
        let s = build_surface(&SurfaceSpec::Paraboloid { scale: 0.6, curvature: 1.2 }, &AmbientMetric::flat(), grid())
            .unwrap();
        let r = validate_hypotheses(&s);
        assert!(r.passed());
        for p in &s.points {
            assert!(p.h * p.h >= p.k - 1e-12);
        }
    }

    #[test]
    fn umbilic_cap_stays_conjugate_isothermal_in_conformal_metric() {
        let m = AmbientMetric::conformal_radial(0.3, [0.0, 0.0, 0.0]);
        let s = build_surface(&SurfaceSpec::unit_cap(0.4), &m, grid()).unwrap();
        assert!(validate_hypotheses(&s).max_coordinate_residual < 1e-12);
    }

    #[test]
    fn normal_derivative_matches_grid_derivative() {
        let g = DiskGrid::new(24, 48).unwrap();
        let m = AmbientMetric::conformal_linear([0.2, 0.1, -0.3]);
        let s = build_surface_unchecked(&SurfaceSpec::unit_cap(0.5), &m, g).unwrap();
        let diff = PolarDiff::new(g);
        for c in 0..3 {
            let f = s.scalar(|p| p.n[c]);
            let d = diff.gradient(&f);
            for j in 0..2 {
                let exact = s.scalar(|p| p.dn[j][c]);
                assert!(d[j].sup_diff(&exact) < 1e-5, "{}", d[j].sup_diff(&exact));
            }
        }
    }

    #[test]
    fn surface_christoffels_match_metric_derivatives() {
        let g = DiskGrid::new(24, 48).unwrap();
        let s =
            build_surface(&SurfaceSpec::Paraboloid { scale: 0.7, curvature: 1.0 }, &AmbientMetric::flat(), g).unwrap();
        let diff = PolarDiff::new(g);
        // Γ_{ij,l} = ½(∂ᵢ g_jl + ∂ⱼ g_il - ∂ₗ g_ij)
        let dg: Vec<Vec<[RealField; 2]>> =
            (0..2).map(|a| (0..2).map(|b| diff.gradient(&s.scalar(|p| p.g[(a, b)]))).collect()).collect();
        for node in [0, g.index(5, 3), g.index(20, 17)] {
            let p = &s.points[node];
            for i in 0..2 {
                for j in 0..2 {
                    for l in 0..2 {
                        let first = 0.5 * (dg[j][l][i][node] + dg[i][l][j][node] - dg[i][j][l][node]);
                        let ours: f64 = (0..2).map(|k| p.g[(l, k)] * p.chr[k][i][j]).sum();
                        assert!((first - ours).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
