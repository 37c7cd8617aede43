//! Variation of the fundamental forms and of g/b under a deformation, and the
//! coefficients and right-hand side of the curvature-preservation equation.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{inner, AmbientError, AmbientMetric};
use crate::gdef::{DeformationState, GDefCoefficients, Partials};
use crate::grid::{ComplexField, DiskGrid, Field, PolarDiff, RealField};
use crate::surface::SurfaceState;
use crate::vekua::assemble_ab;

/// b(t) below this fraction of b counts as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpresError {
    #[error("geometry not admissible at node {node}: {reason}")]
    Geometry { node: usize, reason: String },
    #[error("b(t) = {value:e} at node {node} is not positive")]
    DegenerateCurvature { node: usize, value: f64 },
    #[error(transparent)]
    Ambient(#[from] AmbientError),
}

/// Coefficients of the curvature-preservation system. They depend on the
/// undeformed surface only.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationCoefficients {
    /// p₁ = ∂₂ ln V, p₂ = -∂₁ ln V.
    pub p: [RealField; 2],
    /// qₖ = ∂ₖ ln √g.
    pub q: [RealField; 2],
    /// q⁽ᵇ⁾ₖ = 2qₖ.
    pub qb: [RealField; 2],
    /// q⁽ᵇ⁾₀ = 4H.
    pub qb0: RealField,
}

pub fn coefficients(surface: &SurfaceState, diff: &PolarDiff) -> Result<EquationCoefficients, KpresError> {
    for (node, p) in surface.points.iter().enumerate() {
        if !(p.v > 0.0) || !(p.g_det > 0.0) {
            return Err(KpresError::Geometry { node, reason: format!("V = {}, g = {}", p.v, p.g_det) });
        }
    }
    let [lv1, lv2] = diff.gradient(&surface.scalar(|p| p.v.ln()));
    let q = diff.gradient(&surface.scalar(|p| 0.5 * p.g_det.ln()));
    let p = [lv2, lv1.map(|v| -v)];
    let qb = [q[0].map(|v| 2.0 * v), q[1].map(|v| 2.0 * v)];
    let qb0 = surface.scalar(|p| 4.0 * p.h);
    Ok(EquationCoefficients { p, q, qb, qb0 })
}

impl EquationCoefficients {
    pub fn grid(&self) -> DiskGrid {
        self.qb0.grid()
    }

    /// A and B of ∂_z̄ w + A w + B w̄ with w = ȧ¹ + i ȧ², in the x-plane ordering.
    pub fn vekua_ab(&self) -> (ComplexField, ComplexField) {
        assemble_ab([&self.p[0], &self.p[1]], [&self.qb[0], &self.qb[1]])
    }
}

/// Per-node variation of the fundamental forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeVariation {
    /// Δg_ij assembled from the covariant derivative of z.
    pub dg: Matrix2<f64>,
    /// ã(t)(y,ᵢ + z,ᵢ, y,ⱼ + z,ⱼ), computed directly.
    pub g_t: Matrix2<f64>,
    pub w1: f64,
    pub w2: f64,
    /// Δg = g gⁱʲ Δg_ij + W₂.
    pub dg_det: f64,
    pub psi2: f64,
    pub m: [Matrix2<f64>; 4],
    /// Δb_ij = ∂ᵢaᵏ b_jk + M⁴_ij.
    pub db: Matrix2<f64>,
    /// -ã(t)(y,ᵢ + z,ᵢ, ∇*ⱼ ñ), computed directly.
    pub b_t: Matrix2<f64>,
    pub w2b: f64,
    /// Δb = V(Δb₁₁ + Δb₂₂) + W₂⁽ᵇ⁾.
    pub db_det: f64,
    /// b + Δb.
    pub b_det_t: f64,
    /// Δ(g/b) = (Δg - (g/b)Δb)/b(t).
    pub dk: f64,
    /// The same quantity as (g/b(t))(div a + 2q·a - 2Ψ₂ - ΣM⁴ᵢᵢ/V - W₂⁽ᵇ⁾/V²).
    pub dk_bracket: f64,
    /// -W₁ - W₂/g + ΣM⁴ᵢᵢ/V + W₂⁽ᵇ⁾/V²: the nonlinear part of the bracket.
    pub remainder: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariationNorms {
    pub dg: f64,
    pub db: f64,
    pub dk: f64,
    pub w1: f64,
    pub w2: f64,
    pub w2b: f64,
    pub m4: f64,
}

#[derive(Debug, Clone)]
pub struct VariationState {
    pub grid: DiskGrid,
    pub t: f64,
    pub nodes: Vec<NodeVariation>,
    /// Right side of the curl relation, a function of the current state.
    pub psi1: RealField,
}

impl VariationState {
    pub fn field(&self, f: impl Fn(&NodeVariation) -> f64) -> RealField {
        Field::from_nodes(self.grid, |i| f(&self.nodes[i]))
    }

    pub fn dk_field(&self) -> RealField {
        self.field(|n| n.dk)
    }

    pub fn remainder(&self) -> RealField {
        self.field(|n| n.remainder)
    }

    pub fn norms(&self) -> VariationNorms {
        let mut out = VariationNorms::default();
        for n in &self.nodes {
            out.dg = out.dg.max(n.dg_det.abs());
            out.db = out.db.max(n.db_det.abs());
            out.dk = out.dk.max(n.dk.abs());
            out.w1 = out.w1.max(n.w1.abs());
            out.w2 = out.w2.max(n.w2.abs());
            out.w2b = out.w2b.max(n.w2b.abs());
            out.m4 = out.m4.max(n.m[3].amax());
        }
        out
    }

    /// Forward-difference rates towards a later state.
    pub fn rates(&self, later: &VariationState, dt: f64) -> VariationRates {
        let d = |f: &dyn Fn(&NodeVariation) -> f64| {
            Field::from_nodes(self.grid, |i| (f(&later.nodes[i]) - f(&self.nodes[i])) / dt)
        };
        VariationRates {
            dg: (0..self.nodes.len()).map(|i| (later.nodes[i].dg - self.nodes[i].dg) / dt).collect(),
            w1: d(&|n| n.w1),
            w2: d(&|n| n.w2),
            psi2: d(&|n| n.psi2),
            db: d(&|n| n.db_det),
            dk: d(&|n| n.dk),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariationRates {
    pub dg: Vec<Matrix2<f64>>,
    pub w1: RealField,
    pub w2: RealField,
    pub psi2: RealField,
    pub db: RealField,
    pub dk: RealField,
}

/// z,ᵢ from grid partials of a, c and analytic derivatives of y, n.
fn dz(
    surface: &SurfaceState,
    a: &[RealField; 2],
    c: &RealField,
    partials: &Partials,
    node: usize,
) -> [Vector3<f64>; 2] {
    let p = &surface.points[node];
    [0, 1].map(|i| {
        p.dy[0] * partials.da[0][i][node]
            + p.dy[1] * partials.da[1][i][node]
            + p.ddy[0][i] * a[0][node]
            + p.ddy[1][i] * a[1][node]
            + p.n * partials.dc[i][node]
            + p.dn[i] * c[node]
    })
}

fn vec_gradient(diff: &PolarDiff, grid: DiskGrid, f: impl Fn(usize) -> Vector3<f64>) -> Vec<[Vector3<f64>; 2]> {
    let comps: Vec<[RealField; 2]> = (0..3).map(|c| diff.gradient(&Field::from_nodes(grid, |i| f(i)[c]))).collect();
    (0..grid.len()).map(|i| [0, 1].map(|j| Vector3::new(comps[0][j][i], comps[1][j][i], comps[2][j][i]))).collect()
}

/// Ψ₁ = -(c,₁∂₂N₀ - c,₂∂₁N₀ + ∂₁aᵏ∂₂Nₖ - ∂₂aᵏ∂₁Nₖ + ∂₂Q₁ - ∂₁Q₂)/V.
pub fn psi1(surface: &SurfaceState, coeffs: &GDefCoefficients, partials: &Partials, diff: &PolarDiff) -> RealField {
    let dn = [0, 1, 2].map(|j| diff.gradient(&coeffs.n_field(j)));
    let dq = [0, 1].map(|i| diff.gradient(&coeffs.q_field(i)));
    Field::from_nodes(surface.grid, |i| {
        let (da, dc) = (&partials.da, &partials.dc);
        let s = dc[0][i] * dn[0][1][i] - dc[1][i] * dn[0][0][i] + da[0][0][i] * dn[1][1][i] + da[1][0][i] * dn[2][1][i]
            - da[0][1][i] * dn[1][0][i]
            - da[1][1][i] * dn[2][0][i]
            + dq[0][1][i]
            - dq[1][0][i];
        -s / surface.points[i].v
    })
}

/// All variation quantities of `deform` relative to the undeformed surface.
/// `coeffs` and `partials` must belong to `deform`.
pub fn variation(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    coeffs: &GDefCoefficients,
    partials: &Partials,
    diff: &PolarDiff,
    eq: &EquationCoefficients,
) -> Result<VariationState, KpresError> {
    let grid = surface.grid;
    let tr = &coeffs.transport;
    // grid derivatives of the transported normal, its inverse length and A₍₁₎(0, t) = -A₍₁₎(t, 0)
    let dtail = vec_gradient(diff, grid, |i| tr[i].n_t - surface.points[i].n);
    let dinv = diff.gradient(&Field::from_nodes(grid, |i| 1.0 / tr[i].n_norm));
    let da_mat: Vec<[Matrix3<f64>; 2]> = {
        let comps: Vec<[RealField; 2]> =
            (0..9).map(|k| diff.gradient(&Field::from_nodes(grid, |i| -tr[i].first[(k / 3, k % 3)]))).collect();
        (0..grid.len()).map(|i| [0, 1].map(|j| Matrix3::from_fn(|r, c| comps[3 * r + c][j][i]))).collect()
    };
    let nodes = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let p = &surface.points[node];
            let t = &tr[node];
            let z = deform.z[node];
            let zi = dz(surface, &deform.a, &deform.c, partials, node);
            let a0 = &p.metric;
            let at = &t.metric_t;
            let dmetric = metric.metric_deriv(&p.y);
            let dz_metric: Matrix3<f64> = (0..3).map(|s| dmetric[s] * z[s]).sum();
            let diff_t = at - a0;
            let y = &p.dy;
            let big_y = [y[0] + zi[0], y[1] + zi[1]];

            // first fundamental form
            let nabla_z = [0, 1].map(|j| zi[j] + p.ambient.contract(&y[j], &z));
            let dg = Matrix2::from_fn(|i, j| {
                inner(a0, &y[i], &nabla_z[j])
                    + inner(a0, &y[j], &nabla_z[i])
                    + inner(&(diff_t - dz_metric), &y[i], &y[j])
                    + inner(&diff_t, &y[i], &zi[j])
                    + inner(&diff_t, &y[j], &zi[i])
                    + inner(at, &zi[i], &zi[j])
            });
            let g_t = Matrix2::from_fn(|i, j| inner(at, &big_y[i], &big_y[j]));
            let gi = &p.g_inv;
            let mut w1 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    w1 += gi[(i, j)]
                        * (inner(&(diff_t - dz_metric), &y[i], &y[j])
                            + 2.0 * inner(&diff_t, &y[i], &zi[j])
                            + inner(at, &zi[i], &zi[j]));
                }
            }
            let w2 = dg.determinant();
            let dg_det = p.g_det * gi.component_mul(&dg).sum() + w2;
            let psi2 = 2.0 * p.h * deform.c[node] - 0.5 * w1 - 0.5 * w2 / p.g_det;

            // second fundamental form
            let inv = 1.0 / t.n_norm;
            let n_t = t.n_t;
            let dn_t = [0, 1].map(|j| p.dn[j] + dtail[node][j]);
            let nabla_nt = [0, 1].map(|j| dn_t[j] + t.chr_t.contract(&big_y[j], &n_t));
            let nabla_nu = [0, 1].map(|j| nabla_nt[j] * inv + n_t * dinv[j][node]);
            let nabla_n0 = [0, 1].map(|j| p.dn[j] + p.ambient.contract(&y[j], &p.n));
            let tail = [0, 1].map(|j| da_mat[node][j] * p.n + p.ambient.contract(&zi[j], &p.n));
            let t_j = [0, 1].map(|j| nabla_nt[j] - nabla_n0[j] - tail[j]);
            let b_t = Matrix2::from_fn(|i, j| -inner(at, &big_y[i], &nabla_nu[j]));
            let (a, c) = ([deform.a[0][node], deform.a[1][node]], deform.c[node]);
            let da = |k: usize, i: usize| partials.da[k][i][node];
            let m1 = Matrix2::from_fn(|i, j| {
                let mut u = p.n * partials.dc[i][node] + p.dn[i] * c;
                for k in 0..2 {
                    u += p.cov_dy(k, i) * a[k];
                    let coef: f64 = (0..2).map(|q| p.chr[k][q][i] * a[q]).sum();
                    u += y[k] * coef;
                }
                -inner(at, &u, &nabla_nu[j])
            });
            let m2 = Matrix2::from_fn(|i, j| {
                let u = y[0] * da(0, i) + y[1] * da(1, i);
                -inner(at, &u, &nabla_nu[j]) + inner(a0, &u, &nabla_n0[j]) + m1[(i, j)]
            });
            let m3 = Matrix2::from_fn(|i, j| {
                p.b[(j, i)] * (1.0 - t.n_norm) * inv
                    - inner(a0, &y[i], &tail[j]) * inv
                    - inner(a0, &y[i], &t_j[j]) * inv
                    - inner(&diff_t, &y[i], &nabla_nt[j]) * inv
            });
            let m4 = Matrix2::from_fn(|i, j| m2[(i, j)] + m3[(i, j)] - inner(at, &y[i], &n_t) * dinv[j][node]);
            let db = Matrix2::from_fn(|i, j| da(0, i) * p.b[(j, 0)] + da(1, i) * p.b[(j, 1)] + m4[(i, j)]);
            let w2b = db.determinant();
            let db_det = p.v * (db[(0, 0)] + db[(1, 1)]) + w2b;
            let b_det_t = p.b_det + db_det;
            if !(b_det_t > DEGENERACY_FLOOR * p.b_det) {
                return Err(KpresError::DegenerateCurvature { node, value: b_det_t });
            }
            let dk = (dg_det - p.g_det / p.b_det * db_det) / b_det_t;
            let trace_m4 = m4[(0, 0)] + m4[(1, 1)];
            let remainder = -w1 - w2 / p.g_det + trace_m4 / p.v + w2b / (p.v * p.v);
            let div = da(0, 0) + da(1, 1);
            let qa = eq.q[0][node] * a[0] + eq.q[1][node] * a[1];
            let dk_bracket = p.g_det / b_det_t * (div + 2.0 * qa - (2.0 * psi2 + trace_m4 / p.v + w2b / (p.v * p.v)));
            Ok(NodeVariation {
                dg,
                g_t,
                w1,
                w2,
                dg_det,
                psi2,
                m: [m1, m2, m3, m4],
                db,
                b_t,
                w2b,
                db_det,
                b_det_t,
                dk,
                dk_bracket,
                remainder,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VariationState { grid, t: deform.t, nodes, psi1: psi1(surface, coeffs, partials, diff) })
}

/// Ẇ₁ from the rates ȧ, ċ at the state `deform`, without differencing in t.
pub fn w1_rate(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    partials: &Partials,
    a_dot: &[RealField; 2],
    c_dot: &RealField,
    diff: &PolarDiff,
) -> Result<RealField, KpresError> {
    let rate_partials = Partials::new(diff, a_dot, c_dot);
    let vals = (0..surface.grid.len())
        .into_par_iter()
        .map(|node| {
            let p = &surface.points[node];
            let z = deform.z[node];
            let yt = p.y + z;
            let at = metric.check_positive(&yt)?;
            let zi = dz(surface, &deform.a, &deform.c, partials, node);
            let zdot = p.dy[0] * a_dot[0][node] + p.dy[1] * a_dot[1][node] + p.n * c_dot[node];
            let zdot_i = dz(surface, a_dot, c_dot, &rate_partials, node);
            let (d0, dt) = (metric.metric_deriv(&p.y), metric.metric_deriv(&yt));
            let along = |d: &[Matrix3<f64>; 3]| -> Matrix3<f64> { (0..3).map(|s| d[s] * zdot[s]).sum() };
            let (d0z, dtz) = (along(&d0), along(&dt));
            let diff_t = at - p.metric;
            let y = &p.dy;
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += p.g_inv[(i, j)]
                        * (inner(&(dtz - d0z), &y[i], &y[j])
                            + 2.0 * inner(&dtz, &y[i], &zi[j])
                            + 2.0 * inner(&diff_t, &y[i], &zdot_i[j])
                            + inner(&dtz, &zi[i], &zi[j])
                            + 2.0 * inner(&at, &zdot_i[i], &zi[j]));
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>, KpresError>>()?;
    Ok(Field::from_vec(surface.grid, vals).expect("grid length"))
}

/// Δ̇g_ij = ∂ã(t)ż(Y_i, Y_j) + ã(t)(ż,ᵢ, Y_j) + ã(t)(Y_i, ż,ⱼ) with Y_i = y,ᵢ + z,ᵢ.
pub fn delta_g_rate(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    partials: &Partials,
    a_dot: &[RealField; 2],
    c_dot: &RealField,
    diff: &PolarDiff,
) -> Result<Vec<Matrix2<f64>>, KpresError> {
    let rate_partials = Partials::new(diff, a_dot, c_dot);
    (0..surface.grid.len())
        .into_par_iter()
        .map(|node| {
            let p = &surface.points[node];
            let yt = p.y + deform.z[node];
            let at = metric.check_positive(&yt)?;
            let zi = dz(surface, &deform.a, &deform.c, partials, node);
            let big_y = [p.dy[0] + zi[0], p.dy[1] + zi[1]];
            let zdot = p.dy[0] * a_dot[0][node] + p.dy[1] * a_dot[1][node] + p.n * c_dot[node];
            let zdot_i = dz(surface, a_dot, c_dot, &rate_partials, node);
            let d = metric.metric_deriv(&yt);
            let dtz: Matrix3<f64> = (0..3).map(|s| d[s] * zdot[s]).sum();
            Ok(Matrix2::from_fn(|i, j| {
                inner(&dtz, &big_y[i], &big_y[j])
                    + inner(&at, &zdot_i[i], &big_y[j])
                    + inner(&at, &big_y[i], &zdot_i[j])
            }))
        })
        .collect()
}

/// Right-hand sides of the system for ẇ = ȧ¹ + i ȧ².
#[derive(Debug, Clone)]
pub struct PsiRates {
    pub psi1_dot: RealField,
    pub psi3_dot: RealField,
    pub p0: RealField,
}

impl PsiRates {
    /// Ψ̇ = ½(Ψ̇₁ + iΨ̇₃).
    pub fn psi(&self) -> ComplexField {
        self.psi1_dot.zip_map(&self.psi3_dot, |a, b| Complex64::new(0.5 * a, 0.5 * b))
    }
}

/// Ψ̇₁ and P₀ by forward differences between `current` and the Euler trial
/// state, and Ψ̇₃ = q⁽ᵇ⁾₀ (ċ - γ_t) - P₀.
pub fn rhs_psi(
    eq: &EquationCoefficients,
    current: &VariationState,
    trial: &VariationState,
    c_dot: &RealField,
    gamma_t: &RealField,
    dt: f64,
) -> PsiRates {
    let grid = current.grid;
    let psi1_dot = Field::from_nodes(grid, |i| (trial.psi1[i] - current.psi1[i]) / dt);
    let p0 = Field::from_nodes(grid, |i| -(trial.nodes[i].remainder - current.nodes[i].remainder) / dt);
    let psi3_dot = Field::from_nodes(grid, |i| eq.qb0[i] * (c_dot[i] - gamma_t[i]) - p0[i]);
    PsiRates { psi1_dot, psi3_dot, p0 }
}

#[cfg(test)]
mod tests;
