//! Deformation state, parallel-transport data per node and the coefficients of
//! the G-deformation equations.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::ambient::{
    christoffel_at, first_transport_integral, inner, transport_matrix_backward, transport_matrix_forward,
    transport_series_terms, AmbientError, AmbientMetric, Christoffel, Direction, TransportHistory,
};
use crate::grid::{DiskGrid, Field, PolarDiff, RealField};
use crate::surface::SurfaceState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdefError {
    #[error("deformation history is inconsistent: stored z differs from a, c by {0:e}")]
    Inconsistent(f64),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
}

/// z = aʲ y,ⱼ + c n at every node.
pub fn displacement(surface: &SurfaceState, a: &[RealField; 2], c: &RealField) -> Vec<Vector3<f64>> {
    surface.points.iter().enumerate().map(|(i, p)| p.dy[0] * a[0][i] + p.dy[1] * a[1][i] + p.n * c[i]).collect()
}

/// Grid partial derivatives of a and c.
#[derive(Debug, Clone)]
pub struct Partials {
    /// `da[j][i]` = ∂ᵢ aʲ.
    pub da: [[RealField; 2]; 2],
    /// `dc[i]` = ∂ᵢ c.
    pub dc: [RealField; 2],
}

impl Partials {
    pub fn new(diff: &PolarDiff, a: &[RealField; 2], c: &RealField) -> Self {
        Self { da: [diff.gradient(&a[0]), diff.gradient(&a[1])], dc: diff.gradient(c) }
    }
}

/// Fields a¹, a², c, their latest rates, the displacement and the path of
/// every node.
#[derive(Debug, Clone)]
pub struct DeformationState {
    pub grid: DiskGrid,
    pub t: f64,
    pub a: [RealField; 2],
    pub c: RealField,
    pub a_dot: [RealField; 2],
    pub c_dot: RealField,
    pub z: Vec<Vector3<f64>>,
    pub histories: Vec<TransportHistory>,
}

impl DeformationState {
    /// The undeformed surface at t = 0.
    pub fn initial(grid: DiskGrid) -> Self {
        let zero = Field::filled(grid, 0.0);
        Self {
            grid,
            t: 0.0,
            a: [zero.clone(), zero.clone()],
            c: zero.clone(),
            a_dot: [zero.clone(), zero.clone()],
            c_dot: zero,
            z: vec![Vector3::zeros(); grid.len()],
            histories: vec![TransportHistory::origin(); grid.len()],
        }
    }

    /// State with prescribed a, c at time t reached along the straight path
    /// z(τ) = (τ/t) z(t) sampled at `steps` segments. Used for tests and probes.
    pub fn prescribed(
        surface: &SurfaceState,
        a: [RealField; 2],
        c: RealField,
        t: f64,
        steps: usize,
    ) -> Result<Self, GdefError> {
        if !(t > 0.0) || steps == 0 {
            return Err(GdefError::BadStep(t));
        }
        let grid = surface.grid;
        let z = displacement(surface, &a, &c);
        let histories =
            z.iter().map(|zi| TransportHistory::constant_rate(zi / t, t, steps)).collect::<Result<Vec<_>, _>>()?;
        let a_dot = [a[0].map(|v| v / t), a[1].map(|v| v / t)];
        let c_dot = c.map(|v| v / t);
        Ok(Self { grid, t, a, c, a_dot, c_dot, z, histories })
    }

    /// Explicit Euler step with the given rates; the new knot is appended to
    /// every node's path.
    pub fn advanced(
        &self,
        surface: &SurfaceState,
        dt: f64,
        a_dot: &[RealField; 2],
        c_dot: &RealField,
    ) -> Result<Self, GdefError> {
        if !(dt > 0.0) {
            return Err(GdefError::BadStep(dt));
        }
        let a = [self.a[0].zip_map(&a_dot[0], |x, v| x + dt * v), self.a[1].zip_map(&a_dot[1], |x, v| x + dt * v)];
        let c = self.c.zip_map(c_dot, |x, v| x + dt * v);
        let z = displacement(surface, &a, &c);
        let t = self.t + dt;
        let mut histories = self.histories.clone();
        for (h, zi) in histories.iter_mut().zip(&z) {
            h.push(t, *zi)?;
        }
        Ok(Self { grid: self.grid, t, a, c, a_dot: a_dot.clone(), c_dot: c_dot.clone(), z, histories })
    }

    /// Max |z - (aʲ y,ⱼ + c n)| and max |z - last history sample|.
    pub fn consistency(&self, surface: &SurfaceState) -> f64 {
        let zr = displacement(surface, &self.a, &self.c);
        self.z
            .iter()
            .zip(&zr)
            .zip(&self.histories)
            .map(|((z, r), h)| (z - r).amax().max((z - h.z_end()).amax()))
            .fold(0.0, f64::max)
    }

    pub fn partials(&self, diff: &PolarDiff) -> Partials {
        Partials::new(diff, &self.a, &self.c)
    }
}

/// Transport quantities of one node along its deformation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTransport {
    /// P with A(0) = P A(t).
    pub backward: Matrix3<f64>,
    /// A₍₁₎(t, 0) = ∫ Γ ż dτ.
    pub first: Matrix3<f64>,
    /// n(t): the normal carried forward.
    pub n_t: Vector3<f64>,
    /// √(ã(t)(n(t), n(t))).
    pub n_norm: f64,
    /// ã and Γ̃ at y + z(t).
    pub metric_t: Matrix3<f64>,
    pub chr_t: Christoffel,
}

fn node_transport(
    metric: &AmbientMetric,
    y: &Vector3<f64>,
    n0: &Vector3<f64>,
    hist: &TransportHistory,
    substeps: usize,
) -> Result<NodeTransport, AmbientError> {
    let yt = y + hist.z_end();
    let metric_t = metric.check_positive(&yt)?;
    let chr_t = christoffel_at(metric, &yt)?;
    if metric.is_constant() || hist.segments() == 0 {
        let n_norm = inner(&metric_t, n0, n0).sqrt();
        return Ok(NodeTransport {
            backward: Matrix3::identity(),
            first: Matrix3::zeros(),
            n_t: *n0,
            n_norm,
            metric_t,
            chr_t,
        });
    }
    let backward = transport_matrix_backward(metric, y, hist, substeps)?;
    let first = first_transport_integral(metric, y, hist)?;
    let n_t = transport_matrix_forward(metric, y, hist, substeps)? * n0;
    let n_norm = inner(&metric_t, &n_t, &n_t).sqrt();
    Ok(NodeTransport { backward, first, n_t, n_norm, metric_t, chr_t })
}

/// Transport data at every node of the current state.
pub fn transport_all(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    substeps: usize,
) -> Result<Vec<NodeTransport>, GdefError> {
    surface
        .points
        .par_iter()
        .zip(deform.histories.par_iter())
        .map(|(p, h)| node_transport(metric, &p.y, &p.n, h, substeps).map_err(GdefError::from))
        .collect()
}

/// Coefficients at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoefficients {
    pub s1: Matrix3<f64>,
    pub s2: Matrix3<f64>,
    pub s3: [Vector3<f64>; 2],
    pub s4: [Vector3<f64>; 2],
    pub s5: [Vector3<f64>; 2],
    /// T₀ = S₁ n, Tⱼ = S₁ y,ⱼ.
    pub t: [Vector3<f64>; 3],
    /// N₀, N₁, N₂.
    pub n: [f64; 3],
    /// Q₁, Q₂.
    pub q: [f64; 2],
}

/// Coefficients of the G-deformation equations on the whole grid.
#[derive(Debug, Clone)]
pub struct GDefCoefficients {
    pub grid: DiskGrid,
    pub t: f64,
    pub nodes: Vec<NodeCoefficients>,
    pub transport: Vec<NodeTransport>,
}

impl GDefCoefficients {
    pub fn n_field(&self, j: usize) -> RealField {
        Field::from_vec(self.grid, self.nodes.iter().map(|c| c.n[j]).collect()).expect("node count")
    }

    pub fn q_field(&self, i: usize) -> RealField {
        Field::from_vec(self.grid, self.nodes.iter().map(|c| c.q[i]).collect()).expect("node count")
    }

    /// max over nodes of |S₁|, |S₂|, |N|, |Q| (entrywise sup).
    pub fn norms(&self) -> CoefficientNorms {
        let mut out = CoefficientNorms::default();
        for c in &self.nodes {
            out.s1 = out.s1.max(c.s1.amax());
            out.s2 = out.s2.max(c.s2.amax());
            out.s5 = out.s5.max(c.s5[0].amax().max(c.s5[1].amax()));
            out.n = out.n.max(c.n.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            out.q = out.q.max(c.q[0].abs().max(c.q[1].abs()));
        }
        out
    }
}

/// Discrete sup-norms of the coefficient fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoefficientNorms {
    pub s1: f64,
    pub s2: f64,
    pub s5: f64,
    pub n: f64,
    pub q: f64,
}

/// Assembles S₍₁₎..S₍₅₎, T, N, Q at the state's time.
pub fn assemble_coefficients(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    substeps: usize,
) -> Result<GDefCoefficients, GdefError> {
    let tol = 1e-9 * (1.0 + deform.z.iter().fold(0.0f64, |m, z| m.max(z.amax())));
    let drift = deform.consistency(surface);
    if drift > tol {
        return Err(GdefError::Inconsistent(drift));
    }
    let transport = transport_all(metric, surface, deform, substeps)?;
    let nodes = surface
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let tr = &transport[i];
            let s1 = tr.backward - Matrix3::identity();
            let s2 = s1 - tr.first;
            let gz = p.ambient.along(&deform.z[i]);
            let a = [deform.a[0][i], deform.a[1][i]];
            let c = deform.c[i];
            let s3 = [0, 1].map(|k| (s1 - gz) * p.dy[k]);
            let s4 = [0, 1].map(|k| s3[k] + s1 * (p.cov_dy(0, k) * a[0] + p.cov_dy(1, k) * a[1] + p.dn[k] * c));
            let s5 = [0, 1].map(|k| {
                let mut extra = Vector3::zeros();
                for j in 0..2 {
                    let coef: f64 = (0..2).map(|q| p.chr[j][q][k] * a[q]).sum();
                    extra += p.dy[j] * coef;
                }
                s4[k] + s1 * extra
            });
            let t = [s1 * p.n, s1 * p.dy[0], s1 * p.dy[1]];
            let n = t.map(|tj| inner(&p.metric, &tj, &p.n));
            let q = s5.map(|s| inner(&p.metric, &s, &p.n));
            NodeCoefficients { s1, s2, s3, s4, s5, t, n, q }
        })
        .collect();
    Ok(GDefCoefficients { t: deform.t, nodes, transport, grid: surface.grid })
}

/// Rates Ṅⱼ, Q̇ᵢ as one-sided differences between two coefficient sets.
#[derive(Debug, Clone)]
pub struct CoefficientRates {
    pub n_dot: [RealField; 3],
    pub q_dot: [RealField; 2],
}

impl CoefficientRates {
    pub fn between(earlier: &GDefCoefficients, later: &GDefCoefficients) -> Self {
        let dt = later.t - earlier.t;
        let g = later.grid;
        let scale = if dt != 0.0 { 1.0 / dt } else { 0.0 };
        let n_dot = [0, 1, 2].map(|j| Field::from_nodes(g, |i| (later.nodes[i].n[j] - earlier.nodes[i].n[j]) * scale));
        let q_dot = [0, 1].map(|k| Field::from_nodes(g, |i| (later.nodes[i].q[k] - earlier.nodes[i].q[k]) * scale));
        Self { n_dot, q_dot }
    }

    pub fn zero(grid: DiskGrid) -> Self {
        let z = Field::filled(grid, 0.0);
        Self { n_dot: [z.clone(), z.clone(), z.clone()], q_dot: [z.clone(), z] }
    }

    pub fn sup(&self) -> f64 {
        self.n_dot.iter().chain(&self.q_dot).map(|f| f.sup_norm()).fold(0.0, f64::max)
    }
}

/// rᵢ = aˡ b_li + (1 + N₀) ∂ᵢc + ∂ᵢaʲ Nⱼ + Qᵢ.
pub fn gdef_residual(
    surface: &SurfaceState,
    coeffs: &GDefCoefficients,
    deform: &DeformationState,
    partials: &Partials,
) -> [RealField; 2] {
    [0, 1].map(|i| {
        Field::from_nodes(surface.grid, |node| {
            let p = &surface.points[node];
            let c = &coeffs.nodes[node];
            let ab = deform.a[0][node] * p.b[(0, i)] + deform.a[1][node] * p.b[(1, i)];
            ab + (1.0 + c.n[0]) * partials.dc[i][node]
                + partials.da[0][i][node] * c.n[1]
                + partials.da[1][i][node] * c.n[2]
                + c.q[i]
        })
    })
}

/// ã(0)(A*ᵢ, n) with A*ᵢ the backward transport of y,ᵢ + z,ᵢ, using grid
/// derivatives of z. Independent of the S/N/Q algebra.
pub fn gdef_normal_residual(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    diff: &PolarDiff,
    substeps: usize,
) -> Result<[RealField; 2], GdefError> {
    let grid = surface.grid;
    let comps: Vec<[RealField; 2]> =
        (0..3).map(|c| diff.gradient(&Field::from_nodes(grid, |i| deform.z[i][c]))).collect();
    let rows: Vec<[f64; 2]> = surface
        .points
        .par_iter()
        .enumerate()
        .map(|(node, p)| {
            let back = if metric.is_constant() || deform.histories[node].segments() == 0 {
                Matrix3::identity()
            } else {
                transport_matrix_backward(metric, &p.y, &deform.histories[node], substeps)?
            };
            Ok([0, 1].map(|i| {
                let dz = Vector3::new(comps[0][i][node], comps[1][i][node], comps[2][i][node]);
                inner(&p.metric, &(back * (p.dy[i] + dz)), &p.n)
            }))
        })
        .collect::<Result<_, AmbientError>>()?;
    Ok([0, 1].map(|i| Field::from_nodes(grid, |n| rows[n][i])))
}

/// max over nodes of |(I + Σ_{k≤k_max} A₍ₖ₎) - P|: series against ODE transport.
pub fn series_defect(
    metric: &AmbientMetric,
    surface: &SurfaceState,
    deform: &DeformationState,
    k_max: usize,
    substeps: usize,
) -> Result<f64, GdefError> {
    surface
        .points
        .par_iter()
        .zip(deform.histories.par_iter())
        .map(|(p, h)| {
            if h.segments() == 0 {
                return Ok(0.0);
            }
            let terms = transport_series_terms(metric, &p.y, h, k_max, substeps, Direction::Backward)?;
            let sum = terms.iter().fold(Matrix3::identity(), |acc, t| acc + t);
            let exact = transport_matrix_backward(metric, &p.y, h, substeps)?;
            Ok((sum - exact).amax())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

#[cfg(test)]
mod tests;
