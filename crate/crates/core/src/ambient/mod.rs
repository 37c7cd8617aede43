//! Ambient Riemannian metric, Christoffel symbols and parallel transport.

mod transport;

pub use transport::{
    first_transport_integral, transport_matrix_backward, transport_matrix_forward, transport_normal, transport_path,
    transport_series_terms, transport_tensor_ode, Direction, NormalTransport, PathSample, TransportHistory,
};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmbientError {
    #[error("degenerate metric at y = {point:?}: det = {det:e}")]
    DegenerateMetric { point: [f64; 3], det: f64 },
    #[error("metric not positive definite at y = {point:?}")]
    NotPositiveDefinite { point: [f64; 3] },
    #[error("transport history is empty")]
    EmptyHistory,
    #[error("transport history invalid: {0}")]
    BadHistory(String),
}

const FD_STEP: f64 = 1e-5;

/// Closed-form metric plug-ins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricKind {
    /// ã = identity.
    Flat,
    /// Constant symmetric positive definite matrix (row-major).
    Constant { matrix: [[f64; 3]; 3] },
    /// ã = e^{2φ(y)} δ with φ(y) = g·y.
    ConformalLinear { gradient: [f64; 3] },
    /// ã = e^{2φ(y)} δ with φ(y) = β |y - y₀|² / 2.
    ConformalRadial { beta: f64, center: [f64; 3] },
    /// ã = δ + ε (sin y¹, sin y², sin y³) ⊗ sym, a non-conformal test metric whose
    /// derivatives are taken by central differences.
    Ripple { epsilon: f64 },
}

/// Ambient metric with its bound constant M₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientMetric {
    pub kind: MetricKind,
    pub m0: f64,
}

impl AmbientMetric {
    pub fn flat() -> Self {
        Self { kind: MetricKind::Flat, m0: 10.0 }
    }

    pub fn conformal_linear(gradient: [f64; 3]) -> Self {
        Self { kind: MetricKind::ConformalLinear { gradient }, m0: 100.0 }
    }

    pub fn conformal_radial(beta: f64, center: [f64; 3]) -> Self {
        Self { kind: MetricKind::ConformalRadial { beta, center }, m0: 100.0 }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, MetricKind::Flat)
    }

    /// True when all coordinate derivatives of ã vanish identically.
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, MetricKind::Flat | MetricKind::Constant { .. })
    }

    /// Conformal exponent φ with its gradient and Hessian.
    fn conformal(&self, y: &Vector3<f64>) -> Option<(f64, Vector3<f64>, Matrix3<f64>)> {
        match &self.kind {
            MetricKind::ConformalLinear { gradient } => {
                let g = Vector3::from(*gradient);
                Some((g.dot(y), g, Matrix3::zeros()))
            }
            MetricKind::ConformalRadial { beta, center } => {
                let d = y - Vector3::from(*center);
                Some((0.5 * beta * d.norm_squared(), *beta * d, Matrix3::identity() * *beta))
            }
            _ => None,
        }
    }

    pub fn metric(&self, y: &Vector3<f64>) -> Matrix3<f64> {
        match &self.kind {
            MetricKind::Flat => Matrix3::identity(),
            MetricKind::Constant { matrix } => Matrix3::from_fn(|i, j| matrix[i][j]),
            MetricKind::Ripple { epsilon } => {
                let s = Vector3::new(y[0].sin(), y[1].sin(), y[2].sin());
                Matrix3::identity()
                    + *epsilon
                        * (s * Vector3::new(1.0, 0.5, 0.25).transpose() + Vector3::new(1.0, 0.5, 0.25) * s.transpose())
            }
            _ => {
                let (phi, _, _) = self.conformal(y).expect("conformal");
                Matrix3::identity() * (2.0 * phi).exp()
            }
        }
    }

    /// ∂ã/∂y^σ for σ = 0, 1, 2.
    pub fn metric_deriv(&self, y: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        if self.is_constant() {
            return [Matrix3::zeros(); 3];
        }
        if let Some((phi, g, _)) = self.conformal(y) {
            let e = (2.0 * phi).exp();
            return [0, 1, 2].map(|s| Matrix3::identity() * (2.0 * g[s] * e));
        }
        [0, 1, 2].map(|s| {
            let mut d = Vector3::zeros();
            d[s] = FD_STEP;
            (self.metric(&(y + d)) - self.metric(&(y - d))) / (2.0 * FD_STEP)
        })
    }

    /// ∂²ã/∂y^σ∂y^τ.
    pub fn metric_second(&self, y: &Vector3<f64>) -> [[Matrix3<f64>; 3]; 3] {
        if self.is_constant() {
            return [[Matrix3::zeros(); 3]; 3];
        }
        if let Some((phi, g, hess)) = self.conformal(y) {
            let e = (2.0 * phi).exp();
            return [0, 1, 2]
                .map(|s| [0, 1, 2].map(|t| Matrix3::identity() * ((4.0 * g[s] * g[t] + 2.0 * hess[(s, t)]) * e)));
        }
        [0, 1, 2].map(|s| {
            let mut d = Vector3::zeros();
            d[s] = FD_STEP;
            let (p, m) = (self.metric_deriv(&(y + d)), self.metric_deriv(&(y - d)));
            [0, 1, 2].map(|t| (p[t] - m[t]) / (2.0 * FD_STEP))
        })
    }

    /// Positive definiteness by leading principal minors.
    pub fn check_positive(&self, y: &Vector3<f64>) -> Result<Matrix3<f64>, AmbientError> {
        let a = self.metric(y);
        let point = [y[0], y[1], y[2]];
        let det = a.determinant();
        if det.abs() < 1e-12 {
            return Err(AmbientError::DegenerateMetric { point, det });
        }
        let m2 = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        if a[(0, 0)] <= 0.0 || m2 <= 0.0 || det <= 0.0 {
            return Err(AmbientError::NotPositiveDefinite { point });
        }
        Ok(a)
    }

    /// Sup-norms of ã, ∂ã, ∂²ã over sample points, for comparison with M₀.
    pub fn sup_norms(&self, points: &[Vector3<f64>]) -> [f64; 3] {
        let mut out = [0.0f64; 3];
        for y in points {
            out[0] = out[0].max(self.metric(y).amax());
            out[1] = out[1].max(self.metric_deriv(y).iter().map(|m| m.amax()).fold(0.0, f64::max));
            out[2] = out[2].max(self.metric_second(y).iter().flatten().map(|m| m.amax()).fold(0.0, f64::max));
        }
        out
    }
}

/// Christoffel symbols at one point: `upper[g][a][b]` = Γ^g_{ab},
/// `lower[a][s][b]` = Γ_{as,b} = ã_{gb} Γ^g_{as}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel {
    pub upper: [[[f64; 3]; 3]; 3],
    pub lower: [[[f64; 3]; 3]; 3],
}

impl Christoffel {
    pub fn zero() -> Self {
        Self { upper: [[[0.0; 3]; 3]; 3], lower: [[[0.0; 3]; 3]; 3] }
    }

    /// Γ^g_{ab} u^a v^b.
    pub fn contract(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|g, _| {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += self.upper[g][a][b] * u[a] * v[b];
                }
            }
            s
        })
    }

    /// Matrix M with M[a][c] = Γ^a_{bc} ż^b, so that the transport equation
    /// reads dA/dτ = -M A.
    pub fn along(&self, zdot: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|a, c| (0..3).map(|b| self.upper[a][b][c] * zdot[b]).sum())
    }

    pub fn sup(&self) -> f64 {
        self.upper.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn christoffel_at(metric: &AmbientMetric, y: &Vector3<f64>) -> Result<Christoffel, AmbientError> {
    if metric.is_constant() {
        metric.check_positive(y)?;
        return Ok(Christoffel::zero());
    }
    let a = metric.check_positive(y)?;
    let inv =
        a.try_inverse().ok_or(AmbientError::DegenerateMetric { point: [y[0], y[1], y[2]], det: a.determinant() })?;
    let d = metric.metric_deriv(y);
    // first kind [ab, m] = ½(∂_a ã_{mb} + ∂_b ã_{ma} - ∂_m ã_{ab})
    let mut first = [[[0.0; 3]; 3]; 3];
    for (aa, fa) in first.iter_mut().enumerate() {
        for (b, fb) in fa.iter_mut().enumerate() {
            for (m, f) in fb.iter_mut().enumerate() {
                *f = 0.5 * (d[aa][(m, b)] + d[b][(m, aa)] - d[m][(aa, b)]);
            }
        }
    }
    let mut out = Christoffel::zero();
    for g in 0..3 {
        for aa in 0..3 {
            for b in 0..3 {
                out.upper[g][aa][b] = (0..3).map(|m| inv[(g, m)] * first[aa][b][m]).sum();
            }
        }
    }
    for aa in 0..3 {
        for s in 0..3 {
            for b in 0..3 {
                out.lower[aa][s][b] = (0..3).map(|g| a[(g, b)] * out.upper[g][aa][s]).sum();
            }
        }
    }
    Ok(out)
}

/// Largest |∂_σã_{ab} - Γ_{aσ,b} - Γ_{bσ,a}| at a point.
pub fn compatibility_residual(metric: &AmbientMetric, y: &Vector3<f64>) -> Result<f64, AmbientError> {
    let c = christoffel_at(metric, y)?;
    let d = metric.metric_deriv(y);
    let mut r = 0.0f64;
    for s in 0..3 {
        for a in 0..3 {
            for b in 0..3 {
                r = r.max((d[s][(a, b)] - c.lower[a][s][b] - c.lower[b][s][a]).abs());
            }
        }
    }
    Ok(r)
}

/// ã-inner product.
pub fn inner(a: &Matrix3<f64>, u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.dot(&(a * v))
}
