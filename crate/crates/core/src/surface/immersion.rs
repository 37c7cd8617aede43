use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Value, first and second partial derivatives of an immersion at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub y: Vector3<f64>,
    pub dy: [Vector3<f64>; 2],
    pub ddy: [[Vector3<f64>; 2]; 2],
}

/// A twice differentiable map of the closed unit disk into R³.
pub trait Immersion: Send + Sync {
    fn jet(&self, x: [f64; 2]) -> Jet;
}

/// Built-in immersions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    /// Sphere of the given radius through inverse stereographic projection of the
    /// disk of radius `rho`: y = c + R (2X¹, 2X², 1 - |X|²)/(1 + |X|²), X = ρx.
    /// The opening half-angle is 2 atan ρ.
    SphereCap {
        radius: f64,
        rho: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// Graph y³ = κ L² |x|²/2 over the square of side 2L.
    Paraboloid { scale: f64, curvature: f64 },
    /// Graph y³ = L² xᵀ H x / 2; conjugate isothermal only when H is a multiple of
    /// the identity.
    QuadraticGraph { scale: f64, hessian: [[f64; 2]; 2] },
}

impl SurfaceSpec {
    pub fn unit_cap(rho: f64) -> Self {
        SurfaceSpec::SphereCap { radius: 1.0, rho, center: [0.0; 3] }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            SurfaceSpec::SphereCap { radius, rho, .. } => {
                if !(*radius > 0.0) || !(*rho > 0.0) {
                    return Err("sphere_cap needs radius > 0 and rho > 0".into());
                }
            }
            SurfaceSpec::Paraboloid { scale, .. } | SurfaceSpec::QuadraticGraph { scale, .. } => {
                if !(*scale > 0.0) {
                    return Err("graph surfaces need scale > 0".into());
                }
            }
        }
        Ok(())
    }
}

impl Immersion for SurfaceSpec {
    fn jet(&self, x: [f64; 2]) -> Jet {
        match self {
            SurfaceSpec::SphereCap { radius, rho, center } => sphere_jet(*radius, *rho, Vector3::from(*center), x),
            SurfaceSpec::Paraboloid { scale, curvature } => {
                graph_jet(*scale, [[*curvature, 0.0], [0.0, *curvature]], x)
            }
            SurfaceSpec::QuadraticGraph { scale, hessian } => graph_jet(*scale, *hessian, x),
        }
    }
}

fn sphere_jet(radius: f64, rho: f64, center: Vector3<f64>, x: [f64; 2]) -> Jet {
    let xx = [rho * x[0], rho * x[1]];
    let u = 1.0 / (1.0 + xx[0] * xx[0] + xx[1] * xx[1]);
    // derivatives of u = 1/(1 + |X|²) in X
    let du = [-2.0 * xx[0] * u * u, -2.0 * xx[1] * u * u];
    let ddu = |a: usize, b: usize| {
        let d = if a == b { 1.0 } else { 0.0 };
        -2.0 * d * u * u + 8.0 * xx[a] * xx[b] * u * u * u
    };
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let s = Vector3::new(2.0 * xx[0] * u, 2.0 * xx[1] * u, 2.0 * u - 1.0);
    let ds = |a: usize| {
        Vector3::new(
            2.0 * delta(0, a) * u + 2.0 * xx[0] * du[a],
            2.0 * delta(1, a) * u + 2.0 * xx[1] * du[a],
            2.0 * du[a],
        )
    };
    let dds = |a: usize, b: usize| {
        Vector3::new(
            2.0 * delta(0, a) * du[b] + 2.0 * delta(0, b) * du[a] + 2.0 * xx[0] * ddu(a, b),
            2.0 * delta(1, a) * du[b] + 2.0 * delta(1, b) * du[a] + 2.0 * xx[1] * ddu(a, b),
            2.0 * ddu(a, b),
        )
    };
    let (r1, r2) = (radius * rho, radius * rho * rho);
    Jet {
        y: center + s * radius,
        dy: [ds(0) * r1, ds(1) * r1],
        ddy: [[dds(0, 0) * r2, dds(0, 1) * r2], [dds(1, 0) * r2, dds(1, 1) * r2]],
    }
}

fn graph_jet(scale: f64, h: [[f64; 2]; 2], x: [f64; 2]) -> Jet {
    let l2 = scale * scale;
    let hx = [h[0][0] * x[0] + h[0][1] * x[1], h[1][0] * x[0] + h[1][1] * x[1]];
    let f = 0.5 * l2 * (x[0] * hx[0] + x[1] * hx[1]);
    let sym = |a: usize, b: usize| 0.5 * (h[a][b] + h[b][a]);
    let fx = |a: usize| l2 * (sym(a, 0) * x[0] + sym(a, 1) * x[1]);
    Jet {
        y: Vector3::new(scale * x[0], scale * x[1], f),
        dy: [Vector3::new(scale, 0.0, fx(0)), Vector3::new(0.0, scale, fx(1))],
        ddy: [
            [Vector3::new(0.0, 0.0, l2 * sym(0, 0)), Vector3::new(0.0, 0.0, l2 * sym(0, 1))],
            [Vector3::new(0.0, 0.0, l2 * sym(1, 0)), Vector3::new(0.0, 0.0, l2 * sym(1, 1))],
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_against_differences(spec: &SurfaceSpec) {
        let h = 1e-5;
        for x in [[0.0, 0.0], [0.3, -0.4], [-0.7, 0.6]] {
            let j = spec.jet(x);
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let (p, m) = (spec.jet(xp), spec.jet(xm));
                assert!(((p.y - m.y) / (2.0 * h) - j.dy[a]).amax() < 1e-8);
                for b in 0..2 {
                    assert!(((p.dy[b] - m.dy[b]) / (2.0 * h) - j.ddy[a][b]).amax() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn sphere_jet_matches_differences() {
        check_against_differences(&SurfaceSpec::SphereCap { radius: 1.7, rho: 0.6, center: [0.1, 0.2, 0.3] });
    }

    #[test]
    fn graph_jets_match_differences() {
        check_against_differences(&SurfaceSpec::Paraboloid { scale: 0.8, curvature: 1.3 });
        check_against_differences(&SurfaceSpec::QuadraticGraph { scale: 0.5, hessian: [[1.0, 0.2], [0.2, 2.0]] });
    }

    #[test]
    fn sphere_points_lie_on_sphere() {
        let spec = SurfaceSpec::SphereCap { radius: 2.0, rho: 0.9, center: [1.0, 0.0, -1.0] };
        for x in [[0.0, 0.0], [0.5, 0.5], [1.0, 0.0]] {
            let y = spec.jet(x).y;
            assert!(((y - Vector3::new(1.0, 0.0, -1.0)).norm() - 2.0).abs() < 1e-14);
        }
    }
}
