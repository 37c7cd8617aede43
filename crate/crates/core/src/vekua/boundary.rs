use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use super::VekuaError;
use crate::grid::{DiskGrid, Field};

const DEGENERACY_TOL: f64 = 1e-12;

/// Boundary symbol and data of Re{λ̄ ẇ} = φ̇ built from a tangent field.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// (λ̃₁, λ̃₂) = (ã(y,₁, v), ã(y,₂, v)).
    pub lambda_tilde: Vec<[f64; 2]>,
    /// Unimodular symbol (λ̃₁ + iλ̃₂)/|λ̃|.
    pub lambda: Vec<Complex64>,
    /// γ̃̇/|λ̃|.
    pub phi: Vec<f64>,
}

/// Builds λ and φ̇ on the boundary samples from the tangents y,ᵢ, the metric at
/// the boundary points, the tangent field v and the rate γ̃̇.
pub fn boundary_data(
    tangents: &[[Vector3<f64>; 2]],
    metric: &[Matrix3<f64>],
    v: &[Vector3<f64>],
    gamma_dot: &[f64],
) -> Result<BoundaryData, VekuaError> {
    let n = tangents.len();
    for len in [metric.len(), v.len(), gamma_dot.len()] {
        if len != n {
            return Err(VekuaError::Length { expected: n, found: len });
        }
    }
    let mut out =
        BoundaryData { lambda_tilde: Vec::with_capacity(n), lambda: Vec::with_capacity(n), phi: Vec::with_capacity(n) };
    for j in 0..n {
        let av = metric[j] * v[j];
        let lt = [tangents[j][0].dot(&av), tangents[j][1].dot(&av)];
        let norm2 = lt[0] * lt[0] + lt[1] * lt[1];
        if norm2 <= DEGENERACY_TOL {
            return Err(VekuaError::BoundaryDegeneracy { sample: j, norm: norm2 });
        }
        let s = norm2.sqrt();
        out.lambda_tilde.push(lt);
        out.lambda.push(Complex64::new(lt[0] / s, lt[1] / s));
        out.phi.push(gamma_dot[j] / s);
    }
    Ok(out)
}

/// Angle index in the swapped plane ζ = x² + i x¹ of angle index `j` in the
/// x-plane (the map is an involution).
#[inline]
pub fn swap_angle(j: usize, n_theta: usize) -> usize {
    (n_theta / 4 + n_theta - j % n_theta) % n_theta
}

/// Node of the swapped plane holding x-plane node `node`.
pub fn z_node_of(grid: DiskGrid, node: usize) -> usize {
    if node == 0 {
        return 0;
    }
    let (k, j) = grid.ring_angle(node);
    grid.index(k, swap_angle(j, grid.n_theta))
}

/// Inverse of [`z_node_of`] (the same map).
pub fn x_node_of(grid: DiskGrid, node: usize) -> usize {
    z_node_of(grid, node)
}

/// Re-indexes a field from the x-plane to the swapped plane (or back).
/// Requires n_theta divisible by 4 so that grid nodes map onto grid nodes.
pub fn to_z_plane<T: Clone>(field: &Field<T>) -> Field<T> {
    let g = field.grid();
    debug_assert!(g.n_theta.is_multiple_of(4));
    Field::from_nodes(g, |i| field[z_node_of(g, i)].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_maps_points() {
        let g = DiskGrid::new(8, 32).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            let q = g.point(z_node_of(g, i));
            assert!((q[0] - p[1]).abs() < 1e-14 && (q[1] - p[0]).abs() < 1e-14);
            assert_eq!(x_node_of(g, z_node_of(g, i)), i);
        }
    }

    #[test]
    fn first_tangent_gives_unit_symbol() {
        let t = [[Vector3::x(), Vector3::y()]; 4];
        let out = boundary_data(&t, &[Matrix3::identity(); 4], &[Vector3::x(); 4], &[0.0; 4]).unwrap();
        assert!(out.lambda.iter().all(|l| *l == Complex64::new(1.0, 0.0)));
        assert!(out.phi.iter().all(|p| *p == 0.0));
        let bad = boundary_data(&t, &[Matrix3::identity(); 4], &[Vector3::z(); 4], &[0.0; 4]);
        assert!(matches!(bad, Err(VekuaError::BoundaryDegeneracy { .. })));
    }
}
