use nalgebra::{Matrix2, Vector3};

use super::{SurfaceError, SurfaceState};
use crate::ambient::{christoffel_at, inner, AmbientMetric};
use crate::grid::{Field, PolarDiff, RealField};

/// Fundamental forms of the displaced surface y + z, recomputed from scratch.
#[derive(Debug, Clone)]
pub struct RebuiltGeometry {
    pub g: Vec<Matrix2<f64>>,
    pub b: Vec<Matrix2<f64>>,
    pub normal: Vec<Vector3<f64>>,
    pub g_det: RealField,
    pub b_det: RealField,
    pub k: RealField,
}

/// Rebuilds y + z using spectral/finite-difference derivatives of the
/// displacement and analytic derivatives of y. The normal keeps the
/// orientation of the undeformed one.
pub fn rebuild_geometry(
    surface: &SurfaceState,
    metric: &AmbientMetric,
    z: &[Vector3<f64>],
) -> Result<RebuiltGeometry, SurfaceError> {
    let grid = surface.grid;
    let diff = PolarDiff::new(grid);
    let mut dz = [[Vec::new(), Vec::new(), Vec::new()], [Vec::new(), Vec::new(), Vec::new()]];
    let mut ddz: [[[Vec<f64>; 3]; 2]; 2] = Default::default();
    for c in 0..3 {
        let f: RealField = Field::from_nodes(grid, |i| z[i][c]);
        let [d1, d2] = diff.gradient(&f);
        dz[0][c] = d1.into_vec();
        dz[1][c] = d2.into_vec();
        let h = diff.hessian(&f);
        for i in 0..2 {
            for j in 0..2 {
                ddz[i][j][c] = h[i][j].values().to_vec();
            }
        }
    }
    let n = grid.len();
    let (mut g, mut b, mut normal) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (node, p) in surface.points.iter().enumerate() {
        let y = p.y + z[node];
        let a = metric.check_positive(&y)?;
        let chr = christoffel_at(metric, &y)?;
        let tv = |i: usize| p.dy[i] + Vector3::new(dz[i][0][node], dz[i][1][node], dz[i][2][node]);
        let t = [tv(0), tv(1)];
        let tt =
            |i: usize, j: usize| p.ddy[i][j] + Vector3::new(ddz[i][j][0][node], ddz[i][j][1][node], ddz[i][j][2][node]);
        let a_inv = a
            .try_inverse()
            .ok_or(SurfaceError::Geometry { node, reason: "singular ambient metric on deformed surface".into() })?;
        let mut nn = a_inv * t[0].cross(&t[1]);
        nn /= inner(&a, &nn, &nn).sqrt();
        if inner(&a, &nn, &p.n) < 0.0 {
            nn = -nn;
        }
        g.push(Matrix2::from_fn(|i, j| inner(&a, &t[i], &t[j])));
        b.push(Matrix2::from_fn(|i, j| inner(&a, &(tt(i, j) + chr.contract(&t[i], &t[j])), &nn)));
        normal.push(nn);
    }
    let g_det = Field::from_nodes(grid, |i| g[i].determinant());
    let b_det = Field::from_nodes(grid, |i| b[i].determinant());
    let k = b_det.zip_map(&g_det, |b, g| b / g);
    Ok(RebuiltGeometry { g, b, normal, g_det, b_det, k })
}
