use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{
    cell_stencil, frequency, gauss_legendre, lagrange_weights, ComplexField, DiskGrid, Field, PolarDiff,
};

const GAUSS_POINTS: usize = 8;

/// T f(z) = -(1/π) ∬_D f(ζ)/(ζ - z) dξdη on a [`DiskGrid`].
///
/// Works mode by mode in θ: the angular mode m of f feeds mode m-1 of T f
/// through one-dimensional radial integrals, evaluated with cubic interpolation
/// (using the parity of each mode through the origin) and Gauss quadrature per cell.
#[derive(Debug, Clone)]
pub struct PompeiuOperator {
    diff: PolarDiff,
    /// Gauss points of each radial cell.
    points: Vec<Vec<f64>>,
    /// Quadrature weight times radial Lagrange weights at each Gauss point.
    weights: Vec<Vec<[f64; 4]>>,
}

impl PompeiuOperator {
    pub fn new(grid: DiskGrid) -> Self {
        let (gx, gw) = gauss_legendre(GAUSS_POINTS);
        let h = grid.h();
        let mut points = Vec::with_capacity(grid.n_r);
        let mut weights = Vec::with_capacity(grid.n_r);
        for c in 0..grid.n_r {
            let st = cell_stencil(c, grid.n_r);
            let nodes: Vec<f64> = st.iter().map(|&q| q as f64 * h).collect();
            let xs: Vec<f64> = gx.iter().map(|x| (c as f64 + 0.5 + 0.5 * x) * h).collect();
            let ws = xs
                .iter()
                .zip(&gw)
                .map(|(x, w)| {
                    let l = lagrange_weights(&nodes, *x);
                    let s = 0.5 * h * w;
                    [l[0] * s, l[1] * s, l[2] * s, l[3] * s]
                })
                .collect();
            points.push(xs);
            weights.push(ws);
        }
        Self { diff: PolarDiff::new(grid), points, weights }
    }

    pub fn grid(&self) -> DiskGrid {
        self.diff.grid()
    }

    pub fn apply(&self, f: &ComplexField) -> ComplexField {
        let g = self.grid();
        let (nr, nt) = (g.n_r, g.n_theta);
        let modes = self.diff.ring_modes(f);
        let center = *f.center();
        let h = g.h();
        // per source bin: (target bin, values on rings 1..=nr, center contribution)
        let contributions: Vec<(usize, Vec<Complex64>, Complex64)> = (0..nt)
            .into_par_iter()
            .filter(|&b| 2 * b != nt)
            .map(|b| {
                let m = frequency(b, nt);
                let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let val = |q: isize| -> Complex64 {
                    match q {
                        0 if m == 0 => center,
                        0 => Complex64::new(0.0, 0.0),
                        q if q > 0 => modes[q as usize - 1][b],
                        q => modes[(-q) as usize - 1][b] * sign,
                    }
                };
                // weighted interpolated samples at every Gauss point
                let cells: Vec<Vec<Complex64>> = (0..nr)
                    .map(|c| {
                        let st = cell_stencil(c, nr);
                        let v = [val(st[0]), val(st[1]), val(st[2]), val(st[3])];
                        self.weights[c].iter().map(|l| v[0] * l[0] + v[1] * l[1] + v[2] * l[2] + v[3] * l[3]).collect()
                    })
                    .collect();
                let mut ring = vec![Complex64::new(0.0, 0.0); nr];
                let mut mid = Complex64::new(0.0, 0.0);
                if m >= 1 {
                    let p = (m - 1) as i32;
                    if m == 1 {
                        mid = -2.0 * cells.iter().flatten().sum::<Complex64>();
                    }
                    for k in 1..=nr {
                        let rk = k as f64 * h;
                        let mut s = Complex64::new(0.0, 0.0);
                        for c in k..nr {
                            for (v, x) in cells[c].iter().zip(&self.points[c]) {
                                s += v * (rk / x).powi(p);
                            }
                        }
                        ring[k - 1] = -2.0 * s;
                    }
                } else {
                    let p = (-m) as i32;
                    for k in 1..=nr {
                        let rk = k as f64 * h;
                        let mut s = Complex64::new(0.0, 0.0);
                        for c in 0..k {
                            for (v, x) in cells[c].iter().zip(&self.points[c]) {
                                s += v * (x * (x / rk).powi(p));
                            }
                        }
                        ring[k - 1] = 2.0 * s / rk;
                    }
                }
                let target = (m - 1).rem_euclid(nt as i64) as usize;
                (target, ring, mid)
            })
            .collect();
        let mut out_modes = vec![vec![Complex64::new(0.0, 0.0); nt]; nr];
        let mut out_center = Complex64::new(0.0, 0.0);
        for (target, ring, mid) in contributions {
            for (k, v) in ring.into_iter().enumerate() {
                out_modes[k][target] += v;
            }
            out_center += mid;
        }
        let mut out = Field::filled(g, Complex64::new(0.0, 0.0));
        out[0] = out_center;
        for (k, row) in out_modes.iter().enumerate() {
            let vals = self.diff.synthesize(row);
            out.values_mut()[g.ring(k + 1)].copy_from_slice(&vals);
        }
        out
    }
}

/// Direct evaluation of T f(z) for a closed-form f, in polar coordinates about z:
/// T f(z) = -(1/π) ∫₀^{2π} ∫₀^{R(φ)} f(z + s e^{iφ}) e^{-iφ} ds dφ.
pub fn pompeiu_reference(f: impl Fn(Complex64) -> Complex64, z: Complex64, n_phi: usize, n_s: usize) -> Complex64 {
    let (gx, gw) = gauss_legendre(n_s);
    // exact in φ up to the kink of R at |z| = 1; split [0, 2π) into n_phi Gauss panels
    let (px, pw) = gauss_legendre(8);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    let base = if z.norm() > 0.0 { z.arg() } else { 0.0 };
    for p in 0..n_phi {
        for (xp, wp) in px.iter().zip(&pw) {
            let phi = base + (p as f64 + 0.5 + 0.5 * xp) * dphi;
            let e = Complex64::from_polar(1.0, phi);
            let proj = (z.conj() * e).re;
            let r = -proj + (proj * proj + 1.0 - z.norm_sqr()).max(0.0).sqrt();
            let mut inner = Complex64::new(0.0, 0.0);
            for (xs, ws) in gx.iter().zip(&gw) {
                let s = 0.5 * r * (1.0 + xs);
                inner += f(z + s * e) * (0.5 * r * ws);
            }
            acc += inner * e.conj() * (0.5 * dphi * wp);
        }
    }
    -acc / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_of(g: DiskGrid, i: usize) -> Complex64 {
        let p = g.point(i);
        Complex64::new(p[0], p[1])
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = DiskGrid::new(16, 32).unwrap();
        let t = PompeiuOperator::new(g).apply(&Field::filled(g, Complex64::new(0.0, 0.0)));
        assert_eq!(t.sup_norm(), 0.0);
    }

    #[test]
    fn polynomial_images() {
        let g = DiskGrid::new(16, 32).unwrap();
        let op = PompeiuOperator::new(g);
        let one = op.apply(&Field::filled(g, Complex64::new(1.0, 0.0)));
        let z2 = op.apply(&Field::from_nodes(g, |i| z_of(g, i).powi(2)));
        for i in 0..g.len() {
            let z = z_of(g, i);
            assert!((one[i] - z.conj()).norm() < 1e-12);
            assert!((z2[i] - (z * z * z.conj() - z)).norm() < 1e-12);
        }
    }

    #[test]
    fn reference_quadrature_of_constant() {
        for z in [Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.5), Complex64::new(0.6, 0.8)] {
            let t = pompeiu_reference(|_| Complex64::new(1.0, 0.0), z, 64, 8);
            assert!((t - z.conj()).norm() < 1e-10, "{z} {t}");
        }
    }

    #[test]
    fn matches_reference_for_exponential() {
        let g = DiskGrid::new(16, 32).unwrap();
        let op = PompeiuOperator::new(g);
        let t = op.apply(&Field::from_nodes(g, |i| z_of(g, i).exp()));
        for i in [0, g.index(4, 3), g.index(16, 9)] {
            let r = pompeiu_reference(|z| z.exp(), z_of(g, i), 128, 24);
            assert!((t[i] - r).norm() < 1e-6, "{i}: {} vs {}", t[i], r);
        }
    }
}
