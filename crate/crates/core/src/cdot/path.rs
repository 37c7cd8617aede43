use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{cell_stencil, gauss_legendre, lagrange_weights, ComplexField, DiskGrid, Field, RealField};

const GAUSS_POINTS: usize = 4;

/// Line integrals of a one-form ω₁dx¹ + ω₂dx² along straight segments from a
/// base point to every grid node.
#[derive(Debug, Clone)]
pub struct PathIntegrator {
    grid: DiskGrid,
    base: usize,
    gx: Vec<f64>,
    gw: Vec<f64>,
    /// Lagrange weights of the radial stencil at each Gauss point of each cell.
    cell_weights: Vec<Vec<[f64; 4]>>,
}

impl PathIntegrator {
    /// Integrator based at grid node `base` (0 is the disk center).
    pub fn new(grid: DiskGrid, base: usize) -> Self {
        let (gx, gw) = gauss_legendre(GAUSS_POINTS);
        let h = grid.h();
        let cell_weights = (0..grid.n_r)
            .map(|c| {
                let st = cell_stencil(c, grid.n_r);
                let nodes: Vec<f64> = st.iter().map(|&q| q as f64 * h).collect();
                gx.iter()
                    .map(|x| {
                        let l = lagrange_weights(&nodes, (c as f64 + 0.5 + 0.5 * x) * h);
                        [l[0], l[1], l[2], l[3]]
                    })
                    .collect()
            })
            .collect();
        Self { grid, base: base.min(grid.len() - 1), gx, gw, cell_weights }
    }

    pub fn centered(grid: DiskGrid) -> Self {
        Self::new(grid, 0)
    }

    pub fn grid(&self) -> DiskGrid {
        self.grid
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn base_point(&self) -> [f64; 2] {
        self.grid.point(self.base)
    }

    pub fn integrate(&self, w1: &RealField, w2: &RealField) -> RealField {
        self.integrate_c(&w1.to_complex(), &w2.to_complex()).re()
    }

    pub fn integrate_c(&self, w1: &ComplexField, w2: &ComplexField) -> ComplexField {
        if self.base == 0 {
            self.rays(w1, w2)
        } else {
            self.segments(w1, w2)
        }
    }

    /// Cumulative Gauss quadrature along every diameter, cubic interpolation
    /// through the origin.
    fn rays(&self, w1: &ComplexField, w2: &ComplexField) -> ComplexField {
        let g = self.grid;
        let h = g.h();
        let nr = g.n_r;
        let cols: Vec<Vec<Complex64>> = (0..g.n_theta)
            .into_par_iter()
            .map(|j| {
                let (s, c) = g.angle(j).sin_cos();
                let val = |q: isize| {
                    let i = g.extended(q, j);
                    w1[i] * c + w2[i] * s
                };
                let mut acc = Complex64::new(0.0, 0.0);
                let mut out = Vec::with_capacity(nr);
                for cell in 0..nr {
                    let st = cell_stencil(cell, nr);
                    let v = [val(st[0]), val(st[1]), val(st[2]), val(st[3])];
                    for (l, w) in self.cell_weights[cell].iter().zip(&self.gw) {
                        acc += (v[0] * l[0] + v[1] * l[1] + v[2] * l[2] + v[3] * l[3]) * (0.5 * h * w);
                    }
                    out.push(acc);
                }
                out
            })
            .collect();
        let mut res = Field::filled(g, Complex64::new(0.0, 0.0));
        for (j, col) in cols.into_iter().enumerate() {
            for (k, v) in col.into_iter().enumerate() {
                res[g.index(k + 1, j)] = v;
            }
        }
        res
    }

    /// Straight segments from an off-center base with bicubic interpolation.
    fn segments(&self, w1: &ComplexField, w2: &ComplexField) -> ComplexField {
        let g = self.grid;
        let p0 = g.point(self.base);
        let vals: Vec<Complex64> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let p = g.point(i);
                let d = [p[0] - p0[0], p[1] - p0[1]];
                let len = d[0].hypot(d[1]);
                if len == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let pieces = (len / g.h()).ceil().max(1.0) as usize;
                let mut acc = Complex64::new(0.0, 0.0);
                for q in 0..pieces {
                    for (x, w) in self.gx.iter().zip(&self.gw) {
                        let s = (q as f64 + 0.5 + 0.5 * x) / pieces as f64;
                        let pt = [p0[0] + s * d[0], p0[1] + s * d[1]];
                        let form = w1.interpolate(pt) * d[0] + w2.interpolate(pt) * d[1];
                        acc += form * (0.5 * w / pieces as f64);
                    }
                }
                acc
            })
            .collect();
        Field::from_vec(g, vals).expect("grid length")
    }

    /// Circulation of the one-form around every polar cell, a closedness check.
    pub fn loop_defect(&self, w1: &RealField, w2: &RealField) -> f64 {
        let g = self.grid;
        let mut worst = 0.0f64;
        let dt = 2.0 * PI / g.n_theta as f64;
        for k in 1..g.n_r {
            for j in 0..g.n_theta {
                let corners = [g.index(k, j), g.index(k + 1, j), g.index(k + 1, j + 1), g.index(k, j + 1)];
                let mut circ = 0.0;
                for e in 0..4 {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    let (pa, pb) = (g.point(a), g.point(b));
                    let (f1, f2) = (0.5 * (w1[a] + w1[b]), 0.5 * (w2[a] + w2[b]));
                    circ += f1 * (pb[0] - pa[0]) + f2 * (pb[1] - pa[1]);
                }
                let area = 0.5 * ((k as f64 + 1.0).powi(2) - (k as f64).powi(2)) * g.h().powi(2) * dt;
                worst = worst.max((circ / area).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_field() {
        let g = DiskGrid::new(32, 64).unwrap();
        let f = |p: [f64; 2]| (p[0] * 0.7).sin() * (1.0 + p[1] * p[1]);
        let w1 = Field::from_fn(g, |p| 0.7 * (p[0] * 0.7).cos() * (1.0 + p[1] * p[1]));
        let w2 = Field::from_fn(g, |p| (p[0] * 0.7).sin() * 2.0 * p[1]);
        for base in [0, g.index(3, 5)] {
            let pi = PathIntegrator::new(g, base);
            let out = pi.integrate(&w1, &w2);
            let f0 = f(g.point(base));
            let err = (0..g.len()).map(|i| (out[i] - (f(g.point(i)) - f0)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-5, "base {base}: {err}");
            assert_eq!(out[base], 0.0);
        }
    }

    #[test]
    fn constant_form_gives_coordinate() {
        let g = DiskGrid::new(8, 16).unwrap();
        let one = Field::filled(g, 1.0);
        let zero = Field::filled(g, 0.0);
        let out = PathIntegrator::centered(g).integrate(&one, &zero);
        for i in 0..g.len() {
            assert!((out[i] - g.point(i)[0]).abs() < 1e-13);
        }
    }
}
