//! Polar grid on the closed unit disk, sampled fields and spectral/FD derivatives.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut, Range};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid too coarse: n_r = {n_r} (need >= 8), n_theta = {n_theta} (need >= 16)")]
    TooCoarse { n_r: usize, n_theta: usize },
    #[error("n_theta = {0} must be even")]
    OddAngles(usize),
    #[error("field length {found} does not match grid node count {expected}")]
    Length { expected: usize, found: usize },
}

/// Polar tensor grid: center node plus `n_r` rings at r_k = k/n_r, each with
/// `n_theta` uniform angles θ_j = 2πj/n_theta. Node 0 is the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskGrid {
    pub n_r: usize,
    pub n_theta: usize,
}

impl DiskGrid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self, GridError> {
        if n_r < 8 || n_theta < 16 {
            return Err(GridError::TooCoarse { n_r, n_theta });
        }
        if !n_theta.is_multiple_of(2) {
            return Err(GridError::OddAngles(n_theta));
        }
        Ok(Self { n_r, n_theta })
    }

    pub fn len(&self) -> usize {
        1 + self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    /// Node index of ring `k` (1..=n_r), angle `j`.
    #[inline]
    pub fn index(&self, k: usize, j: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.n_r);
        1 + (k - 1) * self.n_theta + (j % self.n_theta)
    }

    /// Node at signed radial index `q` along the diameter through angle `j`:
    /// negative `q` wraps through the origin to the opposite angle.
    #[inline]
    pub fn extended(&self, q: isize, j: usize) -> usize {
        match q {
            0 => 0,
            q if q > 0 => self.index(q as usize, j),
            q => self.index((-q) as usize, j + self.n_theta / 2),
        }
    }

    pub fn ring(&self, k: usize) -> Range<usize> {
        let s = self.index(k, 0);
        s..s + self.n_theta
    }

    pub fn boundary(&self) -> Range<usize> {
        self.ring(self.n_r)
    }

    pub fn radius(&self, k: usize) -> f64 {
        k as f64 / self.n_r as f64
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_theta as f64
    }

    /// (ring, angle) of a node; the center reports (0, 0).
    pub fn ring_angle(&self, node: usize) -> (usize, usize) {
        if node == 0 {
            (0, 0)
        } else {
            (1 + (node - 1) / self.n_theta, (node - 1) % self.n_theta)
        }
    }

    pub fn polar(&self, node: usize) -> (f64, f64) {
        let (k, j) = self.ring_angle(node);
        (self.radius(k), self.angle(j))
    }

    pub fn point(&self, node: usize) -> [f64; 2] {
        let (r, t) = self.polar(node);
        [r * t.cos(), r * t.sin()]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Node nearest to a point of the closed disk.
    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let q = self.point(i);
            let d = (q[0] - p[0]).hypot(q[1] - p[1]);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Absolute value used for sup-norms of real and complex samples.
pub trait Magnitude {
    fn magnitude(&self) -> f64;
}

impl Magnitude for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Magnitude for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Samples of a quantity at every node of a [`DiskGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: DiskGrid,
    values: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Clone> Field<T> {
    pub fn filled(grid: DiskGrid, v: T) -> Self {
        Self { grid, values: vec![v; grid.len()] }
    }
}

impl<T> Field<T> {
    pub fn from_vec(grid: DiskGrid, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), found: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: DiskGrid, f: impl Fn([f64; 2]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn from_nodes(grid: DiskGrid, f: impl Fn(usize) -> T) -> Self {
        Self { grid, values: (0..grid.len()).map(f).collect() }
    }

    pub fn grid(&self) -> DiskGrid {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn center(&self) -> &T {
        &self.values[0]
    }

    pub fn ring(&self, k: usize) -> &[T] {
        &self.values[self.grid.ring(k)]
    }

    pub fn boundary(&self) -> &[T] {
        &self.values[self.grid.boundary()]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Field<U> {
        Field { grid: self.grid, values: self.values.iter().map(f).collect() }
    }

    pub fn zip_map<S, U>(&self, other: &Field<S>, f: impl Fn(&T, &S) -> U) -> Field<U> {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect() }
    }
}

impl<T: Magnitude> Field<T> {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(Magnitude::magnitude).fold(0.0, f64::max)
    }
}

impl<T> Index<usize> for Field<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for Field<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|&v| Complex64::new(v, 0.0))
    }

    pub fn sup_diff(&self, other: &RealField) -> f64 {
        self.zip_map(other, |a, b| (a - b).abs()).sup_norm()
    }
}

impl ComplexField {
    pub fn re(&self) -> RealField {
        self.map(|v| v.re)
    }

    pub fn im(&self) -> RealField {
        self.map(|v| v.im)
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|v| v.conj())
    }

    pub fn sup_diff(&self, other: &ComplexField) -> f64 {
        self.zip_map(other, |a, b| (a - b).norm()).sup_norm()
    }
}

/// Differentiation on the polar grid: trigonometric in θ, fourth-order finite
/// differences in r (through the origin along diameters, sixth-order one-sided
/// closures near r = 1),
/// Richardson-extrapolated first Fourier modes at the center.
#[derive(Clone)]
pub struct PolarDiff {
    grid: DiskGrid,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PolarDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolarDiff").field("grid", &self.grid).finish()
    }
}

/// Signed Fourier frequency of FFT bin `b` of length `n`.
#[inline]
pub fn frequency(b: usize, n: usize) -> i64 {
    if b <= n / 2 {
        b as i64
    } else {
        b as i64 - n as i64
    }
}

impl PolarDiff {
    pub fn new(grid: DiskGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self { grid, fft: planner.plan_fft_forward(grid.n_theta), ifft: planner.plan_fft_inverse(grid.n_theta) }
    }

    pub fn grid(&self) -> DiskGrid {
        self.grid
    }

    /// Angular Fourier coefficients of every ring, normalized so that
    /// f(r_k, θ) = Σ_m c_m e^{imθ}. Row k-1 holds ring k.
    pub fn ring_modes(&self, f: &ComplexField) -> Vec<Vec<Complex64>> {
        let n = self.grid.n_theta as f64;
        (1..=self.grid.n_r)
            .map(|k| {
                let mut buf = f.ring(k).to_vec();
                self.fft.process(&mut buf);
                buf.iter_mut().for_each(|c| *c /= n);
                buf
            })
            .collect()
    }

    /// Inverse of [`ring_modes`] for a single ring.
    pub fn synthesize(&self, modes: &[Complex64]) -> Vec<Complex64> {
        let mut buf = modes.to_vec();
        self.ifft.process(&mut buf);
        buf
    }

    fn d_theta(&self, f: &ComplexField) -> ComplexField {
        let nt = self.grid.n_theta;
        let mut out = Field::filled(self.grid, Complex64::new(0.0, 0.0));
        for (row, k) in self.ring_modes(f).into_iter().zip(1..) {
            let mut modes = row;
            for (b, c) in modes.iter_mut().enumerate() {
                let m = frequency(b, nt);
                *c = if 2 * b == nt { Complex64::new(0.0, 0.0) } else { *c * Complex64::new(0.0, m as f64) };
            }
            let vals = self.synthesize(&modes);
            out.values[self.grid.ring(k)].copy_from_slice(&vals);
        }
        out
    }

    fn d_r(&self, f: &ComplexField) -> ComplexField {
        let g = self.grid;
        let nr = g.n_r as isize;
        let (h12, h60) = (12.0 * g.h(), 60.0 * g.h());
        let mut out = Field::filled(g, Complex64::new(0.0, 0.0));
        for k in 1..=nr {
            for j in 0..g.n_theta {
                let v = |q: isize| f.values[g.extended(q, j)];
                // sixth-order closures: the fourth-order one-sided stencils have
                // error constants large enough to dominate second derivatives
                let d = if k <= nr - 2 {
                    (v(k - 2) - 8.0 * v(k - 1) + 8.0 * v(k + 1) - v(k + 2)) / h12
                } else if k == nr - 1 {
                    (-2.0 * v(k - 5) + 15.0 * v(k - 4) - 50.0 * v(k - 3) + 100.0 * v(k - 2) - 150.0 * v(k - 1)
                        + 77.0 * v(k)
                        + 10.0 * v(k + 1))
                        / h60
                } else {
                    (10.0 * v(k - 6) - 72.0 * v(k - 5) + 225.0 * v(k - 4) - 400.0 * v(k - 3) + 450.0 * v(k - 2)
                        - 360.0 * v(k - 1)
                        + 147.0 * v(k))
                        / h60
                };
                out.values[g.index(k as usize, j)] = d;
            }
        }
        out
    }

    fn center_gradient(&self, f: &ComplexField) -> [Complex64; 2] {
        let g = self.grid;
        let h = g.h();
        let n = g.n_theta as f64;
        let mode = |k: usize, sign: f64| -> Complex64 {
            f.ring(k)
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -sign * g.angle(j)))
                .sum::<Complex64>()
                / n
        };
        let alpha = |sign: f64| (4.0 * mode(1, sign) / h - mode(2, sign) / (2.0 * h)) / 3.0;
        let (ap, am) = (alpha(1.0), alpha(-1.0));
        [ap + am, Complex64::new(0.0, 1.0) * (ap - am)]
    }

    /// Cartesian gradient (∂₁f, ∂₂f) of a complex field.
    pub fn gradient_c(&self, f: &ComplexField) -> [ComplexField; 2] {
        let g = self.grid;
        let fr = self.d_r(f);
        let ft = self.d_theta(f);
        let mut dx = Field::filled(g, Complex64::new(0.0, 0.0));
        let mut dy = dx.clone();
        for i in 1..g.len() {
            let (r, t) = g.polar(i);
            let (s, c) = t.sin_cos();
            dx.values[i] = c * fr.values[i] - s / r * ft.values[i];
            dy.values[i] = s * fr.values[i] + c / r * ft.values[i];
        }
        let [cx, cy] = self.center_gradient(f);
        dx.values[0] = cx;
        dy.values[0] = cy;
        [dx, dy]
    }

    pub fn gradient(&self, f: &RealField) -> [RealField; 2] {
        let [dx, dy] = self.gradient_c(&f.to_complex());
        [dx.re(), dy.re()]
    }

    /// Second derivatives ∂_i∂_j f, mixed entries symmetrized.
    pub fn hessian(&self, f: &RealField) -> [[RealField; 2]; 2] {
        let [fx, fy] = self.gradient(f);
        let [fxx, fxy] = self.gradient(&fx);
        let [fyx, fyy] = self.gradient(&fy);
        let mixed = fxy.zip_map(&fyx, |a, b| 0.5 * (a + b));
        [[fxx, mixed.clone()], [mixed, fyy]]
    }

    /// ∂_z̄ f = ½(∂₁ + i∂₂) f.
    pub fn dzbar(&self, f: &ComplexField) -> ComplexField {
        let [dx, dy] = self.gradient_c(f);
        dx.zip_map(&dy, |a, b| 0.5 * (a + Complex64::new(0.0, 1.0) * b))
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Lagrange basis weights of `nodes` evaluated at `x`.
pub fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, xi)| nodes.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, xj)| (x - xj) / (xi - xj)).product())
        .collect()
}

/// Four radial stencil indices used to interpolate inside cell [c h, (c+1) h].
pub fn cell_stencil(c: usize, n_r: usize) -> [isize; 4] {
    let c = c as isize;
    if c + 2 > n_r as isize {
        [c - 2, c - 1, c, c + 1]
    } else {
        [c - 1, c, c + 1, c + 2]
    }
}

impl DiskGrid {
    /// Bicubic interpolation stencil in extended polar coordinates: node indices
    /// and weights such that f(p) ≈ Σ w f[node]. Accurate to fourth order for
    /// smooth fields.
    pub fn interpolation_stencil(&self, p: [f64; 2]) -> Vec<(usize, f64)> {
        let rho = p[0].hypot(p[1]).min(1.0);
        let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
        let h = self.h();
        let c = ((rho / h) as usize).min(self.n_r - 1);
        let rq = cell_stencil(c, self.n_r);
        let rnodes: Vec<f64> = rq.iter().map(|&q| q as f64 * h).collect();
        let lr = lagrange_weights(&rnodes, rho);
        let dt = 2.0 * PI / self.n_theta as f64;
        let t = phi / dt;
        let j0 = t.floor() as isize;
        let tnodes: Vec<f64> = (-1..3).map(|a| (j0 + a) as f64).collect();
        let lt = lagrange_weights(&tnodes, t);
        let nt = self.n_theta as isize;
        let mut out = Vec::with_capacity(16);
        for (q, wr) in rq.iter().zip(&lr) {
            if *q == 0 {
                out.push((0, *wr));
                continue;
            }
            for (a, wt) in (-1..3).zip(&lt) {
                let j = (j0 + a).rem_euclid(nt) as usize;
                out.push((self.extended(*q, j), wr * wt));
            }
        }
        out
    }
}

impl<T> Field<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::iter::Sum<T>,
{
    /// Value at an arbitrary point of the closed disk.
    pub fn interpolate(&self, p: [f64; 2]) -> T {
        self.grid.interpolation_stencil(p).into_iter().map(|(i, w)| self.values[i] * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DiskGrid {
        DiskGrid::new(32, 64).unwrap()
    }

    #[test]
    fn interpolation_is_fourth_order() {
        let f = |p: [f64; 2]| (1.3 * p[0] - 0.4 * p[1]).sin() + p[0] * p[1] * p[1];
        let p = [0.337, -0.291];
        let err = |n: usize| {
            let g = DiskGrid::new(n, 2 * n).unwrap();
            (Field::from_fn(g, f).interpolate(p) - f(p)).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < 1e-5 && e1 / e2 > 10.0, "{e1} {e2}");
        let g = grid();
        let fld = Field::from_fn(g, f);
        let node = g.index(5, 7);
        assert!((fld.interpolate(g.point(node)) - fld[node]).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(DiskGrid::new(4, 32), Err(GridError::TooCoarse { .. })));
        assert!(matches!(DiskGrid::new(8, 33), Err(GridError::OddAngles(33))));
    }

    #[test]
    fn extended_index_wraps_through_origin() {
        let g = grid();
        assert_eq!(g.extended(0, 5), 0);
        assert_eq!(g.extended(-2, 3), g.index(2, 3 + 32));
        let p = g.point(g.extended(-2, 3));
        let q = g.point(g.index(2, 3));
        assert!((p[0] + q[0]).abs() < 1e-14 && (p[1] + q[1]).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_polynomial() {
        let g = grid();
        let d = PolarDiff::new(g);
        let f = RealField::from_fn(g, |[x, y]| x * x * y + 3.0 * y - x);
        let [fx, fy] = d.gradient(&f);
        let ex = RealField::from_fn(g, |[x, y]| 2.0 * x * y - 1.0);
        let ey = RealField::from_fn(g, |[x, _]| x * x + 3.0);
        assert!(fx.sup_diff(&ex) < 1e-10, "{}", fx.sup_diff(&ex));
        assert!(fy.sup_diff(&ey) < 1e-10);
    }

    #[test]
    fn gradient_converges_fourth_order() {
        let err = |n: usize| {
            let g = DiskGrid::new(n, 2 * n).unwrap();
            let d = PolarDiff::new(g);
            let f = RealField::from_fn(g, |[x, y]| (1.3 * x - 0.7 * y).sin() * (0.4 * y).exp());
            let [fx, _] = d.gradient(&f);
            let ex = RealField::from_fn(g, |[x, y]| 1.3 * (1.3 * x - 0.7 * y).cos() * (0.4 * y).exp());
            fx.sup_diff(&ex)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 / e2 > 10.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn dzbar_annihilates_holomorphic() {
        let g = grid();
        let d = PolarDiff::new(g);
        let f = ComplexField::from_fn(g, |[x, y]| Complex64::new(x, y).exp());
        assert!(d.dzbar(&f).sup_norm() < 1e-6);
        let zb = ComplexField::from_fn(g, |[x, y]| Complex64::new(x, -y));
        let one = d.dzbar(&zb);
        assert!(one.values().iter().all(|v| (v - 1.0).norm() < 1e-10));
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn lagrange_reproduces_cubic() {
        let nodes = [-1.0, 0.0, 1.5, 2.0];
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let w = lagrange_weights(&nodes, 0.7);
        let v: f64 = w.iter().zip(nodes).map(|(w, x)| w * f(x)).sum();
        assert!((v - f(0.7)).abs() < 1e-13);
    }
}
