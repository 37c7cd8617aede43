use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::VekuaError;
use crate::grid::{ComplexField, DiskGrid, Field, PolarDiff};

const UNIT_TOL: f64 = 1e-8;
/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-6;

/// Winding number of a unimodular boundary symbol sampled counter-clockwise.
pub fn index_of(lambda: &[Complex64]) -> Result<i64, VekuaError> {
    if lambda.is_empty() {
        return Err(VekuaError::Length { expected: 1, found: 0 });
    }
    for (j, l) in lambda.iter().enumerate() {
        if (l.norm() - 1.0).abs() > UNIT_TOL {
            return Err(VekuaError::NotUnimodular { sample: j, modulus: l.norm() });
        }
    }
    let mut total = 0.0;
    for j in 0..lambda.len() {
        let d = (lambda[(j + 1) % lambda.len()] / lambda[j]).arg();
        if d.abs() >= PI * (1.0 - 1e-12) {
            return Err(VekuaError::UnderResolved { sample: j, jump: d });
        }
        total += d;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

fn fft_normalized(data: &[Complex64]) -> Vec<Complex64> {
    let n = data.len();
    let mut buf = data.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter_mut().for_each(|c| *c /= n as f64);
    buf
}

/// Values of Σ_k c_k z^k at every grid node, k = 0..coeffs.len().
pub fn eval_holomorphic(diff: &PolarDiff, coeffs: &[Complex64]) -> ComplexField {
    let g = diff.grid();
    let nt = g.n_theta;
    let mut out = Field::filled(g, Complex64::new(0.0, 0.0));
    out[0] = coeffs.first().copied().unwrap_or_default();
    for k in 1..=g.n_r {
        let r = g.radius(k);
        let mut bins = vec![Complex64::new(0.0, 0.0); nt];
        let mut rp = 1.0;
        for (deg, c) in coeffs.iter().enumerate() {
            if deg > 0 {
                rp *= r;
            }
            bins[deg % nt] += c * rp;
        }
        let vals = diff.synthesize(&bins);
        out.values_mut()[g.ring(k)].copy_from_slice(&vals);
    }
    out
}

/// Factorization λ = e^{inθ} e^{iμ(θ)} with μ single-valued, together with the
/// holomorphic extension Γ of μ (Re Γ = μ on the circle).
#[derive(Debug, Clone)]
pub struct CanonicalSymbol {
    pub index: i64,
    pub mu: Vec<f64>,
    /// Taylor coefficients of Γ.
    pub gamma: Vec<Complex64>,
}

impl CanonicalSymbol {
    pub fn new(lambda: &[Complex64]) -> Result<Self, VekuaError> {
        let n = index_of(lambda)?;
        let nt = lambda.len();
        if !nt.is_multiple_of(2) {
            return Err(VekuaError::Length { expected: nt + 1, found: nt });
        }
        let mut mu = Vec::with_capacity(nt);
        let mut prev = 0.0;
        for (j, l) in lambda.iter().enumerate() {
            let theta = 2.0 * PI * j as f64 / nt as f64;
            let raw = (l * Complex64::from_polar(1.0, -(n as f64) * theta)).arg();
            let v = if j == 0 { raw } else { prev + (raw - prev + PI).rem_euclid(2.0 * PI) - PI };
            mu.push(v);
            prev = v;
        }
        let modes = fft_normalized(&mu.iter().map(|&m| Complex64::new(m, 0.0)).collect::<Vec<_>>());
        let half = nt / 2;
        let mut gamma = vec![Complex64::new(0.0, 0.0); half + 1];
        gamma[0] = modes[0];
        for k in 1..half {
            gamma[k] = 2.0 * modes[k];
        }
        gamma[half] = Complex64::new(modes[half].re, 0.0);
        Ok(Self { index: n, mu, gamma })
    }

    /// Im Γ on the boundary samples.
    pub fn mu_conjugate(&self) -> Vec<f64> {
        let nt = self.mu.len();
        (0..nt)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / nt as f64;
                self.gamma.iter().enumerate().map(|(k, c)| (c * Complex64::from_polar(1.0, k as f64 * th)).im).sum()
            })
            .collect()
    }
}

/// Holomorphic solutions of Re{λ̄ w} = φ on the unit circle.
///
/// Precomputes the reduction of λ, the homogeneous basis (index n ≥ 0) and the
/// adjoint null basis of the boundary operator (n < 0).
#[derive(Debug, Clone)]
pub struct RhSolver {
    diff: PolarDiff,
    lambda: Vec<Complex64>,
    symbol: CanonicalSymbol,
    /// e^{iΓ} on the grid.
    factor: ComplexField,
    /// e^{Im Γ} on the boundary.
    weight: Vec<f64>,
    basis: Vec<ComplexField>,
    adjoint: Vec<Vec<f64>>,
}

impl RhSolver {
    pub fn new(grid: DiskGrid, lambda: &[Complex64]) -> Result<Self, VekuaError> {
        if lambda.len() != grid.n_theta {
            return Err(VekuaError::Length { expected: grid.n_theta, found: lambda.len() });
        }
        let diff = PolarDiff::new(grid);
        let symbol = CanonicalSymbol::new(lambda)?;
        let gamma_field = eval_holomorphic(&diff, &symbol.gamma);
        let factor = gamma_field.map(|g| (Complex64::new(0.0, 1.0) * g).exp());
        let weight = symbol.mu_conjugate().iter().map(|m| m.exp()).collect();
        let n = symbol.index;
        let mut solver =
            Self { diff, lambda: lambda.to_vec(), symbol, factor, weight, basis: Vec::new(), adjoint: Vec::new() };
        if n >= 0 {
            let n = n as usize;
            let mut polys = Vec::with_capacity(2 * n + 1);
            for k in 0..n {
                let mut a = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
                a[k] = Complex64::new(1.0, 0.0);
                a[2 * n - k] = Complex64::new(-1.0, 0.0);
                let b: Vec<Complex64> =
                    a.iter().map(|c| if c.re != 0.0 { Complex64::new(0.0, 1.0) } else { *c }).collect();
                polys.push(a);
                polys.push(b);
            }
            let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
            c[n] = Complex64::new(0.0, 1.0);
            polys.push(c);
            solver.basis = polys.iter().map(|p| solver.lift(p)).collect();
        } else {
            solver.adjoint = solver.adjoint_null_basis((-n) as usize);
        }
        Ok(solver)
    }

    pub fn grid(&self) -> DiskGrid {
        self.diff.grid()
    }

    pub fn diff(&self) -> &PolarDiff {
        &self.diff
    }

    pub fn index(&self) -> i64 {
        self.symbol.index
    }

    pub fn lambda(&self) -> &[Complex64] {
        &self.lambda
    }

    pub fn symbol(&self) -> &CanonicalSymbol {
        &self.symbol
    }

    /// Homogeneous solutions (2n+1 of them for n ≥ 0, none otherwise).
    pub fn basis(&self) -> &[ComplexField] {
        &self.basis
    }

    /// Left null vectors of the discrete boundary operator (n < 0).
    pub fn adjoint_basis(&self) -> &[Vec<f64>] {
        &self.adjoint
    }

    /// e^{iΓ} W for a polynomial W.
    fn lift(&self, poly: &[Complex64]) -> ComplexField {
        let w = eval_holomorphic(&self.diff, poly);
        w.zip_map(&self.factor, |a, b| a * b)
    }

    /// Boundary trace of Re{λ̄ w}.
    pub fn boundary_form(&self, w: &ComplexField) -> Vec<f64> {
        w.boundary().iter().zip(&self.lambda).map(|(w, l)| (l.conj() * w).re).collect()
    }

    /// Particular solution for data φ together with the solvability residuals
    /// (Fourier data the holomorphic class cannot absorb; empty for n ≥ 0).
    pub fn particular(&self, phi: &[f64]) -> Result<(ComplexField, Vec<f64>), VekuaError> {
        let nt = self.grid().n_theta;
        if phi.len() != nt {
            return Err(VekuaError::Length { expected: nt, found: phi.len() });
        }
        let d: Vec<Complex64> = phi.iter().zip(&self.weight).map(|(p, w)| Complex64::new(p * w, 0.0)).collect();
        let dm = fft_normalized(&d);
        let half = nt / 2;
        let n = self.symbol.index;
        let mut poly;
        let mut residuals = Vec::new();
        if n >= 0 {
            let n = n as usize;
            poly = vec![Complex64::new(0.0, 0.0); n + half + 1];
            poly[n] = Complex64::new(dm[0].re, 0.0);
            for j in 1..half {
                poly[n + j] = 2.0 * dm[j];
            }
            poly[n + half] = Complex64::new(dm[half].re, 0.0);
        } else {
            let m = (-n) as usize;
            if m > half {
                return Err(VekuaError::Length { expected: 2 * m, found: nt });
            }
            poly = vec![Complex64::new(0.0, 0.0); half - m + 1];
            for k in 0..half - m {
                poly[k] = 2.0 * dm[k + m];
            }
            poly[half - m] = Complex64::new(dm[half].re, 0.0);
            residuals.push(dm[0].re);
            for j in 1..m {
                residuals.push(dm[j].re);
                residuals.push(dm[j].im);
            }
        }
        Ok((self.lift(&poly), residuals))
    }

    /// Projections of boundary data on the adjoint null basis, scaled to an RMS
    /// measure of the unabsorbable part of φ.
    pub fn adjoint_residuals(&self, phi: &[f64]) -> Vec<f64> {
        let s = (phi.len() as f64).sqrt();
        self.adjoint.iter().map(|u| u.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() / s).collect()
    }

    /// Real N × 2K matrix of Re{λ̄ e^{iΓ} p} on the boundary for p = z^k, i z^k.
    fn boundary_matrix(&self, k_max: usize) -> DMatrix<f64> {
        let nt = self.grid().n_theta;
        let fb: Vec<Complex64> = self.factor.boundary().to_vec();
        DMatrix::from_fn(nt, 2 * k_max, |j, col| {
            let k = col / 2;
            let th = 2.0 * PI * j as f64 / nt as f64;
            let unit = if col % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            (self.lambda[j].conj() * fb[j] * unit * Complex64::from_polar(1.0, k as f64 * th)).re
        })
    }

    fn adjoint_null_basis(&self, m: usize) -> Vec<Vec<f64>> {
        let nt = self.grid().n_theta;
        let cols = 2 * (nt / 2 - m + 1);
        let a = self.boundary_matrix(nt / 2 - m + 1);
        let mut padded = DMatrix::zeros(nt, nt);
        padded.view_mut((0, 0), (nt, cols.min(nt))).copy_from(&a.columns(0, cols.min(nt)));
        let svd = padded.svd(true, false);
        let u = svd.u.expect("left singular vectors");
        let smax = svd.singular_values.max();
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s < RANK_TOL * smax)
            .map(|(i, _)| u.column(i).iter().copied().collect())
            .collect()
    }

    /// Numerical nullity of the homogeneous boundary operator restricted to
    /// polynomials of degree < n_theta/4.
    pub fn homogeneous_rank(&self) -> RankReport {
        let k = self.grid().n_theta / 4;
        let a = self.boundary_matrix(k);
        let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        RankReport::from_singular_values(sv)
    }
}

/// Outcome of a numerical rank test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub dimension: usize,
    /// Smallest retained singular value over the largest discarded one (or over
    /// the threshold when nothing is discarded).
    pub gap: f64,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    pub fn from_singular_values(sorted_desc: Vec<f64>) -> Self {
        let smax = sorted_desc.first().copied().unwrap_or(0.0);
        let thr = RANK_TOL * smax;
        let dimension = sorted_desc.iter().filter(|s| **s < thr).count();
        let kept = sorted_desc.iter().copied().filter(|s| *s >= thr).fold(f64::INFINITY, f64::min);
        let dropped = sorted_desc.iter().copied().filter(|s| *s < thr).fold(0.0, f64::max);
        let gap = if dimension == 0 { kept / thr } else { kept / dropped.max(f64::EPSILON * smax) };
        Self { dimension, gap, singular_values: sorted_desc }
    }
}

/// Holomorphic family from boundary data alone (zero coefficients).
pub fn rh_core_solve(grid: DiskGrid, lambda: &[Complex64], phi: &[f64]) -> Result<SolutionFamily, VekuaError> {
    let solver = RhSolver::new(grid, lambda)?;
    let (particular, solvability) = solver.particular(phi)?;
    let adjoint_residuals = solver.adjoint_residuals(phi);
    let boundary_residual = boundary_misfit(&solver, &particular, phi);
    Ok(SolutionFamily {
        index: solver.index(),
        solution: particular.clone(),
        particular,
        basis: solver.basis().to_vec(),
        parameters: vec![0.0; solver.basis().len()],
        solvability,
        adjoint_residuals,
        boundary_residual,
        iterations: 0,
        ratios: Vec::new(),
        interior_residual: 0.0,
    })
}

pub(crate) fn boundary_misfit(solver: &RhSolver, w: &ComplexField, phi: &[f64]) -> f64 {
    solver.boundary_form(w).iter().zip(phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Solution family of the boundary-value problem: solution = particular + Σ cᵢ basisᵢ.
#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub index: i64,
    pub particular: ComplexField,
    pub basis: Vec<ComplexField>,
    pub parameters: Vec<f64>,
    pub solution: ComplexField,
    /// Low Fourier data that must vanish for solvability (n < 0).
    pub solvability: Vec<f64>,
    /// Projections on the numerically computed adjoint null basis (n < 0).
    pub adjoint_residuals: Vec<f64>,
    pub boundary_residual: f64,
    pub interior_residual: f64,
    pub iterations: usize,
    /// Ratios of consecutive successive-approximation differences.
    pub ratios: Vec<f64>,
}

impl SolutionFamily {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Member of the family for parameter vector `c`.
    pub fn member(&self, c: &[f64]) -> ComplexField {
        let mut out = self.particular.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            for (o, v) in out.values_mut().iter_mut().zip(b.values()) {
                *o += v * ci;
            }
        }
        out
    }

    /// Restricts the family to members vanishing at `node`: the particular
    /// solution becomes the least-norm member with w(node) = 0, the basis spans
    /// the null space of the two point constraints.
    pub fn project(&self, node: usize) -> Result<SolutionFamily, VekuaError> {
        let d = self.dimension();
        let target = self.particular[node];
        if d == 0 {
            if target.norm() > 1e-10 {
                return Err(VekuaError::RankDeficient { rank: 0, needed: 2 });
            }
            return Ok(self.clone());
        }
        let c = DMatrix::from_fn(2, d, |r, i| if r == 0 { self.basis[i][node].re } else { self.basis[i][node].im });
        let rhs = DVector::from_vec(vec![-target.re, -target.im]);
        let svd = c.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOL * smax.max(1e-300)).count();
        let c0 = svd.solve(&rhs, RANK_TOL * smax).map_err(|_| VekuaError::RankDeficient { rank, needed: 2 })?;
        let resid = (&c * &c0 - &rhs).norm();
        if resid > 1e-10 * (1.0 + rhs.norm()) {
            return Err(VekuaError::RankDeficient { rank, needed: 2 });
        }
        // null space of c: right singular vectors beyond the rank
        let null = super::solver::null_space(&c, rank);
        let particular = self.member(c0.as_slice());
        let basis: Vec<ComplexField> = null
            .iter()
            .map(|v| {
                let mut f = Field::filled(self.particular.grid(), Complex64::new(0.0, 0.0));
                for (ci, b) in v.iter().zip(&self.basis) {
                    for (o, x) in f.values_mut().iter_mut().zip(b.values()) {
                        *o += x * ci;
                    }
                }
                f
            })
            .collect();
        Ok(SolutionFamily {
            parameters: vec![0.0; basis.len()],
            solution: particular.clone(),
            particular,
            basis,
            ..self.clone()
        })
    }
}

/// Symbol e^{inθ} sampled on `n_theta` boundary angles.
pub fn monomial_symbol(n: i64, n_theta: usize) -> Vec<Complex64> {
    (0..n_theta).map(|j| Complex64::from_polar(1.0, n as f64 * 2.0 * PI * j as f64 / n_theta as f64)).collect()
}
