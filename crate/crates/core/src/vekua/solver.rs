use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::riemann_hilbert::boundary_misfit;
use super::{PompeiuOperator, RhSolver, SolutionFamily, VekuaError, RANK_TOL};
use crate::cdot::PathIntegrator;
use crate::grid::{ComplexField, DiskGrid, Field, PolarDiff, RealField};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which plane coordinate each real component of w is paired with in the
/// line integral of the E operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Re w dξ¹ + Im w dξ².
    #[default]
    Literal,
    /// Re w dξ² + Im w dξ¹, for w whose components refer to the coordinates
    /// before the swap ξ¹ ↔ ξ².
    Swapped,
}

/// E(w)(x) = i q₀(x)/2 ∫_{x₀}^{x} V (Re w dx̃¹ + Im w dx̃²) along straight segments.
#[derive(Debug, Clone)]
pub struct EOperator {
    pub q0: RealField,
    pub v: RealField,
    pub pairing: Pairing,
    integrator: PathIntegrator,
}

impl EOperator {
    pub fn new(q0: RealField, v: RealField, pairing: Pairing, base: usize) -> Self {
        let integrator = PathIntegrator::new(q0.grid(), base);
        Self { q0, v, pairing, integrator }
    }

    pub fn base(&self) -> usize {
        self.integrator.base()
    }

    pub fn apply(&self, w: &ComplexField) -> ComplexField {
        let a1 = w.zip_map(&self.v, |w, v| w.re * v);
        let a2 = w.zip_map(&self.v, |w, v| w.im * v);
        let line = match self.pairing {
            Pairing::Literal => self.integrator.integrate(&a1, &a2),
            Pairing::Swapped => self.integrator.integrate(&a2, &a1),
        };
        line.zip_map(&self.q0, |l, q| I * (0.5 * q * l))
    }
}

/// A = ¼(p₁ + q₂ + i q₁ - i p₂), B = ¼(p₁ - q₂ + i q₁ + i p₂).
pub fn assemble_ab(p: [&RealField; 2], q: [&RealField; 2]) -> (ComplexField, ComplexField) {
    let g = p[0].grid();
    let a = Field::from_nodes(g, |i| 0.25 * Complex64::new(p[0][i] + q[1][i], q[0][i] - p[1][i]));
    let b = Field::from_nodes(g, |i| 0.25 * Complex64::new(p[0][i] - q[1][i], q[0][i] + p[1][i]));
    (a, b)
}

/// ∂_z̄ w + A w + B w̄ + E(w) = Ψ in D, Re{λ̄ w} = φ on ∂D.
#[derive(Debug, Clone)]
pub struct BoundaryProblem {
    pub grid: DiskGrid,
    pub lambda: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub a: ComplexField,
    pub b: ComplexField,
    pub e: Option<EOperator>,
    pub psi: ComplexField,
}

impl BoundaryProblem {
    /// Holomorphic problem: all coefficients and the right-hand side vanish.
    pub fn holomorphic(grid: DiskGrid, lambda: Vec<Complex64>, phi: Vec<f64>) -> Self {
        let zero = Field::filled(grid, Complex64::new(0.0, 0.0));
        Self { grid, lambda, phi, a: zero.clone(), b: zero.clone(), e: None, psi: zero }
    }

    /// A w + B w̄ + E(w).
    pub fn lower_order(&self, w: &ComplexField) -> ComplexField {
        let mut out = Field::from_nodes(self.grid, |i| self.a[i] * w[i] + self.b[i] * w[i].conj());
        if let Some(e) = &self.e {
            let ew = e.apply(w);
            out.values_mut().iter_mut().zip(ew.values()).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// Sup-norm of ∂_z̄ w + A w + B w̄ + E(w) - Ψ over the grid.
    pub fn interior_residual(&self, w: &ComplexField, psi: &ComplexField) -> f64 {
        let d = PolarDiff::new(self.grid).dzbar(w);
        let lo = self.lower_order(w);
        (0..self.grid.len()).map(|i| (d[i] + lo[i] - psi[i]).norm()).fold(0.0, f64::max)
    }
}

/// A real linear functional Re w(node) or Im w(node) prescribed to `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub node: usize,
    pub imaginary: bool,
    pub value: f64,
}

impl Functional {
    /// w(node) = 0.
    pub fn point_zero(node: usize) -> [Functional; 2] {
        [Functional { node, imaginary: false, value: 0.0 }, Functional { node, imaginary: true, value: 0.0 }]
    }

    fn eval(&self, f: &ComplexField) -> f64 {
        let v = f[self.node];
        if self.imaginary {
            v.im
        } else {
            v.re
        }
    }
}

/// How the free parameters of the family are chosen inside the iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterPolicy {
    /// All parameters zero.
    #[default]
    LeastNorm,
    Fixed(Vec<f64>),
    /// Least-norm parameters satisfying (in the least-squares sense) the functionals.
    Functionals(Vec<Functional>),
    /// As `Functionals`, then moved by `free` along an orthonormal basis of the
    /// null space of the functionals (ordered by right singular vectors).
    Constrained {
        functionals: Vec<Functional>,
        free: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance on the solvability residuals for negative index.
    pub solvability_tol: f64,
    /// Also compute homogeneous solutions of the full problem (linear Ψ only).
    pub full_basis: bool,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, solvability_tol: 1e-8, full_basis: false }
    }
}

fn choose_parameters(
    policy: &ParameterPolicy,
    basis: &[ComplexField],
    base: &ComplexField,
) -> Result<Vec<f64>, VekuaError> {
    let d = basis.len();
    match policy {
        ParameterPolicy::LeastNorm => Ok(vec![0.0; d]),
        ParameterPolicy::Fixed(c) => {
            if c.len() != d {
                return Err(VekuaError::Length { expected: d, found: c.len() });
            }
            Ok(c.clone())
        }
        ParameterPolicy::Functionals(fs) => constrained(fs, &[], basis, base),
        ParameterPolicy::Constrained { functionals, free } => constrained(functionals, free, basis, base),
    }
}

fn constrained(
    fs: &[Functional],
    free: &[f64],
    basis: &[ComplexField],
    base: &ComplexField,
) -> Result<Vec<f64>, VekuaError> {
    let d = basis.len();
    if d == 0 || fs.is_empty() {
        if !free.is_empty() && free.len() != d {
            return Err(VekuaError::Length { expected: d, found: free.len() });
        }
        return Ok(if free.is_empty() { vec![0.0; d] } else { free.to_vec() });
    }
    let c = DMatrix::from_fn(fs.len(), d, |r, i| fs[r].eval(&basis[i]));
    let rhs = DVector::from_fn(fs.len(), |r, _| fs[r].value - fs[r].eval(base));
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOL * smax).count();
    let mut sol =
        svd.solve(&rhs, RANK_TOL * smax).map_err(|_| VekuaError::RankDeficient { rank, needed: fs.len().min(d) })?;
    if !free.is_empty() {
        let null = null_space(&c, rank);
        if free.len() != null.len() {
            return Err(VekuaError::Length { expected: null.len(), found: free.len() });
        }
        for (v, f) in null.iter().zip(free) {
            sol += v * *f;
        }
    }
    Ok(sol.iter().copied().collect())
}

/// Orthonormal basis of the null space of `c` given its numerical rank.
pub(crate) fn null_space(c: &DMatrix<f64>, rank: usize) -> Vec<DVector<f64>> {
    let d = c.ncols();
    let full = c.clone().resize(c.nrows().max(d), d, 0.0).svd(false, true);
    let vt = full.v_t.expect("right singular vectors");
    let mut order: Vec<usize> = (0..full.singular_values.len()).collect();
    order.sort_by(|a, b| full.singular_values[*b].total_cmp(&full.singular_values[*a]));
    order[rank..].iter().map(|&i| vt.row(i).transpose()).collect()
}

fn add_combination(base: &ComplexField, c: &[f64], basis: &[ComplexField]) -> ComplexField {
    let mut out = base.clone();
    for (ci, b) in c.iter().zip(basis) {
        out.values_mut().iter_mut().zip(b.values()).for_each(|(o, v)| *o += v * ci);
    }
    out
}

struct Iterate {
    w: ComplexField,
    params: Vec<f64>,
    solvability: Vec<f64>,
    data: Vec<f64>,
    iterations: usize,
    ratios: Vec<f64>,
}

type PsiFn<'a> = dyn Fn(&ComplexField) -> Result<ComplexField, VekuaError> + 'a;

fn iterate(
    problem: &BoundaryProblem,
    rh: &RhSolver,
    t: &PompeiuOperator,
    psi: &PsiFn<'_>,
    phi: &[f64],
    policy: &ParameterPolicy,
    opts: &BvpOptions,
) -> Result<Iterate, VekuaError> {
    let g = problem.grid;
    let mut w = Field::filled(g, Complex64::new(0.0, 0.0));
    let mut diffs: Vec<f64> = Vec::new();
    let mut ratios = Vec::new();
    let mut growth = 0;
    for it in 1..=opts.max_iter {
        let rhs = psi(&w)?;
        let lo = problem.lower_order(&w);
        let f = rhs.zip_map(&lo, |a, b| a - b);
        let v = t.apply(&f);
        let bv = rh.boundary_form(&v);
        let data: Vec<f64> = phi.iter().zip(&bv).map(|(p, b)| p - b).collect();
        let (hp, solvability) = rh.particular(&data)?;
        let base = v.zip_map(&hp, |a, b| a + b);
        let params = choose_parameters(policy, rh.basis(), &base)?;
        let next = add_combination(&base, &params, rh.basis());
        let diff = next.sup_diff(&w);
        let scale = 1.0 + next.sup_norm();
        if !diff.is_finite() {
            return Err(VekuaError::NoContraction { ratio: f64::INFINITY, iteration: it });
        }
        if let Some(prev) = diffs.last() {
            if *prev > 0.0 {
                let r = diff / prev;
                ratios.push(r);
                growth = if r > 1.0 { growth + 1 } else { 0 };
                if growth >= 3 && diff > 1e3 * opts.tol * scale {
                    return Err(VekuaError::NoContraction { ratio: r, iteration: it });
                }
            }
        }
        diffs.push(diff);
        debug!("bvp iteration {it}: difference {diff:.3e}");
        w = next;
        if diff <= opts.tol * scale {
            return Ok(Iterate { w, params, solvability, data, iterations: it, ratios });
        }
    }
    Err(VekuaError::NotConverged { iterations: opts.max_iter, difference: *diffs.last().unwrap_or(&f64::NAN) })
}

/// Successive approximations alternating a T-operator correction of the areal
/// term with a holomorphic Riemann–Hilbert solve restoring the boundary data.
/// `psi` overrides the fixed right-hand side when Ψ depends on the iterate.
pub fn bvp_solve(
    problem: &BoundaryProblem,
    psi: Option<&PsiFn<'_>>,
    policy: &ParameterPolicy,
    opts: &BvpOptions,
) -> Result<SolutionFamily, VekuaError> {
    let g = problem.grid;
    if problem.phi.len() != g.n_theta {
        return Err(VekuaError::Length { expected: g.n_theta, found: problem.phi.len() });
    }
    let rh = RhSolver::new(g, &problem.lambda)?;
    let t = PompeiuOperator::new(g);
    let fixed = |_: &ComplexField| Ok(problem.psi.clone());
    let psi_fn: &PsiFn<'_> = psi.unwrap_or(&fixed);
    let it = iterate(problem, &rh, &t, psi_fn, &problem.phi, policy, opts)?;
    let worst = it.solvability.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > opts.solvability_tol {
        return Err(VekuaError::Unsolvable { residual: worst });
    }
    let basis = if opts.full_basis {
        let zero_psi = |_: &ComplexField| Ok(Field::filled(g, Complex64::new(0.0, 0.0)));
        let zero_phi = vec![0.0; g.n_theta];
        (0..rh.basis().len())
            .map(|i| {
                let mut e = vec![0.0; rh.basis().len()];
                e[i] = 1.0;
                iterate(problem, &rh, &t, &zero_psi, &zero_phi, &ParameterPolicy::Fixed(e), opts).map(|r| r.w)
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rh.basis().to_vec()
    };
    let particular = add_combination(&it.w, &it.params.iter().map(|c| -c).collect::<Vec<_>>(), &basis);
    let rhs = psi_fn(&it.w)?;
    Ok(SolutionFamily {
        index: rh.index(),
        particular,
        basis,
        parameters: it.params,
        boundary_residual: boundary_misfit(&rh, &it.w, &problem.phi),
        interior_residual: problem.interior_residual(&it.w, &rhs),
        adjoint_residuals: rh.adjoint_residuals(&it.data),
        solvability: it.solvability,
        iterations: it.iterations,
        ratios: it.ratios,
        solution: it.w,
    })
}
