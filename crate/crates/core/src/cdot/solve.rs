use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PathIntegrator;
use crate::ambient::AmbientMetric;
use crate::gdef::{assemble_coefficients, CoefficientRates, DeformationState, GDefCoefficients, GdefError, Partials};
use crate::grid::{Field, PolarDiff, RealField};
use crate::surface::SurfaceState;

/// Smallest admissible |1 + N₀|.
pub const DENOMINATOR_FLOOR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdotError {
    #[error("1 + N0 = {value} at node {node} is too close to zero")]
    NearSingular { node: usize, value: f64 },
    #[error("Picard iteration does not contract: ratio {ratio} at iteration {iteration}")]
    NoContraction { ratio: f64, iteration: usize },
    #[error("Picard iteration did not converge in {iterations} iterations (difference {difference:e})")]
    NotConverged { iterations: usize, difference: f64 },
    #[error(transparent)]
    Gdef(#[from] GdefError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdotOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// RK4 substeps per history segment in the transport of trial states.
    pub substeps: usize,
}

impl Default for CdotOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, substeps: 4 }
    }
}

/// Everything fixed during one reconstruction of ċ: the state at time t, its
/// coefficients and the step to the trial state used for the rates.
pub struct CdotContext<'a> {
    pub metric: &'a AmbientMetric,
    pub surface: &'a SurfaceState,
    pub deform: &'a DeformationState,
    pub coeffs: &'a GDefCoefficients,
    pub partials: &'a Partials,
    pub diff: &'a PolarDiff,
    pub integrator: &'a PathIntegrator,
    pub dt: f64,
    pub options: CdotOptions,
}

#[derive(Debug, Clone)]
pub struct CdotSolution {
    pub c_dot: RealField,
    pub gamma_t: RealField,
    pub iterations: usize,
    /// Largest ratio of consecutive differences (0 when fewer than two).
    pub k3: f64,
    pub differences: Vec<f64>,
    /// ‖ċ - L_a(ċ) - γ_t‖.
    pub residual: f64,
    /// Cell circulation of the converged one-form.
    pub loop_defect: f64,
    /// State after an Euler step with (ȧ, ċ) and its coefficients.
    pub trial: DeformationState,
    pub trial_coeffs: GDefCoefficients,
}

/// γ_t = ∫ (-V ȧ¹) dx¹ + (-V ȧ²) dx² from the base point.
pub fn gamma_t(surface: &SurfaceState, a_dot: &[RealField; 2], integrator: &PathIntegrator) -> RealField {
    let w = [0, 1].map(|i| Field::from_nodes(surface.grid, |n| -surface.points[n].v * a_dot[i][n]));
    integrator.integrate(&w[0], &w[1])
}

/// Integrand of L_a: the two bracketed expressions, for given rates Ṅ, Q̇.
pub fn kernel_k_a(
    ctx: &CdotContext<'_>,
    a_dot: &[RealField; 2],
    da_dot: &[[RealField; 2]; 2],
    rates: &CoefficientRates,
) -> Result<[RealField; 2], CdotError> {
    let grid = ctx.surface.grid;
    let mut out = [Field::filled(grid, 0.0), Field::filled(grid, 0.0)];
    for node in 0..grid.len() {
        let c = &ctx.coeffs.nodes[node];
        let d = 1.0 + c.n[0];
        if d.abs() <= DENOMINATOR_FLOOR {
            return Err(CdotError::NearSingular { node, value: d });
        }
        let v = ctx.surface.points[node].v;
        for i in 0..2 {
            let da = |k: usize| ctx.partials.da[k][i][node];
            let dad = |k: usize| da_dot[k][i][node];
            let num = -v * a_dot[i][node] * c.n[0]
                + c.n[1] * dad(0)
                + c.n[2] * dad(1)
                + rates.n_dot[1][node] * da(0)
                + rates.n_dot[2][node] * da(1)
                + rates.q_dot[i][node];
            let f = v * ctx.deform.a[i][node] + c.n[1] * da(0) + c.n[2] * da(1) + c.q[i];
            out[i].values_mut()[node] = -num / d + rates.n_dot[0][node] * f / (d * d);
        }
    }
    Ok(out)
}

struct Evaluation {
    next: RealField,
    form: [RealField; 2],
    trial: DeformationState,
    trial_coeffs: GDefCoefficients,
}

/// One application ċ ↦ L_a(ċ) + γ_t.
fn evaluate(
    ctx: &CdotContext<'_>,
    a_dot: &[RealField; 2],
    da_dot: &[[RealField; 2]; 2],
    gamma: &RealField,
    c_dot: &RealField,
) -> Result<Evaluation, CdotError> {
    let trial = ctx.deform.advanced(ctx.surface, ctx.dt, a_dot, c_dot)?;
    let trial_coeffs = assemble_coefficients(ctx.metric, ctx.surface, &trial, ctx.options.substeps)?;
    let rates = CoefficientRates::between(ctx.coeffs, &trial_coeffs);
    let form = kernel_k_a(ctx, a_dot, da_dot, &rates)?;
    let l = ctx.integrator.integrate(&form[0], &form[1]);
    let next = l.zip_map(gamma, |l, g| l + g);
    Ok(Evaluation { next, form, trial, trial_coeffs })
}

/// Solves ċ = L_a(ċ) + γ_t by successive approximations starting from
/// `start` (γ_t when `None`).
pub fn solve_cdot(
    ctx: &CdotContext<'_>,
    a_dot: &[RealField; 2],
    start: Option<&RealField>,
) -> Result<CdotSolution, CdotError> {
    let opts = ctx.options;
    let gamma = gamma_t(ctx.surface, a_dot, ctx.integrator);
    let da_dot = [ctx.diff.gradient(&a_dot[0]), ctx.diff.gradient(&a_dot[1])];
    let mut current = start.cloned().unwrap_or_else(|| gamma.clone());
    let mut differences = Vec::new();
    let mut k3 = 0.0f64;
    let mut iterations = 0;
    loop {
        let ev = evaluate(ctx, a_dot, &da_dot, &gamma, &current)?;
        iterations += 1;
        let diff = ev.next.sup_diff(&current);
        if let Some(&prev) = differences.last() {
            // ratios below the rounding floor carry no information
            if prev > 10.0 * opts.tol {
                let ratio = diff / prev;
                k3 = k3.max(ratio);
                if ratio >= 1.0 {
                    return Err(CdotError::NoContraction { ratio, iteration: iterations });
                }
            }
        }
        differences.push(diff);
        current = ev.next;
        if diff < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(CdotError::NotConverged { iterations, difference: diff });
        }
    }
    // one more application at the fixed point: residual and trial data consistent with ċ
    let ev = evaluate(ctx, a_dot, &da_dot, &gamma, &current)?;
    let residual = ev.next.sup_diff(&current);
    let w =
        [0, 1].map(|i| Field::from_nodes(ctx.surface.grid, |n| ev.form[i][n] - ctx.surface.points[n].v * a_dot[i][n]));
    let loop_defect = ctx.integrator.loop_defect(&w[0], &w[1]);
    debug!("cdot: {iterations} iterations, K3 {k3:.3e}, residual {residual:.3e}");
    Ok(CdotSolution {
        c_dot: current,
        gamma_t: gamma,
        iterations,
        k3,
        differences,
        residual,
        loop_defect,
        trial: ev.trial,
        trial_coeffs: ev.trial_coeffs,
    })
}

/// ‖P₁ - P₂‖ / (‖ȧ¹₁ - ȧ¹₂‖ + ‖ȧ²₁ - ȧ²₂‖) with P = ċ - γ_t.
pub fn lipschitz_p(ctx: &CdotContext<'_>, first: &[RealField; 2], second: &[RealField; 2]) -> Result<f64, CdotError> {
    let denom = first[0].sup_diff(&second[0]) + first[1].sup_diff(&second[1]);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let p = |a: &[RealField; 2]| -> Result<RealField, CdotError> {
        let s = solve_cdot(ctx, a, None)?;
        Ok(s.c_dot.zip_map(&s.gamma_t, |c, g| c - g))
    };
    Ok(p(first)?.sup_diff(&p(second)?) / denom)
}
