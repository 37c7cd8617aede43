//! Time stepping of the curvature-preserving G-deformation.

mod config;

pub use config::{BoundarySpec, FlowConfig, GammaRate, ParameterChoice, TangentField};

use std::cell::RefCell;

use log::{info, warn};
use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{inner, AmbientMetric};
use crate::cdot::{solve_cdot, CdotContext, CdotError, PathIntegrator};
use crate::gdef::{
    assemble_coefficients, gdef_normal_residual, gdef_residual, series_defect, CoefficientNorms, DeformationState,
    GDefCoefficients, GdefError,
};
use crate::grid::{ComplexField, DiskGrid, Field, PolarDiff, RealField};
use crate::kpres::{
    coefficients, rhs_psi, variation, EquationCoefficients, KpresError, VariationNorms, VariationState,
};
use crate::surface::{rebuild_geometry, SurfaceError, SurfaceState};
use crate::vekua::{
    boundary_data, bvp_solve, index_of, swap_angle, to_z_plane, z_node_of, BoundaryProblem, EOperator, Functional,
    Pairing, ParameterPolicy, SolutionFamily, VekuaError, RANK_TOL,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Gdef(#[from] GdefError),
    #[error(transparent)]
    Cdot(#[from] CdotError),
    #[error(transparent)]
    Kpres(#[from] KpresError),
    #[error(transparent)]
    Vekua(#[from] VekuaError),
    #[error("step {step} at t = {t}: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<FlowError>,
    },
}

impl FlowError {
    fn is_contraction_failure(&self) -> bool {
        matches!(
            self,
            FlowError::Cdot(CdotError::NoContraction { .. }) | FlowError::Vekua(VekuaError::NoContraction { .. })
        )
    }
}

/// One line of the flow trace, describing the state reached by a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    /// The step was retried with half the step size.
    pub halved: bool,
    /// max |K(t) - K|/K from the variation formulas.
    pub dk_rel: f64,
    /// max |K(t) - K|/K from the rebuilt surface, when checked.
    pub dk_rel_oracle: Option<f64>,
    /// max |rᵢ| of the G-deformation relation.
    pub g_residual: f64,
    /// max |ã(0)(A*ᵢ, n)| from the transported tangents.
    pub g_normal_residual: f64,
    /// max |ã(z, v) - γ̃| on the boundary.
    pub boundary_residual: f64,
    pub bvp_boundary_residual: f64,
    pub bvp_interior_residual: f64,
    pub bvp_iterations: usize,
    pub bvp_max_ratio: f64,
    pub solvability: f64,
    pub picard_iterations: usize,
    pub k3: f64,
    pub cdot_residual: f64,
    pub loop_defect: f64,
    /// |z(x₀)|.
    pub fixed_point: f64,
    pub index: i64,
    pub family_dimension: usize,
    pub constraint_rank: usize,
    pub projected_dimension: usize,
    pub parameters: Vec<f64>,
    pub a_dot: f64,
    pub c_dot: f64,
    pub psi1_dot: f64,
    pub psi3_dot: f64,
    pub p0: f64,
    /// max |z(t + Δt) - z(t)|.
    pub displacement_step: f64,
    pub series_defect: Option<f64>,
    pub coefficients: CoefficientNorms,
    pub variation: VariationNorms,
}

/// Per-node fields of one state, in export column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub rows: Vec<SnapshotRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRow {
    pub node: usize,
    pub r: f64,
    pub theta: f64,
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
    /// (K(t) - K)/K.
    pub dk: f64,
    pub r1: f64,
    pub r2: f64,
}

impl SnapshotRow {
    pub const COLUMNS: [&'static str; 9] = ["node", "r", "theta", "a1", "a2", "c", "dK", "r1", "r2"];
}

struct BoundaryRates {
    problem_lambda: Vec<Complex64>,
    problem_phi: Vec<f64>,
    /// Boundary tangent field v, x-plane sample order.
    v: Vec<Vector3<f64>>,
    gamma_dot: Vec<f64>,
}

/// Relative change (K(t) - K)/K from the variation δ = g(t)/b(t) - g/b.
fn relative_k(delta: f64, k: f64) -> f64 {
    -delta * k / (1.0 + delta * k)
}

/// Flow state: one owner, advanced step by step.
pub struct Flow {
    metric: AmbientMetric,
    surface: SurfaceState,
    config: FlowConfig,
    diff: PolarDiff,
    eq: EquationCoefficients,
    integrator: PathIntegrator,
    problem: BoundaryProblem,
    boundary: BoundaryRates,
    index: i64,
    x0: usize,
    x0_z: usize,
    deform: DeformationState,
    coeffs: GDefCoefficients,
    var: VariationState,
    c_dot_prev: Option<RealField>,
    /// γ̃(s, t) accumulated from the rates.
    gamma: Vec<f64>,
    step: usize,
}

impl Flow {
    pub fn new(metric: AmbientMetric, surface: SurfaceState, config: FlowConfig) -> Result<Self, FlowError> {
        config.validate().map_err(FlowError::Config)?;
        let grid = surface.grid;
        if !grid.n_theta.is_multiple_of(4) {
            return Err(FlowError::Config(format!("n_theta = {} must be divisible by 4", grid.n_theta)));
        }
        let diff = PolarDiff::new(grid);
        let eq = coefficients(&surface, &diff)?;
        let x0 = grid.nearest(config.x0);
        let x0_z = z_node_of(grid, x0);
        let integrator = PathIntegrator::new(grid, x0);
        let boundary = boundary_rates(&surface, &config.boundary)?;
        let index = index_of(&boundary.problem_lambda)?;
        let (a, b) = eq.vekua_ab();
        let e = EOperator::new(to_z_plane(&eq.qb0), to_z_plane(&surface.v_field()), Pairing::Swapped, x0_z);
        let problem = BoundaryProblem {
            grid,
            lambda: boundary.problem_lambda.clone(),
            phi: boundary.problem_phi.clone(),
            a: to_z_plane(&a),
            b: to_z_plane(&b),
            e: Some(e),
            psi: Field::filled(grid, Complex64::new(0.0, 0.0)),
        };
        let deform = DeformationState::initial(grid);
        let coeffs = assemble_coefficients(&metric, &surface, &deform, config.cdot.substeps)?;
        let var = variation(&metric, &surface, &deform, &coeffs, &deform.partials(&diff), &diff, &eq)?;
        info!("flow: index {index}, x0 node {x0}, {} steps of {}", config.steps(), config.step_size());
        Ok(Self {
            gamma: vec![0.0; grid.n_theta],
            metric,
            surface,
            config,
            diff,
            eq,
            integrator,
            problem,
            boundary,
            index,
            x0,
            x0_z,
            deform,
            coeffs,
            var,
            c_dot_prev: None,
            step: 0,
        })
    }

    pub fn grid(&self) -> DiskGrid {
        self.surface.grid
    }

    pub fn index(&self) -> i64 {
        self.index
    }

    pub fn x0_node(&self) -> usize {
        self.x0
    }

    pub fn state(&self) -> &DeformationState {
        &self.deform
    }

    pub fn variation(&self) -> &VariationState {
        &self.var
    }

    pub fn surface(&self) -> &SurfaceState {
        &self.surface
    }

    pub fn equation(&self) -> &EquationCoefficients {
        &self.eq
    }

    pub fn finished(&self) -> bool {
        self.deform.t >= self.config.t0 - 1e-12 * self.config.t0
    }

    fn policy(&self) -> ParameterPolicy {
        let functionals = Functional::point_zero(self.x0_z).to_vec();
        match &self.config.parameters {
            ParameterChoice::LeastNorm => ParameterPolicy::Functionals(functionals),
            ParameterChoice::Fixed { values } => ParameterPolicy::Constrained { functionals, free: values.clone() },
        }
    }

    /// ȧ in the x-plane from ẇ = ȧ¹ + iȧ² given in the swapped plane.
    fn rates_of(&self, w: &ComplexField) -> [RealField; 2] {
        let g = self.grid();
        [Field::from_nodes(g, |i| w[z_node_of(g, i)].re), Field::from_nodes(g, |i| w[z_node_of(g, i)].im)]
    }

    /// Advances by one step (halving once on a contraction failure).
    pub fn step(&mut self) -> Result<StepRecord, FlowError> {
        let dt = self.config.step_size().min(self.config.t0 - self.deform.t);
        let wrap = |e: FlowError, t: f64, step: usize| FlowError::Step { step, t, source: Box::new(e) };
        let outcome = match self.try_step(dt) {
            Ok(o) => Ok((o, false)),
            Err(e) if e.is_contraction_failure() => {
                warn!("step {}: {e}; retrying with dt = {}", self.step + 1, dt / 2.0);
                self.try_step(dt / 2.0).map(|o| (o, true))
            }
            Err(e) => Err(e),
        };
        let (outcome, halved) = outcome.map_err(|e| wrap(e, self.deform.t, self.step + 1))?;
        self.commit(outcome, halved).map_err(|e| wrap(e, self.deform.t, self.step))
    }

    fn try_step(&self, dt: f64) -> Result<StepOutcome, FlowError> {
        let partials = self.deform.partials(&self.diff);
        let ctx = CdotContext {
            metric: &self.metric,
            surface: &self.surface,
            deform: &self.deform,
            coeffs: &self.coeffs,
            partials: &partials,
            diff: &self.diff,
            integrator: &self.integrator,
            dt,
            options: self.config.cdot,
        };
        let failure: RefCell<Option<FlowError>> = RefCell::new(None);
        let start: RefCell<Option<RealField>> = RefCell::new(self.c_dot_prev.clone());
        let evaluate = |w: &ComplexField| -> Result<Evaluated, FlowError> {
            let a_dot = self.rates_of(w);
            let sol = solve_cdot(&ctx, &a_dot, start.borrow().as_ref())?;
            let trial_partials = sol.trial.partials(&self.diff);
            let var = variation(
                &self.metric,
                &self.surface,
                &sol.trial,
                &sol.trial_coeffs,
                &trial_partials,
                &self.diff,
                &self.eq,
            )?;
            let rates = rhs_psi(&self.eq, &self.var, &var, &sol.c_dot, &sol.gamma_t, dt);
            *start.borrow_mut() = Some(sol.c_dot.clone());
            Ok(Evaluated { a_dot, sol, var, rates })
        };
        let psi = |w: &ComplexField| -> Result<ComplexField, VekuaError> {
            match evaluate(w) {
                Ok(ev) => Ok(to_z_plane(&ev.rates.psi())),
                Err(e) => {
                    let msg = e.to_string();
                    *failure.borrow_mut() = Some(e);
                    Err(VekuaError::Assembly(msg))
                }
            }
        };
        let family = bvp_solve(&self.problem, Some(&psi), &self.policy(), &self.config.bvp);
        let family = match family {
            Ok(f) => f,
            Err(e) => return Err(failure.borrow_mut().take().unwrap_or(FlowError::Vekua(e))),
        };
        let ev = evaluate(&family.solution)?;
        Ok(StepOutcome { dt, family, ev })
    }

    fn commit(&mut self, outcome: StepOutcome, halved: bool) -> Result<StepRecord, FlowError> {
        let StepOutcome { dt, family, ev } = outcome;
        let Evaluated { a_dot, sol, var, rates } = ev;
        let (rank, projected) = projected_dimension(&family, self.x0_z);
        let displacement_step = self.deform.z.iter().zip(&sol.trial.z).map(|(a, b)| (b - a).amax()).fold(0.0, f64::max);
        for (g, r) in self.gamma.iter_mut().zip(&self.boundary.gamma_dot) {
            *g += dt * r;
        }
        self.deform = sol.trial.clone();
        self.coeffs = sol.trial_coeffs.clone();
        self.var = var;
        self.c_dot_prev = Some(sol.c_dot.clone());
        self.step += 1;

        let grid = self.grid();
        let partials = self.deform.partials(&self.diff);
        let r = gdef_residual(&self.surface, &self.coeffs, &self.deform, &partials);
        let rn =
            gdef_normal_residual(&self.metric, &self.surface, &self.deform, &self.diff, self.config.cdot.substeps)?;
        let boundary_residual = grid
            .boundary()
            .enumerate()
            .map(|(j, node)| {
                let p = &self.surface.points[node];
                (inner(&p.metric, &self.deform.z[node], &self.boundary.v[j]) - self.gamma[j]).abs()
            })
            .fold(0.0, f64::max);
        let dk_rel = self
            .var
            .nodes
            .iter()
            .zip(&self.surface.points)
            .map(|(n, p)| relative_k(n.dk, p.k).abs())
            .fold(0.0, f64::max);
        let check = self.config.oracle_every > 0 && self.step.is_multiple_of(self.config.oracle_every);
        let dk_rel_oracle = if check { Some(self.oracle_dk()?.sup_norm()) } else { None };
        let series = if check {
            Some(series_defect(
                &self.metric,
                &self.surface,
                &self.deform,
                self.config.k_max,
                self.config.cdot.substeps,
            )?)
        } else {
            None
        };
        let record = StepRecord {
            step: self.step,
            t: self.deform.t,
            dt,
            halved,
            dk_rel,
            dk_rel_oracle,
            g_residual: r[0].sup_norm().max(r[1].sup_norm()),
            g_normal_residual: rn[0].sup_norm().max(rn[1].sup_norm()),
            boundary_residual,
            bvp_boundary_residual: family.boundary_residual,
            bvp_interior_residual: family.interior_residual,
            bvp_iterations: family.iterations,
            bvp_max_ratio: family.ratios.iter().copied().fold(0.0, f64::max),
            solvability: family.solvability.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            picard_iterations: sol.iterations,
            k3: sol.k3,
            cdot_residual: sol.residual,
            loop_defect: sol.loop_defect,
            fixed_point: self.deform.z[self.x0].norm(),
            index: family.index,
            family_dimension: family.dimension(),
            constraint_rank: rank,
            projected_dimension: projected,
            parameters: family.parameters.clone(),
            a_dot: a_dot[0].sup_norm().max(a_dot[1].sup_norm()),
            c_dot: sol.c_dot.sup_norm(),
            psi1_dot: rates.psi1_dot.sup_norm(),
            psi3_dot: rates.psi3_dot.sup_norm(),
            p0: rates.p0.sup_norm(),
            displacement_step,
            series_defect: series,
            coefficients: self.coeffs.norms(),
            variation: self.var.norms(),
        };
        info!(
            "step {} t = {:.4}: dK/K {:.2e}, G {:.2e}, boundary {:.2e}, bvp it {}, picard it {}",
            record.step,
            record.t,
            record.dk_rel,
            record.g_residual,
            record.boundary_residual,
            record.bvp_iterations,
            record.picard_iterations
        );
        Ok(record)
    }

    /// (K(t) - K)/K from the surface rebuilt at y + z.
    pub fn oracle_dk(&self) -> Result<RealField, FlowError> {
        let r = rebuild_geometry(&self.surface, &self.metric, &self.deform.z)?;
        Ok(Field::from_nodes(self.grid(), |i| r.k[i] / self.surface.points[i].k - 1.0))
    }

    pub fn snapshot(&self) -> Snapshot {
        let grid = self.grid();
        let partials = self.deform.partials(&self.diff);
        let r = gdef_residual(&self.surface, &self.coeffs, &self.deform, &partials);
        let rows = (0..grid.len())
            .map(|i| {
                let (rad, theta) = grid.polar(i);
                SnapshotRow {
                    node: i,
                    r: rad,
                    theta,
                    a1: self.deform.a[0][i],
                    a2: self.deform.a[1][i],
                    c: self.deform.c[i],
                    dk: relative_k(self.var.nodes[i].dk, self.surface.points[i].k),
                    r1: r[0][i],
                    r2: r[1][i],
                }
            })
            .collect();
        Snapshot { step: self.step, t: self.deform.t, rows }
    }
}

struct Evaluated {
    a_dot: [RealField; 2],
    sol: crate::cdot::CdotSolution,
    var: VariationState,
    rates: crate::kpres::PsiRates,
}

struct StepOutcome {
    dt: f64,
    family: SolutionFamily,
    ev: Evaluated,
}

fn boundary_rates(surface: &SurfaceState, spec: &BoundarySpec) -> Result<BoundaryRates, FlowError> {
    let grid = surface.grid;
    let pts = surface.boundary_points();
    let angles: Vec<f64> = (0..grid.n_theta).map(|j| grid.angle(j)).collect();
    let v: Vec<Vector3<f64>> = pts
        .iter()
        .zip(&angles)
        .map(|(p, &th)| {
            let l = spec.tangent.at(th);
            p.dy[0] * l[0] + p.dy[1] * l[1]
        })
        .collect();
    let gamma_dot: Vec<f64> = angles.iter().map(|&s| spec.gamma.at(spec.epsilon, s)).collect();
    let tangents: Vec<_> = pts.iter().map(|p| p.dy).collect();
    let metrics: Vec<_> = pts.iter().map(|p| p.metric).collect();
    let data = boundary_data(&tangents, &metrics, &v, &gamma_dot)?;
    let n = grid.n_theta;
    let problem_lambda = (0..n).map(|j| data.lambda[swap_angle(j, n)]).collect();
    let problem_phi = (0..n).map(|j| data.phi[swap_angle(j, n)]).collect();
    Ok(BoundaryRates { problem_lambda, problem_phi, v, gamma_dot })
}

/// Rank of the point constraints ẇ(node) = 0 on the family basis and the
/// dimension of the constrained family.
pub fn projected_dimension(family: &SolutionFamily, node: usize) -> (usize, usize) {
    let d = family.dimension();
    if d == 0 {
        return (0, 0);
    }
    let c = DMatrix::from_fn(2, d, |r, i| if r == 0 { family.basis[i][node].re } else { family.basis[i][node].im });
    let sv = c.singular_values();
    let smax = sv.max();
    let rank = if smax > 0.0 { sv.iter().filter(|s| **s > RANK_TOL * smax).count() } else { 0 };
    (rank, d - rank)
}

/// Summary over a whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub steps: usize,
    pub t: f64,
    pub index: i64,
    pub max_dk_rel: f64,
    pub max_dk_rel_oracle: Option<f64>,
    pub max_g_residual: f64,
    pub max_g_normal_residual: f64,
    pub max_boundary_residual: f64,
    pub max_fixed_point: f64,
    pub max_rate: f64,
    pub family_dimension: Option<usize>,
    pub projected_dimension: Option<usize>,
    pub halvings: usize,
}

impl FlowSummary {
    pub fn from_records(records: &[StepRecord], index: i64) -> Self {
        let mut s = FlowSummary { index, ..Default::default() };
        for r in records {
            s.steps = r.step;
            s.t = r.t;
            s.max_dk_rel = s.max_dk_rel.max(r.dk_rel);
            if let Some(o) = r.dk_rel_oracle {
                s.max_dk_rel_oracle = Some(s.max_dk_rel_oracle.unwrap_or(0.0).max(o));
            }
            s.max_g_residual = s.max_g_residual.max(r.g_residual);
            s.max_g_normal_residual = s.max_g_normal_residual.max(r.g_normal_residual);
            s.max_boundary_residual = s.max_boundary_residual.max(r.boundary_residual);
            s.max_fixed_point = s.max_fixed_point.max(r.fixed_point);
            s.max_rate = s.max_rate.max(r.a_dot).max(r.c_dot);
            s.family_dimension = Some(r.family_dimension);
            s.projected_dimension = Some(r.projected_dimension);
            s.halvings += r.halved as usize;
        }
        s
    }

    /// Zero boundary data produced no motion at all.
    pub fn identity_flow(&self, tol: f64) -> bool {
        self.max_rate <= tol
    }
}

/// Result of a complete run.
pub struct FlowRun {
    pub records: Vec<StepRecord>,
    pub summary: FlowSummary,
    pub final_state: DeformationState,
    pub final_snapshot: Snapshot,
}

/// Runs the flow from t = 0 to t0, calling `observe` after every step.
pub fn run_flow_with(
    metric: AmbientMetric,
    surface: SurfaceState,
    config: FlowConfig,
    mut observe: impl FnMut(&Flow, &StepRecord) -> Result<(), FlowError>,
) -> Result<FlowRun, FlowError> {
    let mut flow = Flow::new(metric, surface, config)?;
    let mut records = Vec::new();
    while !flow.finished() {
        let rec = flow.step()?;
        observe(&flow, &rec)?;
        records.push(rec);
    }
    let summary = FlowSummary::from_records(&records, flow.index());
    Ok(FlowRun { summary, final_snapshot: flow.snapshot(), final_state: flow.deform, records })
}

pub fn run_flow(metric: AmbientMetric, surface: SurfaceState, config: FlowConfig) -> Result<FlowRun, FlowError> {
    run_flow_with(metric, surface, config, |_, _| Ok(()))
}
