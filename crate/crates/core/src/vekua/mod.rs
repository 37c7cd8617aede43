//! Riemann–Hilbert problem for generalized analytic functions on the unit disk.

mod boundary;
mod io;
pub mod pompeiu;
mod riemann_hilbert;
mod solver;

pub use boundary::{boundary_data, swap_angle, to_z_plane, x_node_of, z_node_of, BoundaryData};
pub use io::{ProblemFile, SolutionFile};
pub use pompeiu::{pompeiu_reference, PompeiuOperator};
pub use riemann_hilbert::{
    eval_holomorphic, index_of, monomial_symbol, rh_core_solve, CanonicalSymbol, RankReport, RhSolver, SolutionFamily,
    RANK_TOL,
};
pub use solver::{
    assemble_ab, bvp_solve, BoundaryProblem, BvpOptions, EOperator, Functional, Pairing, ParameterPolicy,
};

use thiserror::Error;

use crate::grid::GridError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VekuaError {
    #[error("expected {expected} samples, found {found}")]
    Length { expected: usize, found: usize },
    #[error("boundary symbol not unimodular at sample {sample}: |λ| = {modulus}")]
    NotUnimodular { sample: usize, modulus: f64 },
    #[error("boundary symbol under-resolved: phase jump {jump} after sample {sample}")]
    UnderResolved { sample: usize, jump: f64 },
    #[error("degenerate boundary field at sample {sample}: λ̃₁² + λ̃₂² = {norm:e}")]
    BoundaryDegeneracy { sample: usize, norm: f64 },
    #[error("point constraints have rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("successive approximations diverge: difference ratio {ratio} at iteration {iteration}")]
    NoContraction { ratio: f64, iteration: usize },
    #[error("no convergence after {iterations} iterations (last difference {difference:e})")]
    NotConverged { iterations: usize, difference: f64 },
    #[error("data violates solvability conditions: residual {residual:e}")]
    Unsolvable { residual: f64 },
    #[error("right-hand side assembly failed: {0}")]
    Assembly(String),
    #[error("problem file: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}
