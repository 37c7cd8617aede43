//! Reconstruction of the normal rate ċ from the tangential rates.

mod path;
mod solve;

pub use path::PathIntegrator;
pub use solve::{
    gamma_t, kernel_k_a, lipschitz_p, solve_cdot, CdotContext, CdotError, CdotOptions, CdotSolution, DENOMINATOR_FLOOR,
};
