use serde::{Deserialize, Serialize};

use crate::cdot::CdotOptions;
use crate::vekua::BvpOptions;

/// Tangent field v = lⁱ y,ᵢ on the boundary, as a function of the boundary angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TangentField {
    /// l = (cos nθ, -sin nθ): index n of the boundary problem in the
    /// swapped plane where it is solved.
    Winding { index: i64 },
    /// Constant l (index 0).
    Constant { l: [f64; 2] },
}

impl TangentField {
    pub fn at(&self, theta: f64) -> [f64; 2] {
        match self {
            Self::Winding { index } => {
                let a = *index as f64 * theta;
                [a.cos(), -a.sin()]
            }
            Self::Constant { l } => *l,
        }
    }
}

/// Shape of the prescribed boundary rate γ̃̇(s); the amplitude is ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaRate {
    Zero,
    /// ε cos(m s + phase).
    Cosine {
        mode: i64,
        phase: f64,
    },
}

impl GammaRate {
    pub fn at(&self, epsilon: f64, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Cosine { mode, phase } => epsilon * (*mode as f64 * s + phase).cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub tangent: TangentField,
    pub gamma: GammaRate,
    /// Bound on |γ̃̇|.
    pub epsilon: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            tangent: TangentField::Winding { index: 1 },
            gamma: GammaRate::Cosine { mode: 2, phase: 0.0 },
            epsilon: 1e-3,
        }
    }
}

/// How the free parameters left after fixing z(x₀) = 0 are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterChoice {
    #[default]
    LeastNorm,
    /// Coordinates along the null space of the point constraints.
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Final time.
    pub t0: f64,
    /// Step; t0/20 when absent.
    pub dt: Option<f64>,
    /// Fixed point, snapped to the nearest grid node.
    pub x0: [f64; 2],
    pub boundary: BoundarySpec,
    pub parameters: ParameterChoice,
    pub bvp: BvpOptions,
    pub cdot: CdotOptions,
    /// Order of the transport series reported against the ODE transport.
    pub k_max: usize,
    /// Rebuild-oracle check every this many steps (0 disables).
    pub oracle_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t0: 0.05,
            dt: None,
            x0: [0.0, 0.0],
            boundary: BoundarySpec::default(),
            parameters: ParameterChoice::LeastNorm,
            bvp: BvpOptions { full_basis: true, ..BvpOptions::default() },
            cdot: CdotOptions::default(),
            k_max: 4,
            oracle_every: 1,
        }
    }
}

impl FlowConfig {
    pub fn step_size(&self) -> f64 {
        self.dt.unwrap_or(self.t0 / 20.0)
    }

    /// Number of steps to reach t0 (the last one may be shorter).
    pub fn steps(&self) -> usize {
        let n = self.t0 / self.step_size();
        (n - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        let dt = self.step_size();
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(format!("t0 must be positive, got {}", self.t0));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(format!("dt must be positive, got {dt}"));
        }
        if !(self.boundary.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.boundary.epsilon));
        }
        if self.x0[0].hypot(self.x0[1]) > 1.0 {
            return Err(format!("x0 = {:?} lies outside the unit disk", self.x0));
        }
        for (name, v) in
            [("bvp.tol", self.bvp.tol), ("bvp.solvability_tol", self.bvp.solvability_tol), ("cdot.tol", self.cdot.tol)]
        {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if let TangentField::Constant { l } = self.boundary.tangent {
            if l[0].hypot(l[1]) == 0.0 {
                return Err("constant tangent field must be nonzero".into());
            }
        }
        Ok(())
    }
}
