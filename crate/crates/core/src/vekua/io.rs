use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BoundaryProblem, BvpOptions, EOperator, Pairing, ParameterPolicy, SolutionFamily, VekuaError};
use crate::grid::{DiskGrid, Field};

/// Areal E-term data of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ETerm {
    pub q0: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default)]
    pub base: usize,
}

/// Self-describing boundary-value problem dump. Field samples follow the grid
/// node order: center first, then ring by ring, angles counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub format: String,
    pub grid: DiskGrid,
    pub lambda: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    #[serde(default)]
    pub e: Option<ETerm>,
    pub psi: Vec<Complex64>,
    #[serde(default)]
    pub policy: ParameterPolicy,
    #[serde(default)]
    pub options: BvpOptions,
    /// Known solution, when the problem was manufactured from one.
    #[serde(default)]
    pub exact: Option<Vec<Complex64>>,
}

pub const PROBLEM_FORMAT: &str = "mgdeform-bvp/1";

impl ProblemFile {
    pub fn from_problem(p: &BoundaryProblem) -> Self {
        Self {
            format: PROBLEM_FORMAT.into(),
            grid: p.grid,
            lambda: p.lambda.clone(),
            phi: p.phi.clone(),
            a: p.a.values().to_vec(),
            b: p.b.values().to_vec(),
            e: p.e.as_ref().map(|e| ETerm {
                q0: e.q0.values().to_vec(),
                v: e.v.values().to_vec(),
                pairing: e.pairing,
                base: e.base(),
            }),
            psi: p.psi.values().to_vec(),
            policy: ParameterPolicy::LeastNorm,
            options: BvpOptions::default(),
            exact: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, VekuaError> {
        if text.trim().is_empty() {
            return Err(VekuaError::Format("empty problem file".into()));
        }
        let p: ProblemFile = serde_json::from_str(text)
            .map_err(|e| VekuaError::Format(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if p.format != PROBLEM_FORMAT {
            return Err(VekuaError::Format(format!("unknown format tag {:?}, expected {PROBLEM_FORMAT:?}", p.format)));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn problem(&self) -> Result<BoundaryProblem, VekuaError> {
        let g = DiskGrid::new(self.grid.n_r, self.grid.n_theta)?;
        let e = match &self.e {
            Some(t) => Some(EOperator::new(
                Field::from_vec(g, t.q0.clone())?,
                Field::from_vec(g, t.v.clone())?,
                t.pairing,
                t.base,
            )),
            None => None,
        };
        Ok(BoundaryProblem {
            grid: g,
            lambda: self.lambda.clone(),
            phi: self.phi.clone(),
            a: Field::from_vec(g, self.a.clone())?,
            b: Field::from_vec(g, self.b.clone())?,
            e,
            psi: Field::from_vec(g, self.psi.clone())?,
        })
    }
}

/// Solver output written by the `bvp` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub index: i64,
    pub dimension: usize,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub parameters: Vec<f64>,
    pub boundary_residual: f64,
    pub interior_residual: f64,
    pub solvability: Vec<f64>,
    pub adjoint_residuals: Vec<f64>,
    pub recovery_error: Option<f64>,
    pub solution: Vec<Complex64>,
    pub basis: Vec<Vec<Complex64>>,
}

impl SolutionFile {
    pub fn new(fam: &SolutionFamily, exact: Option<&[Complex64]>) -> Self {
        let recovery_error = exact.map(|ex| {
            let scale = ex.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            fam.solution.values().iter().zip(ex).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
        });
        Self {
            index: fam.index,
            dimension: fam.dimension(),
            iterations: fam.iterations,
            ratios: fam.ratios.clone(),
            parameters: fam.parameters.clone(),
            boundary_residual: fam.boundary_residual,
            interior_residual: fam.interior_residual,
            solvability: fam.solvability.clone(),
            adjoint_residuals: fam.adjoint_residuals.clone(),
            recovery_error,
            solution: fam.solution.values().to_vec(),
            basis: fam.basis.iter().map(|b| b.values().to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vekua::monomial_symbol;

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(ProblemFile::parse("  \n"), Err(VekuaError::Format(_))));
    }

    #[test]
    fn round_trip() {
        let g = DiskGrid::new(8, 16).unwrap();
        let p = BoundaryProblem::holomorphic(g, monomial_symbol(1, 16), vec![0.5; 16]);
        let f = ProblemFile::from_problem(&p);
        let back = ProblemFile::parse(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.problem().unwrap().phi, p.phi);
    }
}
