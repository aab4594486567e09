//! Convex-concave procedure, subproblem backends and the two baselines.

mod backend;
mod baselines;
mod ccp;
mod verify;

pub use backend::{Capabilities, ClarabelBackend, SubproblemBackend, SubproblemOutcome, SubproblemStatus};
pub use baselines::{scenario_program, solve_cantelli_baseline, solve_scenario_baseline};
pub use ccp::{run_ccp, solve_ccp};
pub use verify::{verify_solution, ConstraintCheck, VerificationReport};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reformulation::RiskEntry;
use crate::validation::ValidationReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcpConfig {
    pub max_iterations: usize,
    pub objective_tol: f64,
    pub slack_tol: f64,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Starting controls per vehicle; zeros when absent.
    #[serde(skip)]
    pub warm_start: Option<Vec<DVector<f64>>>,
}

impl Default for CcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            objective_tol: 1e-6,
            slack_tol: 1e-8,
            penalty_initial: 10.0,
            penalty_growth: 5.0,
            penalty_max: 1e6,
            warm_start: None,
        }
    }
}

impl CcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.objective_tol > 0.0 && self.slack_tol > 0.0) {
            return Err(Error::invalid("convergence tolerances must be positive"));
        }
        if !(self.penalty_initial > 0.0 && self.penalty_growth >= 1.0 && self.penalty_max >= self.penalty_initial) {
            return Err(Error::invalid("penalty schedule needs initial > 0, growth >= 1, cap >= initial"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Scenario,
    Cantelli,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "scenario" => Ok(Method::Scenario),
            "cantelli" => Ok(Method::Cantelli),
            other => Err(Error::invalid(format!("unknown method `{other}` (proposed|scenario|cantelli)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcpStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `J(U)` at the subproblem solution.
    pub objective: f64,
    /// Sum of the smallest slacks that make every linearized collision
    /// constraint hold at the subproblem solution.
    pub slack_sum: f64,
    pub penalty: f64,
    /// `J + penalty · slack_sum`.
    pub penalized_objective: f64,
    /// `J(Uᵖ) + penalty · Σ violation(Uᵖ)`: the penalized cost of staying at
    /// the previous iterate, which the subproblem optimum cannot exceed.
    pub descent_bound: Option<f64>,
    pub status: SubproblemStatus,
    pub step_norm: f64,
    pub backend_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub target: Vec<RiskEntry>,
    pub obstacle: Vec<RiskEntry>,
    pub pairwise: Vec<RiskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub method: Method,
    pub status: CcpStatus,
    /// Stacked `U_i` per vehicle.
    pub controls: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub risk: Option<RiskSummary>,
    pub ledger: Vec<IterationRecord>,
    pub backend: String,
    pub solve_seconds: f64,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
}

impl Solution {
    pub fn control_vectors(&self) -> Vec<DVector<f64>> {
        self.controls.iter().map(|u| DVector::from_column_slice(u)).collect()
    }

    pub fn converged(&self) -> bool {
        self.status == CcpStatus::Converged
    }
}
