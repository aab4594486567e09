use std::time::Instant;

use nalgebra::DVector;

use super::{CcpConfig, CcpStatus, IterationRecord, Method, RiskSummary, Solution, SubproblemBackend, SubproblemStatus};
use crate::bounds::SampleBound;
use crate::error::{Error, Result};
use crate::problem::ScenarioSpec;
use crate::reformulation::{check_samples, Reformulation, ScenarioMoments, TailModel};
use crate::sampling::DisturbanceSampleSet;

/// Proposed method: sample moments, sample-statistics multipliers.
pub fn solve_ccp(
    spec: &ScenarioSpec,
    samples: &[DisturbanceSampleSet],
    config: &CcpConfig,
    backend: &dyn SubproblemBackend,
) -> Result<Solution> {
    spec.validate()?;
    let dynamics = spec.dynamics()?;
    let ns = check_samples(spec, samples)?;
    let tail = TailModel::Sample(SampleBound::new(ns)?);
    let moments = ScenarioMoments::from_samples(spec, &dynamics, samples)?;
    let reform = Reformulation::new(spec, &dynamics, &moments, tail)?;
    run_ccp(&reform, config, backend, Method::Proposed)
}

/// Iterates linearize / solve / update-penalty until both the objective
/// change and the slack sum fall under their tolerances in one iteration.
pub fn run_ccp(
    reform: &Reformulation,
    config: &CcpConfig,
    backend: &dyn SubproblemBackend,
    method: Method,
) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let spec = reform.spec();
    let layout = *reform.layout();
    let mut current = match &config.warm_start {
        Some(w) => {
            if w.len() != layout.vehicles || w.iter().any(|u| u.len() != layout.control_len) {
                return Err(Error::dim("warm start does not match the control layout"));
            }
            w.clone()
        }
        None => vec![DVector::zeros(layout.control_len); layout.vehicles],
    };
    let mut penalty = config.penalty_initial;
    let mut ledger: Vec<IterationRecord> = Vec::new();
    let mut status = CcpStatus::MaxIterations;
    let mut last_x = reform.join_controls(&current);

    for iteration in 1..=config.max_iterations {
        let program = reform.build(&current, penalty)?;
        let out = backend.solve(&program)?;
        match out.status {
            SubproblemStatus::Optimal => {}
            SubproblemStatus::Infeasible => return Err(Error::InfeasibleSubproblem { iteration }),
            SubproblemStatus::Unbounded => {
                return Err(Error::Backend(format!("subproblem unbounded at iteration {iteration}")))
            }
        }
        let next = reform.split_controls(&out.x);
        let slack_sum: f64 = reform.required_slack(&program, &out.x).iter().fold(0.0, |a, s| a + s);
        let objective = spec.objective(&next);
        let descent_bound = (iteration > 1)
            .then(|| spec.objective(&current) + penalty * reform.collision_violation(&current));
        let step_norm = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        let converged = if !spec.has_collisions() {
            true
        } else {
            let objective_settled = ledger
                .last()
                .is_some_and(|prev| (objective - prev.objective).abs() < config.objective_tol);
            objective_settled && slack_sum < config.slack_tol
        };
        ledger.push(IterationRecord {
            iteration,
            objective,
            slack_sum,
            penalty,
            penalized_objective: objective + penalty * slack_sum,
            descent_bound,
            status: out.status,
            step_norm,
            backend_iterations: out.iterations,
        });
        if slack_sum > config.slack_tol {
            penalty = (penalty * config.penalty_growth).min(config.penalty_max);
        }
        current = next;
        last_x = out.x;
        if converged {
            status = CcpStatus::Converged;
            break;
        }
    }

    let allocation = reform.allocation();
    Ok(Solution {
        method,
        status,
        objective: spec.objective(&current),
        controls: current.iter().map(|u| u.as_slice().to_vec()).collect(),
        iterations: ledger.len(),
        risk: Some(RiskSummary {
            target: reform.target_risk(&last_x),
            obstacle: allocation.obstacle.clone(),
            pairwise: allocation.pairwise.clone(),
        }),
        ledger,
        backend: backend.name().to_string(),
        solve_seconds: start.elapsed().as_secs_f64(),
        config_hash: None,
        validation: None,
    })
}
