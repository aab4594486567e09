use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{run_ccp, CcpConfig, CcpStatus, IterationRecord, Method, Solution, SubproblemBackend, SubproblemStatus};
use crate::dynamics::ConcatenatedDynamics;
use crate::error::{Error, Result};
use crate::problem::ScenarioSpec;
use crate::reformulation::{check_samples, AffineExpr, LinearConstraint, Origin, ReformulatedProgram, Reformulation, ScenarioMoments, TailModel, VariableLayout};
use crate::sampling::DisturbanceSampleSet;

/// Every target halfspace enforced for every sample:
/// `G (A^k x0 + C(k) U + D(k) W^[s]) ≤ h`. `samples[v]` holds vehicle `v`'s
/// stacked samples as columns; all vehicles need the same count.
pub fn scenario_program(
    spec: &ScenarioSpec,
    dynamics: &ConcatenatedDynamics,
    samples: &[&DMatrix<f64>],
) -> Result<ReformulatedProgram> {
    if spec.has_collisions() {
        return Err(Error::invalid("the scenario baseline handles target-set constraints only"));
    }
    if samples.len() != spec.vehicle_count() {
        return Err(Error::dim("need one sample matrix per vehicle"));
    }
    if samples.iter().any(|s| s.nrows() != dynamics.disturbance_len() || s.ncols() == 0) {
        return Err(Error::dim("sample matrices must have N·n rows and at least one column"));
    }
    let layout = VariableLayout {
        vehicles: spec.vehicle_count(),
        control_len: spec.control_len(),
        lambda_count: 0,
        epigraph_count: 0,
        slack_count: 0,
    };
    let mut linear = Vec::new();
    for (set, t) in spec.targets.iter().enumerate() {
        let x0 = &spec.vehicles[t.vehicle].x0;
        let k = t.step;
        for (row, g) in t.g.row_iter().enumerate() {
            let g = g.transpose();
            let base = g.dot(&(dynamics.state_power(k) * x0)) - t.h[row];
            let grad = dynamics.control_block(k).tr_mul(&g);
            let shifts = samples[t.vehicle].tr_mul(&dynamics.disturbance_block(k).tr_mul(&g));
            for (sample, shift) in shifts.iter().enumerate() {
                let mut expr = AffineExpr::constant(base + shift);
                for (e, c) in grad.iter().enumerate() {
                    expr.push(layout.control(t.vehicle, e), *c);
                }
                linear.push(LinearConstraint { expr, origin: Origin::TargetSample { set, row, sample } });
            }
        }
    }
    let m = spec.input_dim();
    let total = layout.total();
    Ok(ReformulatedProgram {
        layout,
        quadratic: (0..total).map(|i| 2.0 * spec.control_weights[i % layout.control_len % m]).collect(),
        linear_objective: vec![0.0; total],
        linear,
        cones: Vec::new(),
        lower: (0..total).map(|i| spec.control_lower[i % layout.control_len % m]).collect(),
        upper: (0..total).map(|i| spec.control_upper[i % layout.control_len % m]).collect(),
        penalty: 0.0,
    })
}

/// Scenario approach: one convex program, no probability machinery.
pub fn solve_scenario_baseline(
    spec: &ScenarioSpec,
    samples: &[DisturbanceSampleSet],
    backend: &dyn SubproblemBackend,
) -> Result<Solution> {
    spec.validate()?;
    let start = Instant::now();
    let dynamics = spec.dynamics()?;
    check_samples(spec, samples)?;
    let mats: Vec<&DMatrix<f64>> = samples.iter().map(|s| s.data()).collect();
    let program = scenario_program(spec, &dynamics, &mats)?;
    let out = backend.solve(&program)?;
    match out.status {
        SubproblemStatus::Optimal => {}
        SubproblemStatus::Infeasible => return Err(Error::InfeasibleSubproblem { iteration: 1 }),
        SubproblemStatus::Unbounded => return Err(Error::Backend("scenario program unbounded".into())),
    }
    let controls: Vec<DVector<f64>> = (0..program.layout.vehicles)
        .map(|v| DVector::from_column_slice(&out.x[program.layout.control(v, 0)..program.layout.control(v + 1, 0)]))
        .collect();
    let objective = spec.objective(&controls);
    Ok(Solution {
        method: Method::Scenario,
        status: CcpStatus::Converged,
        controls: controls.iter().map(|u| u.as_slice().to_vec()).collect(),
        objective,
        iterations: 1,
        risk: None,
        ledger: vec![IterationRecord {
            iteration: 1,
            objective,
            slack_sum: 0.0,
            penalty: 0.0,
            penalized_objective: objective,
            descent_bound: None,
            status: out.status,
            step_norm: controls.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt(),
            backend_iterations: out.iterations,
        }],
        backend: backend.name().to_string(),
        solve_seconds: start.elapsed().as_secs_f64(),
        config_hash: None,
        validation: None,
    })
}

/// Same pipeline as the proposed method with exact Gaussian moments and
/// Cantelli multipliers.
pub fn solve_cantelli_baseline(
    spec: &ScenarioSpec,
    means: &[DVector<f64>],
    covariances: &[DMatrix<f64>],
    config: &CcpConfig,
    backend: &dyn SubproblemBackend,
) -> Result<Solution> {
    spec.validate()?;
    let dynamics = spec.dynamics()?;
    let moments = ScenarioMoments::from_gaussian(spec, &dynamics, means, covariances)?;
    let reform = Reformulation::new(spec, &dynamics, &moments, TailModel::Cantelli)?;
    run_ccp(&reform, config, backend, Method::Cantelli)
}
