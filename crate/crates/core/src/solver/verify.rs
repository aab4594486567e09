//! Re-checks a solution against its deterministic constraints straight from
//! the raw samples, without moment matrices or the backend's report.

use nalgebra::DVector;
use serde::Serialize;

use super::Solution;
use crate::bounds::SampleBound;
use crate::error::{Error, Result};
use crate::problem::{RiskMode, ScenarioSpec};
use crate::reformulation::check_samples;
use crate::sampling::{sample_mean_std_scalar, DisturbanceSampleSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub label: String,
    /// Non-negative when satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<ConstraintCheck>,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Per-sample trajectories `x_i^[s](k)`, indexed `[vehicle][sample][k-1]`.
fn sample_trajectories(spec: &ScenarioSpec, samples: &[DisturbanceSampleSet], controls: &[DVector<f64>]) -> Vec<Vec<Vec<DVector<f64>>>> {
    let (n, m) = (spec.state_dim(), spec.input_dim());
    spec.vehicles
        .iter()
        .enumerate()
        .map(|(v, veh)| {
            (0..samples[v].sample_count())
                .map(|s| {
                    let w = samples[v].data().column(s);
                    let mut x = veh.x0.clone();
                    (0..spec.horizon)
                        .map(|k| {
                            let u = controls[v].rows(k * m, m).into_owned();
                            let wk = w.rows(k * n, n).into_owned();
                            x = spec.system.step(&x, &u, &wk);
                            x.clone()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Evaluates every reformulated constraint of a proposed-method solution at
/// its controls. Passes when no margin is below `−tolerance`.
pub fn verify_solution(
    spec: &ScenarioSpec,
    samples: &[DisturbanceSampleSet],
    solution: &Solution,
    tolerance: f64,
) -> Result<VerificationReport> {
    let ns = check_samples(spec, samples)?;
    let bound = SampleBound::new(ns)?;
    let controls = solution.control_vectors();
    if controls.len() != spec.vehicle_count() || controls.iter().any(|u| u.len() != spec.control_len()) {
        return Err(Error::dim("solution controls do not match the scenario"));
    }
    let risk = solution
        .risk
        .as_ref()
        .ok_or_else(|| Error::invalid("solution carries no risk allocation"))?;
    let traj = sample_trajectories(spec, samples, &controls);
    let mut checks = Vec::new();
    let m = spec.input_dim();

    for (v, u) in controls.iter().enumerate() {
        for (e, val) in u.iter().enumerate() {
            let (lo, hi) = (spec.control_lower[e % m], spec.control_upper[e % m]);
            checks.push(ConstraintCheck {
                label: format!("control bound vehicle {v} entry {e}"),
                margin: (val - lo).min(hi - val),
            });
        }
    }

    let mut j = 0;
    for (set, t) in spec.targets.iter().enumerate() {
        for row in 0..t.g.nrows() {
            let g = t.g.row(row);
            let vals: Vec<f64> = traj[t.vehicle].iter().map(|x| (g * &x[t.step - 1])[0]).collect();
            let (mean, std) = sample_mean_std_scalar(&vals)?;
            let lambda = risk.target[j].lambda;
            checks.push(ConstraintCheck {
                label: format!("target set {set} row {row}"),
                margin: t.h[row] - mean - lambda * std,
            });
            j += 1;
        }
    }
    if spec.risk.mode == RiskMode::Pwl && !risk.target.is_empty() {
        let theta = bound.theta();
        let mut total = 0.0;
        for (j, entry) in risk.target.iter().enumerate() {
            checks.push(ConstraintCheck {
                label: format!("target multiplier {j} above convexity threshold"),
                margin: entry.lambda - theta,
            });
            total += bound.f(entry.lambda)?;
        }
        checks.push(ConstraintCheck {
            label: "target risk budget".into(),
            margin: spec.alpha - total,
        });
    }

    let mut collision = |label: String, lambda: f64, radius: f64, vals: Vec<f64>| -> Result<()> {
        let (mean, std) = sample_mean_std_scalar(&vals)?;
        checks.push(ConstraintCheck { label, margin: mean - lambda * std - radius * radius });
        Ok(())
    };
    for (i, o) in spec.obstacles.iter().enumerate() {
        let vals = traj[o.vehicle]
            .iter()
            .map(|x| (&o.extraction * (&x[o.step - 1] - &o.position)).norm_squared())
            .collect();
        collision(format!("obstacle {i}"), risk.obstacle[i].lambda, o.radius, vals)?;
    }
    for (i, p) in spec.pairwise.iter().enumerate() {
        let vals = traj[p.first]
            .iter()
            .zip(&traj[p.second])
            .map(|(a, b)| (&p.extraction * (&a[p.step - 1] - &b[p.step - 1])).norm_squared())
            .collect();
        collision(format!("pairwise {i}"), risk.pairwise[i].lambda, p.radius, vals)?;
    }

    let worst_margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport {
        passed: worst_margin >= -tolerance,
        checks,
        worst_margin,
        tolerance,
    })
}
