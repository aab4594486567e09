//! End-to-end solver behaviour on small double-integrator instances.

use ccsoc::dynamics::{LtiSystem, VehicleState};
use ccsoc::problem::{position_extraction, ObstacleAvoidance, PairwiseAvoidance, RiskMode, ScenarioSpec, TargetSet};
use ccsoc::sampling::{synth_disturbances, DisturbanceSampleSet, GeneratorKind, GeneratorSpec};
use ccsoc::solver::{
    solve_cantelli_baseline, solve_ccp, solve_scenario_baseline, verify_solution, CcpConfig, CcpStatus, ClarabelBackend,
};
use ccsoc::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const STD: [f64; 4] = [0.002, 0.002, 0.0005, 0.0005];

/// Planar double integrator, unit step.
fn system() -> LtiSystem {
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, 1.0, 0.0,
        0.0, 1.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let b = DMatrix::from_row_slice(4, 2, &[0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 1.0]);
    LtiSystem::new(a, b, 1.0).unwrap()
}

/// Two vehicles swap ends of a corridor; vehicle 0 also skirts an obstacle.
fn swap_instance(with_collisions: bool) -> ScenarioSpec {
    let horizon = 6;
    let vs = vec![
        VehicleState { id: 0, x0: DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]) },
        VehicleState { id: 1, x0: DVector::from_vec(vec![4.0, 0.3, 0.0, 0.0]) },
    ];
    let mut spec = ScenarioSpec::new(system(), horizon, vs, 1.0);
    // 16 target rows; keeps each share well above the 1/(N_s+1) floor
    spec.alpha = 0.2;
    spec.targets.push(TargetSet::from_box(0, horizon, &[4.0, 0.0, 0.0, 0.0], &[0.3, 0.3, 0.2, 0.2]).unwrap());
    spec.targets.push(TargetSet::from_box(1, horizon, &[0.0, 0.3, 0.0, 0.0], &[0.3, 0.3, 0.2, 0.2]).unwrap());
    if with_collisions {
        let s = position_extraction(2, 4);
        for k in 1..=horizon {
            spec.pairwise.push(PairwiseAvoidance { first: 0, second: 1, step: k, extraction: s.clone(), radius: 1.0 });
            spec.obstacles.push(ObstacleAvoidance {
                vehicle: 0,
                step: k,
                extraction: s.clone(),
                radius: 0.5,
                position: DVector::from_vec(vec![2.0, -1.2, 0.0, 0.0]),
            });
        }
    }
    spec
}

fn generator() -> GeneratorSpec {
    GeneratorSpec::new(GeneratorKind::Gaussian, STD.to_vec(), None).unwrap()
}

fn samples(spec: &ScenarioSpec, n: usize, seed: u64) -> Vec<DisturbanceSampleSet> {
    (0..spec.vehicle_count())
        .map(|v| synth_disturbances(&generator(), v, spec.horizon, n, seed).unwrap())
        .collect()
}

#[test]
fn target_only_problem_converges_in_one_iteration() {
    let spec = swap_instance(false);
    let sol = solve_ccp(&spec, &samples(&spec, 500, 1), &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    assert_eq!(sol.status, CcpStatus::Converged);
    assert_eq!(sol.iterations, 1);
    assert_eq!(sol.ledger[0].slack_sum, 0.0);
}

#[test]
fn collision_problem_satisfies_ccp_contract() {
    let spec = swap_instance(true);
    let data = samples(&spec, 1000, 2);
    let sol = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    assert_eq!(sol.status, CcpStatus::Converged, "{:#?}", sol.ledger);
    assert!(sol.iterations > 1);

    let last = sol.ledger.last().unwrap();
    let prev = &sol.ledger[sol.ledger.len() - 2];
    assert!((last.objective - prev.objective).abs() < 1e-6);
    assert!(last.slack_sum < 1e-8);
    for rec in &sol.ledger {
        if let Some(bound) = rec.descent_bound {
            assert!(rec.penalized_objective <= bound + 1e-6, "{rec:?}");
        }
    }

    let report = verify_solution(&spec, &data, &sol, 1e-6).unwrap();
    assert!(report.passed, "{:?}", report.checks.iter().filter(|c| c.margin < -1e-6).collect::<Vec<_>>());
}

#[test]
fn reruns_are_bit_identical() {
    let spec = swap_instance(true);
    let data = samples(&spec, 400, 3);
    let a = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    let b = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    assert_eq!(a.controls, b.controls);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn optimized_risk_is_no_worse_than_uniform() {
    let mut spec = swap_instance(false);
    let data = samples(&spec, 300, 4);
    let uniform = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    spec.risk.mode = RiskMode::Pwl;
    let pwl = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
    assert!(pwl.objective <= uniform.objective * (1.0 + 1e-6), "{} > {}", pwl.objective, uniform.objective);
    assert!(verify_solution(&spec, &data, &pwl, 1e-6).unwrap().passed);
}

#[test]
fn cantelli_baseline_is_cheaper_than_sample_bound() {
    let spec = swap_instance(true);
    let data = samples(&spec, 500, 5);
    let g = generator();
    let means = vec![g.stacked_mean(spec.horizon); 2];
    let covs = vec![g.stacked_covariance(spec.horizon); 2];
    let cfg = CcpConfig::default();
    let backend = ClarabelBackend::default();
    let proposed = solve_ccp(&spec, &data, &cfg, &backend).unwrap();
    let cantelli = solve_cantelli_baseline(&spec, &means, &covs, &cfg, &backend).unwrap();
    assert!(cantelli.converged() && proposed.converged());
    assert!(cantelli.objective <= proposed.objective * (1.0 + 1e-6));
}

#[test]
fn scenario_baseline_rejects_collisions_and_beats_proposed_on_targets() {
    let backend = ClarabelBackend::default();
    let spec = swap_instance(true);
    let data = samples(&spec, 200, 6);
    assert!(matches!(solve_scenario_baseline(&spec, &data, &backend), Err(Error::InvalidParameter(_))));

    let spec = swap_instance(false);
    let data = samples(&spec, 200, 6);
    let scenario = solve_scenario_baseline(&spec, &data, &backend).unwrap();
    let proposed = solve_ccp(&spec, &data, &CcpConfig::default(), &backend).unwrap();
    assert!(scenario.objective <= proposed.objective);
}

#[test]
fn unreachable_target_is_infeasible() {
    let mut spec = swap_instance(false);
    spec.targets[0] = TargetSet::from_box(0, spec.horizon, &[100.0, 0.0, 0.0, 0.0], &[0.1, 0.1, 0.1, 0.1]).unwrap();
    let data = samples(&spec, 200, 7);
    assert!(matches!(
        solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()),
        Err(Error::InfeasibleSubproblem { iteration: 1 })
    ));
}

#[test]
fn sample_mismatch_is_rejected() {
    let spec = swap_instance(false);
    let mut data = samples(&spec, 100, 8);
    data[1] = synth_disturbances(&generator(), 1, spec.horizon, 50, 8).unwrap();
    assert!(matches!(
        solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()),
        Err(Error::Dimension(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Solutions converge and re-check against their own samples.
    #[test]
    fn converged_solutions_pass_independent_recheck(
        seed in 0u64..1_000,
        ns in 200usize..600,
        gap in 0.2f64..0.8,
        pwl in any::<bool>(),
    ) {
        let mut spec = swap_instance(true);
        spec.vehicles[1].x0[1] = gap;
        if pwl {
            spec.risk.mode = RiskMode::Pwl;
        }
        let data = samples(&spec, ns, seed);
        let sol = solve_ccp(&spec, &data, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
        prop_assert!(sol.converged());
        let report = verify_solution(&spec, &data, &sol, 1e-6).unwrap();
        prop_assert!(report.passed, "worst margin {}", report.worst_margin);
    }
}
