//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p ccsoc --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ccsoc::bounds::SampleBound;
use ccsoc::config::ScenarioConfig;
use ccsoc::dynamics::{concatenate, LtiSystem, VehicleState};
use ccsoc::problem::{RiskMode, ScenarioSpec, TargetSet};
use ccsoc::sampling::{
    halfspace_moments, quadratic_form_moments, synth_disturbances, DisturbanceSampleSet, DisturbanceSampler,
    GeneratorKind, GeneratorSpec, MomentCache, ProcessSampler,
};
use ccsoc::solver::{
    solve_cantelli_baseline, solve_ccp, solve_scenario_baseline, verify_solution, CcpConfig, ClarabelBackend, Solution,
};
use ccsoc::validation::{tail_test, validate_solution, ValidationReport, TailDistribution};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} {name} failed: {detail}");
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(&config_path(name)).unwrap()
}

fn validate(cfg: &ScenarioConfig, samples: &[DisturbanceSampleSet], sol: &Solution, trials: u64, seed: u64) -> ValidationReport {
    let samplers = cfg.samplers(samples);
    let refs: Vec<&dyn DisturbanceSampler> = samplers.iter().map(|b| b.as_ref()).collect();
    validate_solution(&cfg.spec, &sol.control_vectors(), &refs, trials, seed).unwrap()
}

fn ratios(report: &ValidationReport) -> String {
    report
        .groups
        .iter()
        .map(|g| format!("{} {:.4}", g.name, g.ratio))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn criterion_1_tail_bound_holds_empirically() {
    let lambdas = [0.5, 1.0, 2.0, 4.0];
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (d, dist) in TailDistribution::STANDARD.iter().enumerate() {
        for (s, ns) in [10usize, 100, 1000].into_iter().enumerate() {
            let seed = 1000 + 10 * d as u64 + s as u64;
            let report = tail_test(*dist, ns, &lambdas, 100_000, seed).unwrap();
            for c in &report.cells {
                worst = worst.max(c.empirical - c.bound).max(c.in_sample_empirical - c.in_sample_bound);
                if !(c.passed && c.in_sample_passed) {
                    failures.push(format!("{} N_s={ns} λ={}", dist.name(), c.lambda));
                }
            }
        }
    }
    verdict(
        1,
        "tail bound",
        failures.is_empty(),
        &format!("48 cells, worst excess over bound {worst:.2e}, failing {failures:?}"),
    );
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn population_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[test]
fn criterion_2_moment_identities_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=5);
        let ns = rng.random_range(5..=60);
        let a = random_matrix(n, n, &mut rng) * 0.5;
        let b = random_matrix(n, m, &mut rng);
        let sys = LtiSystem::new(a, b, 1.0).unwrap();
        let dynamics = concatenate(&sys, horizon).unwrap();
        let k = rng.random_range(1..=horizon);
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let wi = DisturbanceSampleSet::new(0, horizon, n, random_matrix(horizon * n, ns, &mut rng) * scale, "random").unwrap();
        let wj = DisturbanceSampleSet::new(1, horizon, n, random_matrix(horizon * n, ns, &mut rng) * scale, "random").unwrap();
        let q = rng.random_range(1..=n);
        let s = random_matrix(q, n, &mut rng);
        let zbar = random_matrix(q, 1, &mut rng).column(0).into_owned();
        let sd = &s * dynamics.disturbance_block(k);

        for paired in [false, true] {
            let qf = quadratic_form_moments(&wi, paired.then_some(&wj), &dynamics, &s, k).unwrap();
            let values: Vec<f64> = (0..ns)
                .map(|c| {
                    let w = if paired { wi.sample(c) - wj.sample(c) } else { wi.sample(c) };
                    (&zbar + &sd * w).norm_squared()
                })
                .collect();
            let (mean, std) = population_mean_std(&values);
            worst = worst.max(rel_err(qf.mean_of_square(&zbar), mean));
            worst = worst.max(rel_err(qf.std_of_square(&zbar), std));
        }

        let g = random_matrix(n, 1, &mut rng).column(0).into_owned();
        let x0 = random_matrix(n, 1, &mut rng).column(0).into_owned();
        let u = random_matrix(horizon * m, 1, &mut rng).column(0).into_owned();
        let hs = halfspace_moments(&MomentCache::from_samples(&wi).unwrap(), &dynamics, &g, k, &x0).unwrap();
        let values: Vec<f64> = (0..ns)
            .map(|c| {
                let x = dynamics.state_power(k) * &x0 + dynamics.control_block(k) * &u + dynamics.disturbance_block(k) * wi.sample(c);
                g.dot(&x)
            })
            .collect();
        let (mean, std) = population_mean_std(&values);
        worst = worst.max(rel_err(hs.std, std));
        // the mean can sit near zero, so compare it on the spread's scale
        worst = worst.max((hs.mean_at(&u) - mean).abs() / std.max(mean.abs()));
    }
    verdict(2, "moment identities", worst <= 1e-9, &format!("200 instances, worst relative error {worst:.2e}"));
}

#[test]
fn criterion_3_risk_algebra() {
    let mut worst_inverse: f64 = 0.0;
    for ns in [2usize, 10, 100, 5000] {
        let b = SampleBound::new(ns).unwrap();
        let floor = b.floor();
        for i in 1..=100 {
            let omega = floor + (1.0 - floor) * i as f64 / 101.0;
            let lambda = b.lambda_of_omega(omega).unwrap();
            worst_inverse = worst_inverse.max((b.f(lambda).unwrap() - omega).abs());
        }
    }

    let mut worst_cubic: f64 = 0.0;
    let mut theta_below = true;
    let mut ns = 2.0f64;
    while ns <= 1e6 {
        let b = SampleBound::new(ns.round() as usize).unwrap();
        let theta = b.theta();
        worst_cubic = worst_cubic.max(b.cubic(theta).abs());
        theta_below &= theta < 3f64.sqrt().recip();
        ns *= 1.25;
    }

    let mut shape_ok = true;
    for ns in [2usize, 10, 100, 1000, 100_000] {
        let b = SampleBound::new(ns).unwrap();
        let theta = b.theta();
        let pts = 2000;
        let vals: Vec<f64> = (0..=pts)
            .map(|i| b.f(theta + (50.0 - theta) * i as f64 / pts as f64).unwrap())
            .collect();
        shape_ok &= vals.windows(2).all(|w| w[1] < w[0]);
        shape_ok &= vals.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-15);
    }

    verdict(
        3,
        "risk algebra",
        worst_inverse <= 1e-12 && worst_cubic <= 1e-10 && theta_below && shape_ok,
        &format!(
            "inverse error {worst_inverse:.2e}, cubic residual {worst_cubic:.2e}, Θ < 3^-1/2 {theta_below}, decreasing and convex on [Θ, 50] {shape_ok}"
        ),
    );
}

#[test]
fn criterion_4_gaussian_reproduction() {
    let cfg = load("gaussian_rendezvous.cfg");
    let samples = cfg.load_samples(None).unwrap();
    let proposed = solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend).unwrap();
    let (means, covs) = cfg.true_moments().unwrap();
    let cantelli = solve_cantelli_baseline(&cfg.spec, &means, &covs, &cfg.ccp, &cfg.backend).unwrap();
    let report = validate(&cfg, &samples, &proposed, 10_000, 44);

    let all_one = report.groups.len() == 3 && report.groups.iter().all(|g| g.ratio == 1.0);
    let ordered = cantelli.objective <= proposed.objective && proposed.objective <= 1.1 * cantelli.objective;
    verdict(
        4,
        "gaussian rendezvous",
        proposed.converged() && proposed.iterations <= 30 && all_one && ordered,
        &format!(
            "{} iterations, cost {:.5} vs cantelli {:.5} (gap {:.2}%), ratios {}",
            proposed.iterations,
            proposed.objective,
            cantelli.objective,
            100.0 * (proposed.objective / cantelli.objective - 1.0),
            ratios(&report)
        ),
    );
}

#[test]
fn criterion_5_los_reproduction() {
    let cfg = load("los_rendezvous.cfg");
    assert_eq!(cfg.spec.risk.mode, RiskMode::Pwl);
    let samples = cfg.load_samples(None).unwrap();
    let t = Instant::now();
    let proposed = solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend).unwrap();
    let proposed_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let scenario = solve_scenario_baseline(&cfg.spec, &samples, &cfg.backend).unwrap();
    let scenario_secs = t.elapsed().as_secs_f64();
    let report = validate(&cfg, &samples, &proposed, 10_000, 55);
    let target = report.group("target").map_or(0.0, |g| g.ratio);

    println!("los timings: proposed {proposed_secs:.3} s, scenario {scenario_secs:.3} s");
    verdict(
        5,
        "los rendezvous",
        proposed.converged() && proposed.objective >= scenario.objective && target == 1.0,
        &format!(
            "cost {:.4e} vs scenario {:.4e}, target ratio {target:.4}, {proposed_secs:.3} s vs {scenario_secs:.3} s",
            proposed.objective, scenario.objective
        ),
    );
}

#[test]
fn criterion_6_ccp_contract() {
    let cfg = load("gaussian_rendezvous.cfg");
    let samples = cfg.load_samples(None).unwrap();
    let a = solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend).unwrap();
    let last = a.ledger.last().unwrap();
    let delta = if a.ledger.len() >= 2 {
        (last.objective - a.ledger[a.ledger.len() - 2].objective).abs()
    } else {
        0.0
    };
    let check = verify_solution(&cfg.spec, &samples, &a, 1e-6).unwrap();

    let again = cfg.load_samples(None).unwrap();
    let b = solve_ccp(&cfg.spec, &again, &cfg.ccp, &cfg.backend).unwrap();
    let identical = a.controls == b.controls && a.objective.to_bits() == b.objective.to_bits();

    verdict(
        6,
        "ccp contract",
        a.converged() && delta < 1e-6 && last.slack_sum < 1e-8 && check.passed && identical,
        &format!(
            "|ΔJ| {delta:.2e}, slack {:.2e}, worst re-check margin {:.2e}, bit-identical rerun {identical}",
            last.slack_sum, check.worst_margin
        ),
    );
}

/// One vehicle pushed from outside a single halfspace onto its edge, so the
/// chance constraint is active.
fn tight_instance(kind: GeneratorKind, ns: usize, seed: u64) -> (ScenarioSpec, Vec<DisturbanceSampleSet>, GeneratorSpec) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let sys = LtiSystem::new(a, b, 1.0).unwrap();
    let horizon = 3;
    let mut spec = ScenarioSpec::new(sys, horizon, vec![VehicleState { id: 0, x0: DVector::from_vec(vec![1.0, 0.0]) }], 5.0);
    spec.alpha = 0.3;
    spec.targets.push(TargetSet {
        vehicle: 0,
        step: horizon,
        g: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        h: DVector::from_vec(vec![0.0]),
    });
    let gen = GeneratorSpec::new(kind, vec![0.05, 0.02], None).unwrap();
    let samples = vec![synth_disturbances(&gen, 0, horizon, ns, seed).unwrap()];
    (spec, samples, gen)
}

#[test]
fn criterion_7_inflated_thresholds_stay_within_guarantee() {
    let trials = 100_000;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: String, report: &ValidationReport| {
        for g in &report.groups {
            let excess = g.violation() - (g.threshold + 3.0 * g.stderr);
            ok &= excess <= 0.0;
            lines.push(format!("{name}/{} violation {:.4} vs {:.2}", g.name, g.violation(), g.threshold));
        }
    };

    let mut cfg = load("gaussian_rendezvous.cfg");
    (cfg.spec.alpha, cfg.spec.beta, cfg.spec.gamma) = (0.3, 0.3, 0.3);
    let samples = cfg.load_samples(None).unwrap();
    let sol = solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend).unwrap();
    record("gaussian".into(), &validate(&cfg, &samples, &sol, trials, 71));

    for mode in [RiskMode::Pwl, RiskMode::Uniform] {
        let mut cfg = load("los_rendezvous.cfg");
        cfg.spec.alpha = 0.3;
        cfg.spec.risk.mode = mode;
        let samples = cfg.load_samples(None).unwrap();
        let sol = solve_ccp(&cfg.spec, &samples, &cfg.ccp, &cfg.backend).unwrap();
        record(format!("los-{mode:?}"), &validate(&cfg, &samples, &sol, trials, 72));
    }

    let kinds = [
        GeneratorKind::Gaussian,
        GeneratorKind::Uniform,
        GeneratorKind::Mixture { separation: 0.9 },
        GeneratorKind::Skewed { shape: 1.0 },
    ];
    for (i, kind) in kinds.into_iter().enumerate() {
        for ns in [20usize, 500] {
            let (spec, samples, gen) = tight_instance(kind, ns, 700 + i as u64);
            let sol = solve_ccp(&spec, &samples, &CcpConfig::default(), &ClarabelBackend::default()).unwrap();
            let sampler = ProcessSampler { spec: gen, horizon: spec.horizon };
            let report = validate_solution(&spec, &sol.control_vectors(), &[&sampler], trials, 73).unwrap();
            record(format!("tight-{kind:?}-{ns}"), &report);
        }
    }

    verdict(7, "inflated thresholds", ok, &lines.join("; "));
}
