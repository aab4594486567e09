//! Monte Carlo checks: empirical chance-constraint satisfaction of a plan
//! under fresh disturbances, and the empirical tail test of the
//! sample-statistics bound.
//!
//! Trial `t` always draws from `ChaCha8` seeded with the master seed on
//! stream `t`, so reports do not depend on the number of worker threads.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{cantelli_bound, SampleBound};
use crate::error::{Error, Result};
use crate::problem::ScenarioSpec;
use crate::sampling::DisturbanceSampler;

pub(crate) fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub label: String,
    pub satisfied: u64,
    pub ratio: f64,
}

/// One chance-constraint group evaluated as a joint event over all members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub threshold: f64,
    pub satisfied: u64,
    pub ratio: f64,
    /// Binomial standard error at the threshold, `√(t(1−t)/M)`.
    pub stderr: f64,
    pub members: Vec<MemberReport>,
}

impl GroupReport {
    pub fn violation(&self) -> f64 {
        1.0 - self.ratio
    }

    pub fn passed(&self) -> bool {
        self.ratio >= 1.0 - self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trials: u64,
    pub seed: u64,
    pub groups: Vec<GroupReport>,
    pub wall_seconds: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(GroupReport::passed)
    }

    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// One row per group: `group,threshold,trials,satisfied,ratio,passed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,threshold,trials,satisfied,ratio,passed\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{}\n",
                g.name,
                g.threshold,
                self.trials,
                g.satisfied,
                g.ratio,
                g.passed()
            ));
        }
        out
    }
}

#[derive(Clone)]
struct Counts {
    groups: Vec<u64>,
    members: Vec<Vec<u64>>,
}

impl Counts {
    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            *a += b;
        }
        for (ma, mb) in self.members.iter_mut().zip(&other.members) {
            for (a, b) in ma.iter_mut().zip(mb) {
                *a += b;
            }
        }
        self
    }
}

/// Fraction of `trials` fresh disturbance draws under which each group's
/// joint event (all members at once) holds for the open-loop `controls`.
pub fn validate_solution(
    spec: &ScenarioSpec,
    controls: &[DVector<f64>],
    samplers: &[&dyn DisturbanceSampler],
    trials: u64,
    seed: u64,
) -> Result<ValidationReport> {
    spec.validate()?;
    let (n, m, horizon) = (spec.state_dim(), spec.input_dim(), spec.horizon);
    if trials == 0 {
        return Err(Error::invalid("validation needs at least one trial"));
    }
    if controls.len() != spec.vehicle_count() || controls.iter().any(|u| u.len() != spec.control_len()) {
        return Err(Error::dim("controls do not match the scenario"));
    }
    if samplers.len() != spec.vehicle_count() || samplers.iter().any(|s| s.dim() != horizon * n) {
        return Err(Error::dim("need one sampler of dimension N·n per vehicle"));
    }
    let start = Instant::now();
    let sizes = [spec.targets.len(), spec.obstacles.len(), spec.pairwise.len()];
    let empty = Counts {
        groups: vec![0; 3],
        members: sizes.iter().map(|&s| vec![0; s]).collect(),
    };
    let a = spec.system.a();
    let b = spec.system.b();

    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || empty.clone(),
            |mut acc, trial| {
                let mut rng = trial_rng(seed, trial);
                let mut w = vec![0.0; horizon * n];
                // states[v][k-1]
                let states: Vec<Vec<DVector<f64>>> = spec
                    .vehicles
                    .iter()
                    .enumerate()
                    .map(|(v, veh)| {
                        samplers[v].draw_into(&mut rng, &mut w);
                        let mut x = veh.x0.clone();
                        (0..horizon)
                            .map(|k| {
                                x = a * &x + b * controls[v].rows(k * m, m) + DVector::from_column_slice(&w[k * n..(k + 1) * n]);
                                x.clone()
                            })
                            .collect()
                    })
                    .collect();
                let target = spec.targets.iter().map(|t| t.contains(&states[t.vehicle][t.step - 1]));
                let obstacle = spec.obstacles.iter().map(|o| {
                    (&o.extraction * (&states[o.vehicle][o.step - 1] - &o.position)).norm() >= o.radius
                });
                let pairwise = spec.pairwise.iter().map(|p| {
                    (&p.extraction * (&states[p.first][p.step - 1] - &states[p.second][p.step - 1])).norm() >= p.radius
                });
                let outcomes: [Vec<bool>; 3] = [target.collect(), obstacle.collect(), pairwise.collect()];
                for (g, oks) in outcomes.iter().enumerate() {
                    if oks.iter().all(|ok| *ok) {
                        acc.groups[g] += 1;
                    }
                    for (i, ok) in oks.iter().enumerate() {
                        acc.members[g][i] += u64::from(*ok);
                    }
                }
                acc
            },
        )
        .reduce(|| empty.clone(), Counts::merge);

    let names = ["target", "obstacle", "pairwise"];
    let thresholds = [spec.alpha, spec.beta, spec.gamma];
    let member_label = |g: usize, i: usize| match g {
        0 => format!("vehicle {} step {} target set", spec.targets[i].vehicle, spec.targets[i].step),
        1 => format!("vehicle {} step {} obstacle", spec.obstacles[i].vehicle, spec.obstacles[i].step),
        _ => format!(
            "vehicles {}-{} step {}",
            spec.pairwise[i].first, spec.pairwise[i].second, spec.pairwise[i].step
        ),
    };
    let m_f = trials as f64;
    let groups = (0..3)
        .filter(|&g| sizes[g] > 0)
        .map(|g| GroupReport {
            name: names[g].to_string(),
            threshold: thresholds[g],
            satisfied: counts.groups[g],
            ratio: counts.groups[g] as f64 / m_f,
            stderr: (thresholds[g] * (1.0 - thresholds[g]) / m_f).sqrt(),
            members: counts.members[g]
                .iter()
                .enumerate()
                .map(|(i, &c)| MemberReport { label: member_label(g, i), satisfied: c, ratio: c as f64 / m_f })
                .collect(),
        })
        .collect();
    Ok(ValidationReport {
        trials,
        seed,
        groups,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Distributions exercised by the tail test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDistribution {
    Gaussian,
    Exponential,
    Uniform,
    /// Equal mixture of `Normal(±0.9, 0.19)`.
    Mixture,
    /// Point mass; always degenerate.
    Constant,
}

impl TailDistribution {
    pub const STANDARD: [TailDistribution; 4] = [
        TailDistribution::Gaussian,
        TailDistribution::Exponential,
        TailDistribution::Uniform,
        TailDistribution::Mixture,
    ];

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TailDistribution::Gaussian => rng.sample(StandardNormal),
            TailDistribution::Exponential => rng.sample(Exp1),
            TailDistribution::Uniform => rng.random::<f64>(),
            TailDistribution::Mixture => {
                let e: f64 = rng.sample(StandardNormal);
                let c = if rng.random::<bool>() { 0.9 } else { -0.9 };
                c + 0.19f64.sqrt() * e
            }
            TailDistribution::Constant => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TailDistribution::Gaussian => "gaussian",
            TailDistribution::Exponential => "exponential",
            TailDistribution::Uniform => "uniform",
            TailDistribution::Mixture => "mixture",
            TailDistribution::Constant => "constant",
        }
    }
}

impl std::str::FromStr for TailDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(TailDistribution::Gaussian),
            "exponential" => Ok(TailDistribution::Exponential),
            "uniform" => Ok(TailDistribution::Uniform),
            "mixture" => Ok(TailDistribution::Mixture),
            "constant" => Ok(TailDistribution::Constant),
            other => Err(Error::invalid(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub lambda: f64,
    pub bound: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub passed: bool,
    pub in_sample_bound: f64,
    pub in_sample_empirical: f64,
    pub in_sample_stderr: f64,
    pub in_sample_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTestReport {
    pub distribution: TailDistribution,
    pub samples: usize,
    pub trials: u64,
    pub seed: u64,
    pub cells: Vec<TailCell>,
}

impl TailTestReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed && c.in_sample_passed)
    }
}

pub const MIN_TAIL_TRIALS: u64 = 10_000;

/// Empirical `P(x − mean̂ ≥ λ·std̂)` for a fresh `x` independent of the
/// `N_s` samples, against `f(λ)`; and the same event for the first sample
/// itself against `1/(λ²+1)`. A cell passes when the empirical frequency is
/// within three binomial standard errors above the bound.
pub fn tail_test(
    distribution: TailDistribution,
    samples: usize,
    lambdas: &[f64],
    trials: u64,
    seed: u64,
) -> Result<TailTestReport> {
    let bound = SampleBound::new(samples)?;
    if trials < MIN_TAIL_TRIALS {
        return Err(Error::invalid(format!("tail test needs at least {MIN_TAIL_TRIALS} trials, got {trials}")));
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("lambda grid must be non-empty and positive"));
    }
    let nl = lambdas.len();
    let ns = samples as f64;
    let counts = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let mut first = 0.0;
            let (mut sum, mut shift) = (0.0, 0.0);
            let mut sq = 0.0;
            for i in 0..samples {
                let v = distribution.draw(&mut rng);
                if i == 0 {
                    first = v;
                    shift = v;
                }
                // shifted accumulation keeps the variance stable
                let d = v - shift;
                sum += d;
                sq += d * d;
            }
            let mean_d = sum / ns;
            let var = (sq / ns - mean_d * mean_d).max(0.0);
            let std = var.sqrt();
            let mean = shift + mean_d;
            if !(std > 0.0) {
                return None;
            }
            let fresh = distribution.draw(&mut rng);
            let mut out = vec![0u64; 2 * nl];
            for (c, l) in lambdas.iter().enumerate() {
                out[c] = u64::from(fresh - mean >= l * std);
                out[nl + c] = u64::from(first - mean >= l * std);
            }
            Some(out)
        })
        .try_reduce(|| vec![0u64; 2 * nl], |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            Some(a)
        })
        .ok_or_else(|| {
            Error::DegenerateSample(format!(
                "{} samples produced a zero sample standard deviation",
                distribution.name()
            ))
        })?;
    let t = trials as f64;
    let cells = lambdas
        .iter()
        .enumerate()
        .map(|(c, &lambda)| {
            let f = bound.f_unchecked(lambda);
            let cf = cantelli_bound(lambda);
            let empirical = counts[c] as f64 / t;
            let in_sample_empirical = counts[nl + c] as f64 / t;
            let stderr = (f * (1.0 - f) / t).sqrt();
            let in_sample_stderr = (cf * (1.0 - cf) / t).sqrt();
            TailCell {
                lambda,
                bound: f,
                empirical,
                stderr,
                passed: empirical <= f + 3.0 * stderr,
                in_sample_bound: cf,
                in_sample_empirical,
                in_sample_stderr,
                in_sample_passed: in_sample_empirical <= cf + 3.0 * in_sample_stderr,
            }
        })
        .collect();
    Ok(TailTestReport {
        distribution,
        samples,
        trials,
        seed,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LtiSystem, VehicleState};
    use crate::problem::{position_extraction, PairwiseAvoidance, TargetSet};
    use crate::sampling::{GeneratorKind, GeneratorSpec, ProcessSampler, ZeroSampler};
    use nalgebra::DMatrix;

    fn spec() -> ScenarioSpec {
        let sys = LtiSystem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 1.0).unwrap();
        let vs = vec![
            VehicleState { id: 0, x0: DVector::from_vec(vec![0.0, 0.0]) },
            VehicleState { id: 1, x0: DVector::from_vec(vec![5.0, 0.0]) },
        ];
        let mut s = ScenarioSpec::new(sys, 2, vs, 1.0);
        s.targets.push(TargetSet::from_box(0, 2, &[1.0, 0.0], &[0.5, 0.5]).unwrap());
        s.targets.push(TargetSet::from_box(1, 2, &[5.0, 0.0], &[0.5, 0.5]).unwrap());
        s.pairwise.push(PairwiseAvoidance { first: 0, second: 1, step: 2, extraction: position_extraction(2, 2), radius: 1.0 });
        s
    }

    #[test]
    fn zero_disturbance_ratio_matches_mean_trajectory() {
        let s = spec();
        let z = ZeroSampler { dim: 4 };
        let samplers: Vec<&dyn DisturbanceSampler> = vec![&z, &z];
        let good = vec![DVector::from_vec(vec![0.5, 0.0, 0.5, 0.0]), DVector::zeros(4)];
        let r = validate_solution(&s, &good, &samplers, 50, 1).unwrap();
        assert!(r.groups.iter().all(|g| g.ratio == 1.0));
        let bad = vec![DVector::zeros(4), DVector::zeros(4)];
        let r = validate_solution(&s, &bad, &samplers, 50, 1).unwrap();
        assert_eq!(r.group("target").unwrap().ratio, 0.0);
        assert_eq!(r.group("pairwise").unwrap().ratio, 1.0);
        assert!(r.group("obstacle").is_none());
    }

    #[test]
    fn joint_ratio_below_member_ratios_and_reproducible() {
        let s = spec();
        let p = ProcessSampler {
            spec: GeneratorSpec::new(GeneratorKind::Gaussian, vec![0.2, 0.2], None).unwrap(),
            horizon: 2,
        };
        let samplers: Vec<&dyn DisturbanceSampler> = vec![&p, &p];
        let u = vec![DVector::from_vec(vec![0.5, 0.0, 0.5, 0.0]), DVector::zeros(4)];
        let r = validate_solution(&s, &u, &samplers, 2000, 9).unwrap();
        let again = validate_solution(&s, &u, &samplers, 2000, 9).unwrap();
        assert_eq!(r.groups, again.groups);
        for g in &r.groups {
            let min_member = g.members.iter().map(|m| m.ratio).fold(1.0, f64::min);
            assert!(g.ratio <= min_member);
        }
        assert!(r.group("target").unwrap().ratio < 1.0);
        let one = validate_solution(&s, &u, &samplers, 1, 3).unwrap();
        assert!(one.groups.iter().all(|g| g.ratio == 0.0 || g.ratio == 1.0));
        assert!(r.to_csv().starts_with("group,threshold"));
    }

    #[test]
    fn tail_test_gaussian_cell() {
        let r = tail_test(TailDistribution::Gaussian, 100, &[2.0], 20_000, 5).unwrap();
        let c = &r.cells[0];
        assert!((c.bound - 0.266_323_615_158_867_4).abs() < 1e-12);
        assert!(c.passed && c.in_sample_passed);
        // the true Gaussian tail at 2σ is about 0.023
        assert!(c.empirical < 0.05, "{}", c.empirical);
    }

    #[test]
    fn tail_test_rejects_bad_input() {
        assert!(matches!(
            tail_test(TailDistribution::Constant, 10, &[1.0], 10_000, 1),
            Err(Error::DegenerateSample(_))
        ));
        assert!(tail_test(TailDistribution::Gaussian, 10, &[1.0], 100, 1).is_err());
        assert!(tail_test(TailDistribution::Gaussian, 10, &[-1.0], 10_000, 1).is_err());
        assert!(tail_test(TailDistribution::Gaussian, 1, &[1.0], 10_000, 1).is_err());
    }

    #[test]
    fn tail_test_is_reproducible() {
        let a = tail_test(TailDistribution::Exponential, 10, &[4.0], 10_000, 2).unwrap();
        let b = tail_test(TailDistribution::Exponential, 10, &[4.0], 10_000, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.passed());
    }
}
