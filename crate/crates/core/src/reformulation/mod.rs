//! Deterministic surrogate of the chance-constrained problem.
//!
//! Target halfspaces become affine constraints `mean + λ·std ≤ h`. Each
//! collision constraint `mean(‖z̄+z‖²) − λ̃·std(‖z̄+z‖²) ≥ r²` is a difference
//! of convex functions of the controls; [`Reformulation::build`] linearizes
//! the mean term at the previous iterate, leaving one second-order cone per
//! constraint.

mod program;
mod risk;

pub use program::{AffineExpr, LinearConstraint, Origin, ReformulatedProgram, SocConstraint, VariableLayout};
pub use risk::{allocate_uniform, check_target_budget, chords, majorant, risk_knots, Chord, RiskAllocation, RiskEntry, TailModel};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::ConcatenatedDynamics;
use crate::error::{Error, Result};
use crate::problem::{RiskMode, ScenarioSpec};
use crate::sampling::{halfspace_moments, quadratic_form_moments, DisturbanceSampleSet, HalfspaceMoments, MomentCache, QuadraticFormMoments};

/// Every moment the reformulation needs, computed once per instance.
#[derive(Debug, Clone)]
pub struct ScenarioMoments {
    pub disturbance: Vec<MomentCache>,
    /// Indexed by target set, then row.
    pub halfspaces: Vec<Vec<HalfspaceMoments>>,
    pub obstacles: Vec<QuadraticFormMoments>,
    pub pairwise: Vec<QuadraticFormMoments>,
}

impl ScenarioMoments {
    /// Sample moments; pairwise terms pair the two vehicles' samples by index.
    pub fn from_samples(spec: &ScenarioSpec, dynamics: &ConcatenatedDynamics, samples: &[DisturbanceSampleSet]) -> Result<Self> {
        check_samples(spec, samples)?;
        let disturbance = samples.iter().map(MomentCache::from_samples).collect::<Result<Vec<_>>>()?;
        let obstacles = spec
            .obstacles
            .iter()
            .map(|o| quadratic_form_moments(&samples[o.vehicle], None, dynamics, &o.extraction, o.step))
            .collect::<Result<Vec<_>>>()?;
        let pairwise = spec
            .pairwise
            .iter()
            .map(|p| quadratic_form_moments(&samples[p.first], Some(&samples[p.second]), dynamics, &p.extraction, p.step))
            .collect::<Result<Vec<_>>>()?;
        Self::finish(spec, dynamics, disturbance, obstacles, pairwise)
    }

    /// Exact moments of independent Gaussian disturbances with the given
    /// stacked means and covariances.
    pub fn from_gaussian(
        spec: &ScenarioSpec,
        dynamics: &ConcatenatedDynamics,
        means: &[DVector<f64>],
        covariances: &[DMatrix<f64>],
    ) -> Result<Self> {
        if means.len() != spec.vehicle_count() || covariances.len() != spec.vehicle_count() {
            return Err(Error::dim("need one mean and covariance per vehicle"));
        }
        let disturbance = means
            .iter()
            .zip(covariances)
            .map(|(m, c)| MomentCache::from_moments(m.clone(), c.clone()))
            .collect::<Result<Vec<_>>>()?;
        if disturbance.iter().any(|c| c.mean().len() != dynamics.disturbance_len()) {
            return Err(Error::dim("disturbance moments do not match horizon"));
        }
        let project = |s: &DMatrix<f64>, k: usize, mean: DVector<f64>, cov: DMatrix<f64>| {
            let sd = s * dynamics.disturbance_block(k);
            QuadraticFormMoments::gaussian(&sd * mean, &sd * cov * sd.transpose())
        };
        let obstacles = spec
            .obstacles
            .iter()
            .map(|o| {
                let c = &disturbance[o.vehicle];
                project(&o.extraction, o.step, c.mean().clone(), c.covariance().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let pairwise = spec
            .pairwise
            .iter()
            .map(|p| {
                let (a, b) = (&disturbance[p.first], &disturbance[p.second]);
                project(&p.extraction, p.step, a.mean() - b.mean(), a.covariance() + b.covariance())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::finish(spec, dynamics, disturbance, obstacles, pairwise)
    }

    fn finish(
        spec: &ScenarioSpec,
        dynamics: &ConcatenatedDynamics,
        disturbance: Vec<MomentCache>,
        obstacles: Vec<QuadraticFormMoments>,
        pairwise: Vec<QuadraticFormMoments>,
    ) -> Result<Self> {
        let halfspaces = spec
            .targets
            .iter()
            .map(|t| {
                let x0 = &spec.vehicles[t.vehicle].x0;
                t.g.row_iter()
                    .map(|row| halfspace_moments(&disturbance[t.vehicle], dynamics, &row.transpose(), t.step, x0))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { disturbance, halfspaces, obstacles, pairwise })
    }
}

pub(crate) fn check_samples(spec: &ScenarioSpec, samples: &[DisturbanceSampleSet]) -> Result<usize> {
    if samples.len() != spec.vehicle_count() {
        return Err(Error::dim(format!(
            "{} sample sets for {} vehicles",
            samples.len(),
            spec.vehicle_count()
        )));
    }
    let ns = samples[0].sample_count();
    for (i, s) in samples.iter().enumerate() {
        if s.horizon() != spec.horizon || s.state_dim() != spec.state_dim() {
            return Err(Error::dim(format!(
                "vehicle {i} samples cover {} steps of dimension {}, expected {} x {}",
                s.horizon(),
                s.state_dim(),
                spec.horizon,
                spec.state_dim()
            )));
        }
        if s.sample_count() != ns {
            return Err(Error::dim(format!(
                "vehicle {i} has {} samples, vehicle 0 has {ns}",
                s.sample_count()
            )));
        }
    }
    Ok(ns)
}

/// A collision constraint with its moments and multiplier, in terms of the
/// deterministic offset `z̄(U) = offset + Σ sign · S C(k) U_v`.
#[derive(Debug, Clone)]
pub struct CollisionTerm {
    pub origin: Origin,
    members: Vec<(usize, f64)>,
    map: DMatrix<f64>,
    offset: DVector<f64>,
    moments: QuadraticFormMoments,
    std_map: DMatrix<f64>,
    std_offset: DVector<f64>,
    pub lambda: f64,
    pub radius: f64,
}

impl CollisionTerm {
    fn new(
        origin: Origin,
        members: Vec<(usize, f64)>,
        map: DMatrix<f64>,
        offset: DVector<f64>,
        moments: QuadraticFormMoments,
        lambda: f64,
        radius: f64,
    ) -> Self {
        let q = offset.len();
        let r_lift = moments.std_root.columns(0, q);
        let std_map = &r_lift * &map;
        let std_offset = &r_lift * &offset + moments.std_root.column(q);
        Self { origin, members, map, offset, moments, std_map, std_offset, lambda, radius }
    }

    pub fn zbar(&self, controls: &[DVector<f64>]) -> DVector<f64> {
        let mut z = self.offset.clone();
        for &(v, sign) in &self.members {
            z.gemv(sign, &self.map, &controls[v], 1.0);
        }
        z
    }

    /// `mean − λ̃·std − r²` of `‖z̄ + z‖²`; non-negative when the
    /// (unlinearized) constraint holds.
    pub fn margin(&self, controls: &[DVector<f64>]) -> f64 {
        let z = self.zbar(controls);
        self.moments.mean_of_square(&z) - self.lambda * self.moments.std_of_square(&z) - self.radius * self.radius
    }

    pub fn moments(&self) -> &QuadraticFormMoments {
        &self.moments
    }

    /// `λ̃‖R_std [z̄(U); 1]‖ ≤ ‖R_mean [z̄ᵖ; 1]‖² + 2(z̄ᵖ + ẑ)ᵀ(z̄(U) − z̄ᵖ) − r² + s`.
    fn linearize(&self, previous: &[DVector<f64>], layout: &VariableLayout, slack: usize) -> SocConstraint {
        let zp = self.zbar(previous);
        let grad = self.moments.mean_gradient(&zp);
        let mut scalar = AffineExpr::constant(
            self.moments.mean_of_square(&zp) + grad.dot(&(&self.offset - &zp)) - self.radius * self.radius,
        );
        let grad_map = self.map.tr_mul(&grad);
        let mut vector: Vec<AffineExpr> = self
            .std_offset
            .iter()
            .map(|c| AffineExpr::constant(self.lambda * c))
            .collect();
        for &(v, sign) in &self.members {
            for e in 0..self.map.ncols() {
                let idx = layout.control(v, e);
                scalar.push(idx, sign * grad_map[e]);
                for (row, expr) in vector.iter_mut().enumerate() {
                    expr.push(idx, self.lambda * sign * self.std_map[(row, e)]);
                }
            }
        }
        scalar.push(layout.slack(slack), 1.0);
        SocConstraint { vector, scalar, origin: self.origin }
    }
}

/// The parts of the surrogate that do not change between CCP iterations.
#[derive(Debug, Clone)]
pub struct Reformulation {
    spec: ScenarioSpec,
    tail: TailModel,
    allocation: RiskAllocation,
    layout: VariableLayout,
    fixed: Vec<LinearConstraint>,
    collisions: Vec<CollisionTerm>,
    chords: Vec<Chord>,
    knots: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    quadratic: Vec<f64>,
}

impl Reformulation {
    pub fn new(spec: &ScenarioSpec, dynamics: &ConcatenatedDynamics, moments: &ScenarioMoments, tail: TailModel) -> Result<Self> {
        spec.validate()?;
        let allocation = allocate_uniform(spec, &tail)?;
        let n_targets = spec.target_halfspace_count();
        let optimize_risk = spec.risk.mode == RiskMode::Pwl && n_targets > 0;
        let (knots, chords) = if optimize_risk {
            let knots = risk_knots(&spec.risk, &tail, spec.alpha, n_targets)?;
            let cs = chords(&tail, &knots);
            (knots, cs)
        } else {
            (Vec::new(), Vec::new())
        };
        let n_lambda = if optimize_risk { n_targets } else { 0 };
        let layout = VariableLayout {
            vehicles: spec.vehicle_count(),
            control_len: spec.control_len(),
            lambda_count: n_lambda,
            epigraph_count: n_lambda,
            slack_count: spec.obstacles.len() + spec.pairwise.len(),
        };

        let mut fixed = Vec::new();
        let mut j = 0;
        for (set, t) in spec.targets.iter().enumerate() {
            for (row, hm) in moments.halfspaces[set].iter().enumerate() {
                let mut expr = AffineExpr::constant(hm.constant - t.h[row]);
                for (e, g) in hm.gradient.iter().enumerate() {
                    expr.push(layout.control(t.vehicle, e), *g);
                }
                if optimize_risk {
                    expr.push(layout.lambda(j), hm.std);
                } else {
                    expr.constant += allocation.target[j].lambda * hm.std;
                }
                fixed.push(LinearConstraint { expr, origin: Origin::Target { set, row } });
                j += 1;
            }
        }
        if optimize_risk {
            for j in 0..n_lambda {
                for (segment, c) in chords.iter().enumerate() {
                    let mut expr = AffineExpr::constant(c.intercept);
                    expr.push(layout.lambda(j), c.slope);
                    expr.push(layout.epigraph(j), -1.0);
                    fixed.push(LinearConstraint { expr, origin: Origin::RiskEpigraph { lambda: j, segment } });
                }
            }
            let mut budget = AffineExpr::constant(-spec.alpha);
            for j in 0..n_lambda {
                budget.push(layout.epigraph(j), 1.0);
            }
            fixed.push(LinearConstraint { expr: budget, origin: Origin::RiskBudget });
        }

        let mut collisions = Vec::new();
        for (index, o) in spec.obstacles.iter().enumerate() {
            let k = o.step;
            let map = &o.extraction * dynamics.control_block(k);
            let offset = &o.extraction * (dynamics.state_power(k) * &spec.vehicles[o.vehicle].x0 - &o.position);
            collisions.push(CollisionTerm::new(
                Origin::Obstacle { index },
                vec![(o.vehicle, 1.0)],
                map,
                offset,
                moments.obstacles[index].clone(),
                allocation.obstacle[index].lambda,
                o.radius,
            ));
        }
        for (index, p) in spec.pairwise.iter().enumerate() {
            let k = p.step;
            let map = &p.extraction * dynamics.control_block(k);
            let offset = &p.extraction
                * (dynamics.state_power(k) * (&spec.vehicles[p.first].x0 - &spec.vehicles[p.second].x0));
            collisions.push(CollisionTerm::new(
                Origin::Pairwise { index },
                vec![(p.first, 1.0), (p.second, -1.0)],
                map,
                offset,
                moments.pairwise[index].clone(),
                allocation.pairwise[index].lambda,
                p.radius,
            ));
        }

        let total = layout.total();
        let m = spec.input_dim();
        let mut lower = vec![f64::NEG_INFINITY; total];
        let mut upper = vec![f64::INFINITY; total];
        let mut quadratic = vec![0.0; total];
        for v in 0..layout.vehicles {
            for e in 0..layout.control_len {
                let idx = layout.control(v, e);
                lower[idx] = spec.control_lower[e % m];
                upper[idx] = spec.control_upper[e % m];
                quadratic[idx] = 2.0 * spec.control_weights[e % m];
            }
        }
        for j in 0..n_lambda {
            lower[layout.lambda(j)] = knots[0];
            upper[layout.lambda(j)] = *knots.last().expect("at least two knots");
            lower[layout.epigraph(j)] = 0.0;
        }
        for s in 0..layout.slack_count {
            lower[layout.slack(s)] = 0.0;
        }

        Ok(Self {
            spec: spec.clone(),
            tail,
            allocation,
            layout,
            fixed,
            collisions,
            chords,
            knots,
            lower,
            upper,
            quadratic,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn tail(&self) -> &TailModel {
        &self.tail
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn allocation(&self) -> &RiskAllocation {
        &self.allocation
    }

    pub fn collisions(&self) -> &[CollisionTerm] {
        &self.collisions
    }

    /// Constraints that stay fixed across iterations: target rows and the
    /// risk majorant. All affine.
    pub fn fixed_constraints(&self) -> &[LinearConstraint] {
        &self.fixed
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn chords(&self) -> &[Chord] {
        &self.chords
    }

    /// Convex subproblem linearized at `previous` with slack weight `penalty`.
    pub fn build(&self, previous: &[DVector<f64>], penalty: f64) -> Result<ReformulatedProgram> {
        if previous.len() != self.layout.vehicles || previous.iter().any(|u| u.len() != self.layout.control_len) {
            return Err(Error::dim("previous iterate does not match the control layout"));
        }
        let cones = self
            .collisions
            .iter()
            .enumerate()
            .map(|(s, c)| c.linearize(previous, &self.layout, s))
            .collect();
        let mut linear_objective = vec![0.0; self.layout.total()];
        for s in 0..self.layout.slack_count {
            linear_objective[self.layout.slack(s)] = penalty;
        }
        Ok(ReformulatedProgram {
            layout: self.layout,
            quadratic: self.quadratic.clone(),
            linear_objective,
            linear: self.fixed.clone(),
            cones,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            penalty,
        })
    }

    pub fn split_controls(&self, x: &[f64]) -> Vec<DVector<f64>> {
        (0..self.layout.vehicles)
            .map(|v| DVector::from_column_slice(&x[self.layout.control(v, 0)..self.layout.control(v, self.layout.control_len)]))
            .collect()
    }

    /// Stacks controls into a decision vector with zero auxiliaries.
    pub fn join_controls(&self, controls: &[DVector<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.total()];
        for (v, u) in controls.iter().enumerate() {
            x[self.layout.control(v, 0)..self.layout.control(v, self.layout.control_len)].copy_from_slice(u.as_slice());
        }
        x
    }

    /// Target multipliers and their risks at decision vector `x`.
    pub fn target_risk(&self, x: &[f64]) -> Vec<RiskEntry> {
        if self.layout.lambda_count == 0 {
            return self.allocation.target.clone();
        }
        (0..self.layout.lambda_count)
            .map(|j| {
                let lambda = x[self.layout.lambda(j)];
                RiskEntry { omega: self.tail.f(lambda), lambda }
            })
            .collect()
    }

    /// Sum over collision constraints of how far each misses, `Σ max(0, −margin)`.
    pub fn collision_violation(&self, controls: &[DVector<f64>]) -> f64 {
        self.collisions.iter().map(|c| (-c.margin(controls)).max(0.0)).sum()
    }

    /// Smallest slack making each linearized constraint of `program` hold at `x`.
    pub fn required_slack(&self, program: &ReformulatedProgram, x: &[f64]) -> Vec<f64> {
        let mut base = x.to_vec();
        for s in 0..self.layout.slack_count {
            base[self.layout.slack(s)] = 0.0;
        }
        program.cones.iter().map(|c| c.residual(&base).max(0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::SampleBound;
    use crate::dynamics::{LtiSystem, VehicleState};
    use crate::problem::{position_extraction, ObstacleAvoidance, PairwiseAvoidance, TargetSet};
    use crate::sampling::{synth_disturbances, GeneratorKind, GeneratorSpec};

    fn instance() -> (ScenarioSpec, ConcatenatedDynamics, Vec<DisturbanceSampleSet>) {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
        let sys = LtiSystem::new(a, b, 1.0).unwrap();
        let vs = vec![
            VehicleState { id: 0, x0: DVector::from_vec(vec![0.0, 0.0]) },
            VehicleState { id: 1, x0: DVector::from_vec(vec![3.0, 0.0]) },
        ];
        let mut spec = ScenarioSpec::new(sys, 3, vs, 2.0);
        spec.targets.push(TargetSet::from_box(0, 3, &[1.0, 0.0], &[0.5, 0.5]).unwrap());
        spec.obstacles.push(ObstacleAvoidance {
            vehicle: 0,
            step: 2,
            extraction: position_extraction(1, 2),
            radius: 0.5,
            position: DVector::from_vec(vec![0.5, 0.0]),
        });
        spec.pairwise.push(PairwiseAvoidance { first: 0, second: 1, step: 3, extraction: position_extraction(1, 2), radius: 0.5 });
        let dynamics = spec.dynamics().unwrap();
        let gen = GeneratorSpec::new(GeneratorKind::Skewed { shape: 2.0 }, vec![0.01, 0.005], None).unwrap();
        let samples = (0..2).map(|v| synth_disturbances(&gen, v, 3, 400, 7).unwrap()).collect();
        (spec, dynamics, samples)
    }

    #[test]
    fn linearization_is_exact_at_base_point() {
        let (spec, dynamics, samples) = instance();
        let moments = ScenarioMoments::from_samples(&spec, &dynamics, &samples).unwrap();
        let reform = Reformulation::new(&spec, &dynamics, &moments, TailModel::Sample(SampleBound::new(400).unwrap())).unwrap();
        let prev = vec![DVector::from_vec(vec![0.3, -0.2, 0.1]), DVector::from_vec(vec![-0.4, 0.0, 0.2])];
        let prog = reform.build(&prev, 10.0).unwrap();
        let x = reform.join_controls(&prev);
        for (cone, term) in prog.cones.iter().zip(reform.collisions()) {
            // with zero slack, −residual equals the exact margin at the base point
            let residual = cone.residual(&x);
            assert!((residual + term.margin(&prev)).abs() < 1e-9, "{residual} vs {}", term.margin(&prev));
            // the mean part equals the direct sample mean
            let z = term.zbar(&prev);
            let direct: f64 = (0..400)
                .map(|j| {
                    let w = &samples[0].sample(j);
                    let d = dynamics.disturbance_block(if matches!(term.origin, Origin::Obstacle { .. }) { 2 } else { 3 });
                    let mut zz = &z + position_extraction(1, 2) * (d * w);
                    if let Origin::Pairwise { .. } = term.origin {
                        zz -= position_extraction(1, 2) * (d * samples[1].sample(j));
                    }
                    zz.norm_squared()
                })
                .sum::<f64>()
                / 400.0;
            assert!((term.moments().mean_of_square(&z) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn linearization_under_estimates_elsewhere() {
        let (spec, dynamics, samples) = instance();
        let moments = ScenarioMoments::from_samples(&spec, &dynamics, &samples).unwrap();
        let reform = Reformulation::new(&spec, &dynamics, &moments, TailModel::Sample(SampleBound::new(400).unwrap())).unwrap();
        let prev = vec![DVector::from_vec(vec![0.3, -0.2, 0.1]), DVector::from_vec(vec![-0.4, 0.0, 0.2])];
        let prog = reform.build(&prev, 10.0).unwrap();
        let u = vec![DVector::from_vec(vec![-1.0, 0.5, 0.7]), DVector::from_vec(vec![0.2, 0.9, -1.1])];
        let x = reform.join_controls(&u);
        for (cone, term) in prog.cones.iter().zip(reform.collisions()) {
            // linearized margin ≤ exact margin, since the mean term is convex
            assert!(-cone.residual(&x) <= term.margin(&u) + 1e-12);
        }
    }

    #[test]
    fn target_rows_are_affine_and_counted() {
        let (mut spec, dynamics, samples) = instance();
        let moments = ScenarioMoments::from_samples(&spec, &dynamics, &samples).unwrap();
        let tail = TailModel::Sample(SampleBound::new(400).unwrap());
        let reform = Reformulation::new(&spec, &dynamics, &moments, tail).unwrap();
        let prog = reform.build(&[DVector::zeros(3), DVector::zeros(3)], 1.0).unwrap();
        let targets = prog.linear.iter().filter(|c| matches!(c.origin, Origin::Target { .. })).count();
        assert_eq!(targets, 4);
        assert!(prog.cones.iter().all(|c| !matches!(c.origin, Origin::Target { .. })));
        assert_eq!(prog.layout.lambda_count, 0);

        spec.risk.mode = RiskMode::Pwl;
        spec.risk.segments = 8;
        let reform = Reformulation::new(&spec, &dynamics, &moments, tail).unwrap();
        let prog = reform.build(&[DVector::zeros(3), DVector::zeros(3)], 1.0).unwrap();
        assert_eq!(prog.layout.lambda_count, 4);
        // the whole target subsystem is affine
        assert!(prog.cones.iter().all(|c| matches!(c.origin, Origin::Obstacle { .. } | Origin::Pairwise { .. })));
        let epi = prog.linear.iter().filter(|c| matches!(c.origin, Origin::RiskEpigraph { .. })).count();
        assert_eq!(epi, 4 * reform.chords().len());
        assert_eq!(prog.lower[prog.layout.lambda(0)], tail.convex_from());
    }

    #[test]
    fn gaussian_moments_for_obstacle() {
        let (spec, dynamics, _) = instance();
        let n = dynamics.disturbance_len();
        let means = vec![DVector::zeros(n); 2];
        let covs = vec![DMatrix::identity(n, n) * 1e-4; 2];
        let m = ScenarioMoments::from_gaussian(&spec, &dynamics, &means, &covs).unwrap();
        // z = S D(2) W with D(2) = [A I 0]: variance of the position is (1 + 1 + 1)·1e-4
        assert!((m.obstacles[0].covariance[(0, 0)] - 3e-4).abs() < 1e-15);
        // pairwise at step 3 with D(3) = [A² A I]: (5 + 2 + 1)·2e-4
        assert!((m.pairwise[0].covariance[(0, 0)] - 1.6e-3).abs() < 1e-15);
    }
}
