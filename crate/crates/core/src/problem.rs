//! The full problem instance: vehicles, dynamics, bounds, objective and the
//! three chance-constraint groups.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{concatenate, ConcatenatedDynamics, LtiSystem, VehicleState};
use crate::error::{Error, Result};

/// Polytope `G x_i(k) ≤ h` that vehicle `i` must occupy at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub vehicle: usize,
    pub step: usize,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl TargetSet {
    /// Axis-aligned box `|x − center| ≤ half_widths`, rows ordered
    /// `+e_1, −e_1, +e_2, −e_2, …`.
    pub fn from_box(vehicle: usize, step: usize, center: &[f64], half_widths: &[f64]) -> Result<Self> {
        if center.len() != half_widths.len() {
            return Err(Error::dim("box center and half widths differ in length"));
        }
        if half_widths.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("box half widths must be non-negative"));
        }
        let n = center.len();
        let mut g = DMatrix::zeros(2 * n, n);
        let mut h = DVector::zeros(2 * n);
        for d in 0..n {
            g[(2 * d, d)] = 1.0;
            g[(2 * d + 1, d)] = -1.0;
            h[2 * d] = center[d] + half_widths[d];
            h[2 * d + 1] = half_widths[d] - center[d];
        }
        Ok(Self { vehicle, step, g, h })
    }

    pub fn halfspace_count(&self) -> usize {
        self.g.nrows()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (&self.g * x - &self.h).iter().all(|v| *v <= 0.0)
    }
}

/// `‖S (x_i(k) − o(k))‖ ≥ r` for a known obstacle position `o(k)` given in
/// state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleAvoidance {
    pub vehicle: usize,
    pub step: usize,
    pub extraction: DMatrix<f64>,
    pub radius: f64,
    pub position: DVector<f64>,
}

/// `‖S (x_i(k) − x_j(k))‖ ≥ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseAvoidance {
    pub first: usize,
    pub second: usize,
    pub step: usize,
    pub extraction: DMatrix<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RiskMode {
    /// Each group threshold split evenly over its members; every `λ` fixed.
    #[default]
    Uniform,
    /// Target-set `λ` are decision variables under a piecewise-linear
    /// majorant of the risk budget. Collision risks stay uniform.
    Pwl,
}

impl std::str::FromStr for RiskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RiskMode::Uniform),
            "pwl" => Ok(RiskMode::Pwl),
            other => Err(Error::invalid(format!("unknown risk mode `{other}` (uniform|pwl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSettings {
    pub mode: RiskMode,
    /// Upper end of the knot grid. `None` picks `max(50, 4·λ_uniform)`.
    pub lambda_max: Option<f64>,
    /// Number of geometric grid segments when `knots` is not given.
    pub segments: usize,
    /// Explicit knot grid; used verbatim.
    pub knots: Option<Vec<f64>>,
}

impl Default for RiskSettings {
    fn default() -> Self {
        Self {
            mode: RiskMode::Uniform,
            lambda_max: None,
            segments: 64,
            knots: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub system: LtiSystem,
    pub horizon: usize,
    pub vehicles: Vec<VehicleState>,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    /// Diagonal weights per input dimension; `J = Σ_i Σ_k Σ_d w_d u_{i,d}(k)²`.
    pub control_weights: Vec<f64>,
    pub targets: Vec<TargetSet>,
    pub obstacles: Vec<ObstacleAvoidance>,
    pub pairwise: Vec<PairwiseAvoidance>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub risk: RiskSettings,
}

impl ScenarioSpec {
    /// A spec with no constraints, unit weights and symmetric bounds.
    pub fn new(system: LtiSystem, horizon: usize, vehicles: Vec<VehicleState>, control_bound: f64) -> Self {
        let m = system.input_dim();
        Self {
            system,
            horizon,
            vehicles,
            control_lower: vec![-control_bound; m],
            control_upper: vec![control_bound; m],
            control_weights: vec![1.0; m],
            targets: Vec::new(),
            obstacles: Vec::new(),
            pairwise: Vec::new(),
            alpha: 0.05,
            beta: 0.05,
            gamma: 0.05,
            risk: RiskSettings::default(),
        }
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    /// Length of one vehicle's stacked control `U_i`.
    pub fn control_len(&self) -> usize {
        self.horizon * self.input_dim()
    }

    pub fn target_halfspace_count(&self) -> usize {
        self.targets.iter().map(TargetSet::halfspace_count).sum()
    }

    pub fn has_collisions(&self) -> bool {
        !self.obstacles.is_empty() || !self.pairwise.is_empty()
    }

    pub fn dynamics(&self) -> Result<ConcatenatedDynamics> {
        concatenate(&self.system, self.horizon)
    }

    /// `J(U) = Σ w u²` over all vehicles.
    pub fn objective(&self, controls: &[DVector<f64>]) -> f64 {
        let m = self.input_dim();
        controls
            .iter()
            .map(|u| u.iter().enumerate().map(|(i, v)| self.control_weights[i % m] * v * v).sum::<f64>())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.vehicles.is_empty() {
            return Err(Error::invalid("at least one vehicle is required"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.x0.len() != n {
                return Err(Error::dim(format!(
                    "vehicle {i} initial state has length {}, expected {n}",
                    v.x0.len()
                )));
            }
        }
        for (name, vals) in [
            ("control lower bounds", &self.control_lower),
            ("control upper bounds", &self.control_upper),
            ("control weights", &self.control_weights),
        ] {
            if vals.len() != m {
                return Err(Error::dim(format!("{name} have length {}, expected {m}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if self.control_lower.iter().zip(&self.control_upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("control lower bound exceeds upper bound"));
        }
        if self.control_weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::invalid("control weights must be positive"));
        }
        for (name, t) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("threshold {name} = {t} must lie in (0, 1)")));
            }
        }
        let nv = self.vehicle_count();
        let step_ok = |k: usize| (1..=self.horizon).contains(&k);
        for (idx, t) in self.targets.iter().enumerate() {
            if t.vehicle >= nv || !step_ok(t.step) {
                return Err(Error::invalid(format!("target set {idx} references vehicle {} step {}", t.vehicle, t.step)));
            }
            if t.g.ncols() != n || t.g.nrows() != t.h.len() || t.g.nrows() == 0 {
                return Err(Error::dim(format!("target set {idx}: G is {}x{}, h has {}", t.g.nrows(), t.g.ncols(), t.h.len())));
            }
        }
        for (idx, o) in self.obstacles.iter().enumerate() {
            if o.vehicle >= nv || !step_ok(o.step) {
                return Err(Error::invalid(format!("obstacle constraint {idx} references vehicle {} step {}", o.vehicle, o.step)));
            }
            check_extraction(&o.extraction, o.radius, n, idx)?;
            if o.position.len() != n {
                return Err(Error::dim(format!("obstacle constraint {idx}: position has length {}, expected {n}", o.position.len())));
            }
        }
        for (idx, p) in self.pairwise.iter().enumerate() {
            if p.first >= nv || p.second >= nv || p.first == p.second || !step_ok(p.step) {
                return Err(Error::invalid(format!(
                    "pairwise constraint {idx} references vehicles ({}, {}) step {}",
                    p.first, p.second, p.step
                )));
            }
            check_extraction(&p.extraction, p.radius, n, idx)?;
        }
        let r = &self.risk;
        if r.segments == 0 {
            return Err(Error::invalid("risk grid needs at least one segment"));
        }
        if let Some(lm) = r.lambda_max {
            if !(lm > 0.0 && lm.is_finite()) {
                return Err(Error::invalid("lambda_max must be positive"));
            }
        }
        Ok(())
    }
}

fn check_extraction(s: &DMatrix<f64>, radius: f64, n: usize, idx: usize) -> Result<()> {
    if s.ncols() != n || s.nrows() == 0 {
        return Err(Error::dim(format!("collision constraint {idx}: S is {}x{}, expected q x {n}", s.nrows(), s.ncols())));
    }
    if s.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid(format!("collision constraint {idx}: S is zero")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("collision constraint {idx}: radius {radius} must be positive")));
    }
    Ok(())
}

/// `[I_q 0]`, extracting the first `q` state components.
pub fn position_extraction(q: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, n, |r, c| if r == c { 1.0 } else { 0.0 })
}
