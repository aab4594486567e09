//! Convex subproblem in a backend-neutral form:
//!
//! ```text
//! minimize    ½ Σ p_i x_i² + cᵀx
//! subject to  aᵀx + b ≤ 0                 (linear)
//!             ‖F x + g‖ ≤ dᵀx + e         (second-order cone)
//!             lower ≤ x ≤ upper
//! ```

use serde::Serialize;

/// Sparse affine function `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(constant: f64) -> Self {
        Self { terms: Vec::new(), constant }
    }

    pub fn push(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }
}

/// Which chance constraint (or piece of plumbing) a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    /// Halfspace `row` of target set `set`.
    Target { set: usize, row: usize },
    /// Halfspace `row` of target set `set` enforced for disturbance sample `sample`.
    TargetSample { set: usize, row: usize, sample: usize },
    /// Chord `segment` of the risk majorant for target variable `lambda`.
    RiskEpigraph { lambda: usize, segment: usize },
    RiskBudget,
    Obstacle { index: usize },
    Pairwise { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Feasible when `expr ≤ 0`.
    pub expr: AffineExpr,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    /// Feasible when `‖vector‖ ≤ scalar`.
    pub vector: Vec<AffineExpr>,
    pub scalar: AffineExpr,
    pub origin: Origin,
}

impl SocConstraint {
    /// `‖vector‖ − scalar`; non-positive when satisfied.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let norm = self.vector.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        norm - self.scalar.eval(x)
    }
}

/// Positions of each variable block in the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    pub vehicles: usize,
    pub control_len: usize,
    /// Target multipliers `λ` (risk-optimizing mode only).
    pub lambda_count: usize,
    /// Epigraph variables bounding each `f(λ)` (same count as `λ`).
    pub epigraph_count: usize,
    /// One slack per linearized collision constraint.
    pub slack_count: usize,
}

impl VariableLayout {
    pub fn control(&self, vehicle: usize, entry: usize) -> usize {
        vehicle * self.control_len + entry
    }

    pub fn lambda(&self, j: usize) -> usize {
        self.vehicles * self.control_len + j
    }

    pub fn epigraph(&self, j: usize) -> usize {
        self.lambda(self.lambda_count) + j
    }

    pub fn slack(&self, j: usize) -> usize {
        self.epigraph(self.epigraph_count) + j
    }

    pub fn total(&self) -> usize {
        self.slack(self.slack_count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReformulatedProgram {
    pub layout: VariableLayout,
    /// Diagonal of the quadratic objective term (`½ Σ p_i x_i²`).
    pub quadratic: Vec<f64>,
    pub linear_objective: Vec<f64>,
    pub linear: Vec<LinearConstraint>,
    pub cones: Vec<SocConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Weight on the slack sum in the objective.
    pub penalty: f64,
}

impl ReformulatedProgram {
    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.quadratic)
            .zip(&self.linear_objective)
            .map(|((v, p), c)| 0.5 * p * v * v + c * v)
            .sum()
    }

    /// Largest constraint violation at `x`, evaluated directly.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let lin = self.linear.iter().map(|c| c.expr.eval(x));
        let soc = self.cones.iter().map(|c| c.residual(x));
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u));
        lin.chain(soc).chain(bounds).fold(0.0, f64::max)
    }

    pub fn slack_sum(&self, x: &[f64]) -> f64 {
        (0..self.layout.slack_count).map(|j| x[self.layout.slack(j)]).fold(0.0, |a, s| a + s)
    }
}
