use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reformulation::ReformulatedProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub affine: bool,
    pub second_order_cone: bool,
    pub convex_quadratic_objective: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemOutcome {
    pub status: SubproblemStatus,
    /// Primal point; meaningful only when `status` is optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
}

/// Anything that can solve a [`ReformulatedProgram`] to optimality or
/// certify that it cannot.
pub trait SubproblemBackend {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn solve(&self, program: &ReformulatedProgram) -> Result<SubproblemOutcome>;
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

impl ClarabelBackend {
    fn settings(&self) -> DefaultSettings<f64> {
        DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iterations)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .tol_feas(self.tolerance)
            .tol_ktratio(self.tolerance.max(1e-8))
            .build()
            .expect("valid solver settings")
    }
}

impl SubproblemBackend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            affine: true,
            second_order_cone: true,
            convex_quadratic_objective: true,
        }
    }

    fn solve(&self, program: &ReformulatedProgram) -> Result<SubproblemOutcome> {
        let n = program.layout.total();
        if program.quadratic.len() != n || program.linear_objective.len() != n {
            return Err(Error::dim("objective does not match the variable layout"));
        }
        let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
        for (i, p) in program.quadratic.iter().enumerate() {
            if *p != 0.0 {
                pi.push(i);
                pj.push(i);
                pv.push(*p);
            }
        }
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

        // Clarabel form: A x + s = b, s in the cone
        let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut row = 0;
        let mut push_row = |terms: &[(usize, f64)], scale: f64, rhs: f64, ai: &mut Vec<usize>, b: &mut Vec<f64>| {
            for &(j, c) in terms {
                ai.push(row);
                aj.push(j);
                av.push(scale * c);
            }
            b.push(rhs);
            row += 1;
        };
        for c in &program.linear {
            push_row(&c.expr.terms, 1.0, -c.expr.constant, &mut ai, &mut b);
        }
        for (j, (&lo, &hi)) in program.lower.iter().zip(&program.upper).enumerate() {
            if hi.is_finite() {
                push_row(&[(j, 1.0)], 1.0, hi, &mut ai, &mut b);
            }
            if lo.is_finite() {
                push_row(&[(j, -1.0)], 1.0, -lo, &mut ai, &mut b);
            }
        }
        let mut cones = vec![SupportedConeT::NonnegativeConeT(b.len())];
        for c in &program.cones {
            push_row(&c.scalar.terms, -1.0, c.scalar.constant, &mut ai, &mut b);
            for e in &c.vector {
                push_row(&e.terms, -1.0, e.constant, &mut ai, &mut b);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + c.vector.len()));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);

        let mut solver = DefaultSolver::new(&p, &program.linear_objective, &a, &b, &cones, self.settings())
            .map_err(|e| Error::Backend(format!("clarabel setup: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SubproblemStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SubproblemStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SubproblemStatus::Unbounded,
            other => return Err(Error::Backend(format!("clarabel stopped with status {other:?}"))),
        };
        Ok(SubproblemOutcome {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
        })
    }
}
