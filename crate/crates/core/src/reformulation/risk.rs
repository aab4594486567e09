//! Risk allocation and the piecewise-linear majorant of the target risk budget.

use serde::{Deserialize, Serialize};

use crate::bounds::{cantelli_bound, cantelli_lambda, SampleBound, LAMBDA_CLAMP, THETA_UPPER};
use crate::error::{Error, Result};
use crate::problem::{RiskMode, RiskSettings, ScenarioSpec};

/// Maps a multiplier `λ` to a tail probability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    /// Sample-statistics bound with `N_s` samples.
    Sample(SampleBound),
    /// Cantelli's inequality with known moments.
    Cantelli,
}

impl TailModel {
    pub fn f(&self, lambda: f64) -> f64 {
        match self {
            TailModel::Sample(b) => b.f_unchecked(lambda),
            TailModel::Cantelli => cantelli_bound(lambda),
        }
    }

    /// Multiplier for risk `omega`; errors past the `1e8` clamp instead of
    /// returning a meaningless constraint.
    pub fn lambda_of_omega(&self, omega: f64) -> Result<f64> {
        let lambda = match self {
            TailModel::Sample(b) => b.lambda_of_omega(omega)?,
            TailModel::Cantelli => cantelli_lambda(omega)?,
        };
        if lambda > LAMBDA_CLAMP {
            return Err(match self {
                TailModel::Sample(b) => Error::risk_too_small(omega, b.samples()),
                TailModel::Cantelli => Error::invalid(format!("risk {omega:e} needs a multiplier above {LAMBDA_CLAMP:e}")),
            });
        }
        Ok(lambda)
    }

    /// Lower end of the region where `f` is convex.
    pub fn convex_from(&self) -> f64 {
        match self {
            TailModel::Sample(b) => b.theta(),
            TailModel::Cantelli => THETA_UPPER,
        }
    }

    /// Infimum of `f` over all finite multipliers.
    pub fn floor(&self) -> f64 {
        match self {
            TailModel::Sample(b) => b.floor(),
            TailModel::Cantelli => 0.0,
        }
    }
}

/// Per-constraint risk `ω` and the multiplier it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub omega: f64,
    pub lambda: f64,
}

/// Risk assigned to every member of the three groups. Target entries follow
/// target-set order, then row order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskAllocation {
    pub mode: RiskMode,
    pub target: Vec<RiskEntry>,
    pub obstacle: Vec<RiskEntry>,
    pub pairwise: Vec<RiskEntry>,
}

fn split(threshold: f64, count: usize, tail: &TailModel) -> Result<Vec<RiskEntry>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let omega = threshold / count as f64;
    let lambda = tail.lambda_of_omega(omega)?;
    Ok(vec![RiskEntry { omega, lambda }; count])
}

/// Divides each group threshold evenly among its members.
pub fn allocate_uniform(spec: &ScenarioSpec, tail: &TailModel) -> Result<RiskAllocation> {
    check_target_budget(spec, tail)?;
    Ok(RiskAllocation {
        mode: spec.risk.mode,
        target: split(spec.alpha, spec.target_halfspace_count(), tail)?,
        obstacle: split(spec.beta, spec.obstacles.len(), tail)?,
        pairwise: split(spec.gamma, spec.pairwise.len(), tail)?,
    })
}

/// Even the smallest attainable bound summed over all target halfspaces must
/// stay under `α`.
pub fn check_target_budget(spec: &ScenarioSpec, tail: &TailModel) -> Result<()> {
    let count = spec.target_halfspace_count();
    if count == 0 {
        return Ok(());
    }
    if !(count as f64 * tail.floor() < spec.alpha) {
        let samples = match tail {
            TailModel::Sample(b) => b.samples(),
            TailModel::Cantelli => 0,
        };
        return Err(Error::risk_too_small(spec.alpha / count as f64, samples));
    }
    Ok(())
}

/// One chord `a + b·λ` of the risk majorant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chord {
    pub intercept: f64,
    pub slope: f64,
}

/// Knot grid on `[convex_from, λ_max]` for the risk-optimizing mode.
pub fn risk_knots(settings: &RiskSettings, tail: &TailModel, alpha: f64, members: usize) -> Result<Vec<f64>> {
    let lower = tail.convex_from();
    if let Some(knots) = &settings.knots {
        if knots.len() < 2 {
            return Err(Error::invalid("risk grid needs at least 2 knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("risk knots must be strictly increasing"));
        }
        if knots[0] < lower * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "risk knot {} lies below the convexity threshold {lower}",
                knots[0]
            )));
        }
        return Ok(knots.clone());
    }
    let uniform = if members > 0 { tail.lambda_of_omega(alpha / members as f64).ok() } else { None };
    let upper = settings
        .lambda_max
        .unwrap_or_else(|| uniform.map_or(50.0, |l| (4.0 * l).max(50.0)));
    if !(upper > lower) {
        return Err(Error::invalid(format!("lambda_max {upper} must exceed {lower}")));
    }
    let segments = settings.segments.max(1);
    let ratio = upper / lower;
    let mut knots: Vec<f64> = (0..=segments)
        .map(|i| lower * ratio.powf(i as f64 / segments as f64))
        .collect();
    knots[segments] = upper;
    if let Some(l) = uniform {
        if l > lower && l < upper && !knots.iter().any(|k| (k - l).abs() <= 1e-12 * l) {
            let pos = knots.partition_point(|k| *k < l);
            knots.insert(pos, l);
        }
    }
    Ok(knots)
}

pub fn chords(tail: &TailModel, knots: &[f64]) -> Vec<Chord> {
    knots
        .windows(2)
        .map(|w| {
            let (fa, fb) = (tail.f(w[0]), tail.f(w[1]));
            let slope = (fb - fa) / (w[1] - w[0]);
            Chord {
                intercept: fa - slope * w[0],
                slope,
            }
        })
        .collect()
}

/// The chord interpolant, `max_s (a_s + b_s λ)`.
pub fn majorant(chords: &[Chord], lambda: f64) -> f64 {
    chords
        .iter()
        .map(|c| c.intercept + c.slope * lambda)
        .fold(f64::NEG_INFINITY, f64::max)
}
