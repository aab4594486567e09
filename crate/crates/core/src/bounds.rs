//! Tail bounds built from sample statistics.
//!
//! For `N_s ≥ 2` i.i.d. samples with (biased, divisor `N_s`) sample mean `m̂`
//! and sample standard deviation `ŝ > 0`, and an independent draw `x` from the
//! same distribution,
//!
//! ```text
//! P(x − m̂ ≥ λ ŝ) ≤ f(λ) = (√N* + λ)² / (λ² N_s + (√N* + λ)²),   N* = N_s + 1
//! ```
//!
//! The same bound holds for the lower tail. `f` decreases from 1 towards the
//! floor `1/N*`, and is convex above the threshold `Θ(N_s)`, the positive root
//! of `(2/√N*) λ³ + 3λ² − 1`.

use crate::error::{Error, Result};

/// Upper clamp applied to multipliers that are decision variables.
pub const LAMBDA_CLAMP: f64 = 1e8;

/// `3^(-1/2)`, an upper bound on `Θ(N_s)` for every sample size.
pub const THETA_UPPER: f64 = 0.577_350_269_189_625_8;

const THETA_RESIDUAL_TOL: f64 = 1e-10;

/// Sample-size context for the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleBound {
    samples: usize,
}

impl SampleBound {
    pub fn new(samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::invalid(format!(
                "the sample-statistics bound needs at least 2 samples, got {samples}"
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `N* = N_s + 1`.
    pub fn augmented(&self) -> f64 {
        self.samples as f64 + 1.0
    }

    /// Asymptotic floor `1/N*`; no finite multiplier reaches it.
    pub fn floor(&self) -> f64 {
        1.0 / self.augmented()
    }

    /// `f(λ)` for `λ > 0`.
    pub fn f(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || lambda.is_nan() {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        Ok(self.f_unchecked(lambda))
    }

    pub(crate) fn f_unchecked(&self, lambda: f64) -> f64 {
        if lambda.is_infinite() {
            return self.floor();
        }
        let a = self.augmented().sqrt() + lambda;
        let a2 = a * a;
        a2 / (lambda * lambda * self.samples as f64 + a2)
    }

    /// Derivative `f'(λ)`.
    pub fn f_prime(&self, lambda: f64) -> f64 {
        let ns = self.samples as f64;
        let r = self.augmented().sqrt();
        let a = r + lambda;
        let den = ns * lambda * lambda + a * a;
        -2.0 * ns * lambda * a * r / (den * den)
    }

    /// Inverse of `f`: the multiplier whose bound equals `omega`.
    ///
    /// `λ = √(N*(1−ω)) / (√(N_s ω) − √(1−ω))`, defined for `ω ∈ (1/N*, 1)`.
    pub fn lambda_of_omega(&self, omega: f64) -> Result<f64> {
        if !(omega < 1.0) || omega.is_nan() {
            return Err(Error::invalid(format!("risk must lie in (0, 1), got {omega}")));
        }
        if !(omega > self.floor()) {
            return Err(Error::risk_too_small(omega, self.samples));
        }
        let ns = self.samples as f64;
        let nstar = self.augmented();
        let q = 1.0 - omega;
        // √(N_s ω) − √(1−ω) rewritten to avoid cancellation near the floor
        let den = (nstar * omega - 1.0) / ((ns * omega).sqrt() + q.sqrt());
        Ok((nstar * q).sqrt() / den)
    }

    /// Convexity threshold `Θ(N_s)`: `f` is convex exactly on `[Θ, ∞)`.
    pub fn theta(&self) -> f64 {
        let nstar = self.augmented();
        let ns = self.samples as f64;
        let closed = nstar.sqrt() * (((-(ns - 1.0) / nstar).acos() / 3.0).cos() - 0.5);
        if self.cubic(closed).abs() <= THETA_RESIDUAL_TOL && closed > 0.0 {
            return closed;
        }
        self.theta_bisection()
    }

    /// `(2/√N*) λ³ + 3λ² − 1`, whose positive root is `Θ`.
    pub fn cubic(&self, lambda: f64) -> f64 {
        2.0 / self.augmented().sqrt() * lambda.powi(3) + 3.0 * lambda * lambda - 1.0
    }

    fn theta_bisection(&self) -> f64 {
        // cubic(0) = −1 and cubic(3^-1/2) > 0; the cubic is increasing on λ > 0
        let (mut lo, mut hi) = (0.0f64, THETA_UPPER);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cubic(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Necessary sample count for a target-set group with `total_halfspaces`
/// members under threshold `alpha`: `N_s ≥ Σ N_T / α − 1`, never below 2.
///
/// This only guarantees the floor sits below `alpha`; finite multipliers
/// generally need more samples.
pub fn min_samples_target(total_halfspaces: usize, alpha: f64) -> Result<usize> {
    if total_halfspaces == 0 {
        return Err(Error::invalid("need at least one halfspace"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let raw = total_halfspaces as f64 / alpha - 1.0;
    // absorb floating error in exact quotients such as 12 / 0.05
    let n = (raw - 1e-9 * raw.abs()).ceil().max(0.0) as usize;
    Ok(n.max(2))
}

/// Cantelli's one-sided bound with true moments: `P(x − E x ≥ λ σ) ≤ 1/(λ²+1)`.
pub fn cantelli_bound(lambda: f64) -> f64 {
    1.0 / (lambda * lambda + 1.0)
}

/// Multiplier whose Cantelli bound equals `omega`: `λ = √((1−ω)/ω)`.
pub fn cantelli_lambda(omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::invalid(format!("risk must lie in (0, 1), got {omega}")));
    }
    Ok(((1.0 - omega) / omega).sqrt())
}

/// Scenario-approach sample count `⌈(2/α)(ln(1/β) + N_o)⌉`.
pub fn scenario_sample_count(alpha: f64, confidence: f64, decision_vars: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence parameter must lie in (0, 1), got {confidence}"
        )));
    }
    if decision_vars == 0 {
        return Err(Error::invalid("need at least one decision variable"));
    }
    let bound = 2.0 / alpha * ((1.0 / confidence).ln() + decision_vars as f64);
    Ok(bound.ceil() as usize)
}
