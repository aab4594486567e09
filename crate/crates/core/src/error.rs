use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Sample data with zero spread. The sample-statistics bound needs a
    /// strictly positive sample standard deviation.
    #[error("degenerate sample data: {0}")]
    DegenerateSample(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    /// The requested violation probability sits at or below the `1/(N_s+1)`
    /// floor of the sample-statistics bound, so no finite multiplier exists.
    #[error(
        "risk {omega:e} is too small for {samples} samples: each allocation must exceed \
         1/(N_s+1) = {min_omega:e}; use at least {suggested_samples} samples"
    )]
    RiskTooSmallForSampleSize {
        omega: f64,
        samples: usize,
        min_omega: f64,
        suggested_samples: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("convex subproblem infeasible at iteration {iteration}")]
    InfeasibleSubproblem { iteration: usize },

    #[error("solver backend failure: {0}")]
    Backend(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Risk-floor error for a single allocation `omega` with `samples` samples.
    pub fn risk_too_small(omega: f64, samples: usize) -> Self {
        let min_omega = 1.0 / (samples as f64 + 1.0);
        let suggested = if omega > 0.0 && omega.is_finite() {
            // smallest N_s with 1/(N_s+1) < omega, doubled so the multiplier stays moderate
            2 * ((1.0 / omega).floor() as usize).max(1)
        } else {
            usize::MAX
        };
        Error::RiskTooSmallForSampleSize {
            omega,
            samples,
            min_omega,
            suggested_samples: suggested.max(2),
        }
    }
}
