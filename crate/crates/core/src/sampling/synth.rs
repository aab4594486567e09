//! Synthetic disturbance processes: i.i.d. across time steps, independent
//! across dimensions, each dimension `mean + std · e` with `e` a zero-mean,
//! unit-variance base variable.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DisturbanceSampleSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// Equal mixture of `Normal(±separation, 1 − separation²)`.
    Mixture { separation: f64 },
    /// Standardized `Gamma(shape, 1)`, right-skewed.
    Skewed { shape: f64 },
}

impl GeneratorKind {
    fn validate(&self) -> Result<()> {
        match *self {
            GeneratorKind::Mixture { separation } if !(0.0..1.0).contains(&separation) => {
                Err(Error::invalid(format!("mixture separation {separation} outside [0, 1)")))
            }
            GeneratorKind::Skewed { shape } if !(shape > 0.0 && shape.is_finite()) => {
                Err(Error::invalid(format!("skewed shape {shape} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// One zero-mean, unit-variance draw.
    pub fn draw_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            GeneratorKind::Gaussian => rng.sample(StandardNormal),
            GeneratorKind::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            GeneratorKind::Mixture { separation } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let e: f64 = rng.sample(StandardNormal);
                sign * separation + (1.0 - separation * separation).sqrt() * e
            }
            GeneratorKind::Skewed { shape } => {
                // validated at construction
                let g = Gamma::new(shape, 1.0).expect("positive shape");
                (g.sample(rng) - shape) / shape.sqrt()
            }
        }
    }
}

/// Per-step disturbance law shared by all steps of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub std: Vec<f64>,
    #[serde(default)]
    pub mean: Vec<f64>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, std: Vec<f64>, mean: Option<Vec<f64>>) -> Result<Self> {
        let mean = mean.unwrap_or_else(|| vec![0.0; std.len()]);
        let spec = Self { kind, std, mean };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.std.is_empty() {
            return Err(Error::invalid("generator std is empty"));
        }
        if !self.mean.is_empty() && self.mean.len() != self.std.len() {
            return Err(Error::dim(format!(
                "generator mean has length {}, std has length {}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("generator std entries must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.std.len()
    }

    fn mean_at(&self, d: usize) -> f64 {
        self.mean.get(d).copied().unwrap_or(0.0)
    }

    /// Exact mean of the stacked disturbance over `horizon` steps.
    pub fn stacked_mean(&self, horizon: usize) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(horizon * n, |i, _| self.mean_at(i % n))
    }

    /// Exact (diagonal) covariance of the stacked disturbance.
    pub fn stacked_covariance(&self, horizon: usize) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_diagonal(&DVector::from_fn(horizon * n, |i, _| self.std[i % n].powi(2)))
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        for (i, slot) in out.iter_mut().enumerate() {
            let d = i % n;
            *slot = self.mean_at(d) + self.std[d] * self.kind.draw_unit(rng);
        }
    }
}

/// Draws `n_samples` stacked disturbances for one vehicle. The stream is
/// `ChaCha8` seeded with `seed` on stream `vehicle`, so vehicles are
/// independent and the result is reproducible.
pub fn synth_disturbances(
    spec: &GeneratorSpec,
    vehicle: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DisturbanceSampleSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vehicle as u64);
    let len = horizon * spec.dim();
    let mut data = DMatrix::zeros(len, n_samples);
    for mut col in data.column_iter_mut() {
        spec.fill(&mut rng, col.as_mut_slice());
    }
    DisturbanceSampleSet::new(
        vehicle,
        horizon,
        spec.dim(),
        data,
        format!("synthetic {:?} seed={seed} stream={vehicle}", spec.kind),
    )
}

/// Source of fresh stacked disturbances for Monte Carlo validation.
pub trait DisturbanceSampler: Send + Sync {
    /// Length of one stacked draw.
    fn dim(&self) -> usize;
    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
}

/// The generator law applied at every step of a horizon.
#[derive(Debug, Clone)]
pub struct ProcessSampler {
    pub spec: GeneratorSpec,
    pub horizon: usize,
}

impl DisturbanceSampler for ProcessSampler {
    fn dim(&self) -> usize {
        self.spec.dim() * self.horizon
    }

    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        self.spec.fill(rng, out);
    }
}

/// Resamples stored stacked draws uniformly with replacement.
#[derive(Debug, Clone)]
pub struct EmpiricalSampler {
    pub data: DMatrix<f64>,
}

impl DisturbanceSampler for EmpiricalSampler {
    fn dim(&self) -> usize {
        self.data.nrows()
    }

    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let j = rng.random_range(0..self.data.ncols());
        out.copy_from_slice(self.data.column(j).as_slice());
    }
}

/// Always zero; for deterministic vehicles.
#[derive(Debug, Clone)]
pub struct ZeroSampler {
    pub dim: usize,
}

impl DisturbanceSampler for ZeroSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw_into(&self, _rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.fill(0.0);
    }
}
