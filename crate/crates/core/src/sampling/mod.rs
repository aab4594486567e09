//! Disturbance samples and the sample moments the reformulation consumes.
//!
//! All statistics divide by `N_s`, not `N_s − 1`; the tail bound is stated for
//! the biased estimators.

mod csv_format;
mod synth;

pub use csv_format::{csv_header, ingest_csv, read_samples, write_samples};
pub use synth::{synth_disturbances, DisturbanceSampler, EmpiricalSampler, GeneratorKind, GeneratorSpec, ProcessSampler, ZeroSampler};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::ConcatenatedDynamics;
use crate::error::{Error, Result};

/// Relative tolerance for eigenvalue clamping of nearly-PSD matrices.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `N_s` stacked disturbance samples `W^[j]` (length `N·n`) for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSampleSet {
    vehicle: usize,
    horizon: usize,
    state_dim: usize,
    /// One sample per column.
    data: DMatrix<f64>,
    provenance: String,
}

impl DisturbanceSampleSet {
    /// Builds a validated set from a `(N·n) × N_s` matrix whose columns are samples.
    pub fn new(
        vehicle: usize,
        horizon: usize,
        state_dim: usize,
        data: DMatrix<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if data.nrows() != horizon * state_dim {
            return Err(Error::dim(format!(
                "samples have dimension {}, expected N·n = {}",
                data.nrows(),
                horizon * state_dim
            )));
        }
        if data.ncols() < 2 {
            return Err(Error::dim(format!(
                "need at least 2 samples, got {}",
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples contain non-finite values"));
        }
        let first = data.column(0);
        if data.column_iter().skip(1).all(|c| c == first) {
            return Err(Error::DegenerateSample(format!(
                "all {} samples for vehicle {vehicle} are identical",
                data.ncols()
            )));
        }
        Ok(Self {
            vehicle,
            horizon,
            state_dim,
            data,
            provenance: provenance.into(),
        })
    }

    pub fn vehicle(&self) -> usize {
        self.vehicle
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn sample_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Samples as columns.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample(&self, j: usize) -> DVector<f64> {
        self.data.column(j).into_owned()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

/// Sample mean and (divisor `N_s`) sample standard deviation of scalars.
pub fn sample_mean_std_scalar(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::dim(format!("need at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::DegenerateSample(
            "sample standard deviation is zero".into(),
        ));
    }
    Ok((mean, var.sqrt()))
}

/// Column mean and divisor-`N_s` covariance of a sample matrix.
pub(crate) fn column_moments(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let ns = data.ncols() as f64;
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / ns;
    symmetrize(&mut cov);
    (mean, cov)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition square root `R` of a symmetric PSD matrix with
/// `R = Rᵀ` and `R R = M`. Eigenvalues in `[−tol·‖M‖, 0)` are clamped to
/// zero; anything more negative is an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("square root of a non-square matrix"));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPositiveSemidefinite(format!(
            "minimum eigenvalue {min:e} against norm {scale:e}"
        )));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let mut r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    symmetrize(&mut r);
    Ok(r)
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPositiveSemidefinite(format!(
            "{what}: minimum eigenvalue {min:e} against norm {scale:e}"
        )));
    }
    Ok(())
}

/// Mean and covariance of one vehicle's stacked disturbance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCache {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl MomentCache {
    pub fn from_samples(samples: &DisturbanceSampleSet) -> Result<Self> {
        let (mean, covariance) = column_moments(samples.data());
        Self::from_moments(mean, covariance)
    }

    /// Known (analytic) moments, as used by the Cantelli baseline.
    pub fn from_moments(mean: DVector<f64>, mut covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::dim("covariance shape does not match mean"));
        }
        symmetrize(&mut covariance);
        check_psd(&covariance, "disturbance covariance")?;
        if covariance.diagonal().iter().all(|&v| v <= 0.0) {
            return Err(Error::DegenerateSample("disturbance covariance is zero".into()));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Moments of `G x(k)` for a halfspace row `G`.
///
/// The mean is affine in the vehicle's controls,
/// `mean(U) = constant + gradientᵀ U`; the standard deviation does not depend
/// on the controls.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceMoments {
    pub constant: f64,
    pub gradient: DVector<f64>,
    pub std: f64,
}

impl HalfspaceMoments {
    pub fn mean_at(&self, controls: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(controls)
    }
}

pub fn halfspace_moments(
    cache: &MomentCache,
    dynamics: &ConcatenatedDynamics,
    g_row: &DVector<f64>,
    k: usize,
    x0: &DVector<f64>,
) -> Result<HalfspaceMoments> {
    let n = dynamics.state_dim();
    if g_row.len() != n || x0.len() != n {
        return Err(Error::dim(format!(
            "halfspace row/initial state must have length {n}"
        )));
    }
    if !(1..=dynamics.horizon()).contains(&k) {
        return Err(Error::invalid(format!("time step {k} outside 1..={}", dynamics.horizon())));
    }
    if cache.mean().len() != dynamics.disturbance_len() {
        return Err(Error::dim("moment cache does not match horizon"));
    }
    let d = dynamics.disturbance_block(k);
    let dg = d.transpose() * g_row;
    let constant = g_row.dot(&(dynamics.state_power(k) * x0)) + dg.dot(cache.mean());
    let gradient = dynamics.control_block(k).transpose() * g_row;
    let var = dg.dot(&(cache.covariance() * &dg));
    let scale = dg.norm_squared() * cache.covariance().diagonal().amax();
    if var < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite(format!(
            "halfspace variance {var:e} at step {k}"
        )));
    }
    if var <= 0.0 {
        return Err(Error::DegenerateSample(format!(
            "halfspace at step {k} has zero sample standard deviation"
        )));
    }
    Ok(HalfspaceMoments {
        constant,
        gradient,
        std: var.sqrt(),
    })
}

/// Moments of the stochastic part `z` of a 2-norm constraint, arranged so that
/// for any deterministic offset `z̄`
///
/// ```text
/// mean ‖z̄ + z‖² = ‖M_mean^½ [z̄; 1]‖²
/// std  ‖z̄ + z‖² = ‖M_std^½  [z̄; 1]‖
/// M_mean = [[I, ẑ], [ẑᵀ, m̂₂]],   M_std = [[4V̂, 2ĉ], [2ĉᵀ, v̂₂]]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFormMoments {
    /// `ẑ`
    pub mean: DVector<f64>,
    /// `V̂`, covariance of `z`
    pub covariance: DMatrix<f64>,
    /// `m̂₂`, mean of `zᵀz`
    pub mean_square: f64,
    /// `v̂₂`, variance of `zᵀz`
    pub var_square: f64,
    /// `ĉ`, covariance between `z` and `zᵀz`
    pub cross: DVector<f64>,
    pub mean_matrix: DMatrix<f64>,
    pub std_matrix: DMatrix<f64>,
    pub mean_root: DMatrix<f64>,
    pub std_root: DMatrix<f64>,
}

impl QuadraticFormMoments {
    /// Sample moments of the columns of `z` (`q × N_s`).
    pub fn from_stochastic_parts(z: &DMatrix<f64>) -> Result<Self> {
        if z.ncols() < 2 {
            return Err(Error::dim("need at least 2 samples"));
        }
        let ns = z.ncols() as f64;
        let (mean, covariance) = column_moments(z);
        let squares: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
        let mean_square = squares.iter().sum::<f64>() / ns;
        let var_square = squares
            .iter()
            .map(|s| (s - mean_square) * (s - mean_square))
            .sum::<f64>()
            / ns;
        let mut cross = DVector::zeros(z.nrows());
        for (col, s) in z.column_iter().zip(&squares) {
            cross.axpy((s - mean_square) / ns, &(col - &mean), 1.0);
        }
        Self::assemble(mean, covariance, mean_square, var_square, cross)
    }

    /// Exact moments of `z ~ Normal(μ, Σ)`:
    /// `m₂ = ‖μ‖² + tr Σ`, `c = 2Σμ`, `v₂ = 4μᵀΣμ + 2 tr(Σ²)`.
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::dim("covariance shape does not match mean"));
        }
        let sm = &covariance * &mean;
        let mean_square = mean.norm_squared() + covariance.trace();
        let cross = 2.0 * &sm;
        let var_square = 4.0 * mean.dot(&sm) + 2.0 * (&covariance * &covariance).trace();
        Self::assemble(mean, covariance, mean_square, var_square, cross)
    }

    fn assemble(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        mean_square: f64,
        var_square: f64,
        cross: DVector<f64>,
    ) -> Result<Self> {
        if !(var_square > f64::EPSILON * mean_square * mean_square) {
            return Err(Error::DegenerateSample(
                "the squared norm of the stochastic part is constant across samples".into(),
            ));
        }
        let q = mean.len();
        let mut mean_matrix = DMatrix::identity(q + 1, q + 1);
        let mut std_matrix = DMatrix::zeros(q + 1, q + 1);
        std_matrix.view_mut((0, 0), (q, q)).copy_from(&(4.0 * &covariance));
        for i in 0..q {
            mean_matrix[(i, q)] = mean[i];
            mean_matrix[(q, i)] = mean[i];
            std_matrix[(i, q)] = 2.0 * cross[i];
            std_matrix[(q, i)] = 2.0 * cross[i];
        }
        mean_matrix[(q, q)] = mean_square;
        std_matrix[(q, q)] = var_square;
        let mean_root = psd_sqrt(&mean_matrix)?;
        let std_root = psd_sqrt(&std_matrix)?;
        Ok(Self {
            mean,
            covariance,
            mean_square,
            var_square,
            cross,
            mean_matrix,
            std_matrix,
            mean_root,
            std_root,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn lift(zbar: &DVector<f64>) -> DVector<f64> {
        let q = zbar.len();
        DVector::from_fn(q + 1, |i, _| if i < q { zbar[i] } else { 1.0 })
    }

    /// Sample mean of `‖z̄ + z‖²` through the matrix form.
    pub fn mean_of_square(&self, zbar: &DVector<f64>) -> f64 {
        (&self.mean_root * Self::lift(zbar)).norm_squared()
    }

    /// Sample standard deviation of `‖z̄ + z‖²` through the matrix form.
    pub fn std_of_square(&self, zbar: &DVector<f64>) -> f64 {
        (&self.std_root * Self::lift(zbar)).norm()
    }

    /// Gradient of [`Self::mean_of_square`]: `2(z̄ + ẑ)`.
    pub fn mean_gradient(&self, zbar: &DVector<f64>) -> DVector<f64> {
        2.0 * (zbar + &self.mean)
    }
}

/// Moments of `z^[j] = S D(k) (W_i^[j] − W_j^[j])`, pairing the two vehicles'
/// samples by index. With no second vehicle, `z^[j] = S D(k) W_i^[j]`.
pub fn quadratic_form_moments(
    samples_i: &DisturbanceSampleSet,
    samples_j: Option<&DisturbanceSampleSet>,
    dynamics: &ConcatenatedDynamics,
    extraction: &DMatrix<f64>,
    k: usize,
) -> Result<QuadraticFormMoments> {
    if extraction.ncols() != dynamics.state_dim() {
        return Err(Error::dim(format!(
            "extraction matrix has {} columns, expected {}",
            extraction.ncols(),
            dynamics.state_dim()
        )));
    }
    if samples_i.dim() != dynamics.disturbance_len() {
        return Err(Error::dim("sample dimension does not match horizon"));
    }
    if !(1..=dynamics.horizon()).contains(&k) {
        return Err(Error::invalid(format!("time step {k} outside 1..={}", dynamics.horizon())));
    }
    let sd = extraction * dynamics.disturbance_block(k);
    let z = match samples_j {
        None => &sd * samples_i.data(),
        Some(other) => {
            if other.sample_count() != samples_i.sample_count() || other.dim() != samples_i.dim() {
                return Err(Error::dim(format!(
                    "paired sample sets differ in shape: {}x{} vs {}x{}",
                    samples_i.dim(),
                    samples_i.sample_count(),
                    other.dim(),
                    other.sample_count()
                )));
            }
            &sd * (samples_i.data() - other.data())
        }
    };
    QuadraticFormMoments::from_stochastic_parts(&z)
}
