//! Discrete LTI dynamics, horizon concatenation and the Clohessy–Wiltshire
//! relative-motion model.
//!
//! State trajectories are written as an affine function of the initial state,
//! the stacked control sequence `U = [u(0); …; u(N-1)]` and the stacked
//! disturbance sequence `W = [w(0); …; w(N-1)]`:
//!
//! ```text
//! x(k) = A^k x(0) + C(k) U + D(k) W,   k = 1..N
//! C(k) = [A^(k-1)B … AB B 0 … 0],  D(k) = [A^(k-1) … A I 0 … 0]
//! ```

use nalgebra::{DMatrix, DVector, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x(k+1) = A x(k) + B u(k) + w(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::dim(format!(
                "state matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::dim(format!(
                "input matrix must be {}xm with m >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("system matrices contain non-finite entries"));
        }
        Ok(Self { a, b, dt })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Sampling interval in seconds. Metadata only.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + w
    }
}

/// Horizon-stacked dynamics blocks for `k = 1..=N`.
#[derive(Debug, Clone)]
pub struct ConcatenatedDynamics {
    horizon: usize,
    state_dim: usize,
    input_dim: usize,
    /// `A^0 ..= A^N`
    powers: Vec<DMatrix<f64>>,
    /// `C(1) ..= C(N)`
    control: Vec<DMatrix<f64>>,
    /// `D(1) ..= D(N)`
    disturbance: Vec<DMatrix<f64>>,
}

pub fn concatenate(system: &LtiSystem, horizon: usize) -> Result<ConcatenatedDynamics> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least one step"));
    }
    let n = system.state_dim();
    let m = system.input_dim();

    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::identity(n, n));
    for k in 1..=horizon {
        let next = system.a() * &powers[k - 1];
        powers.push(next);
    }

    let mut control = Vec::with_capacity(horizon);
    let mut disturbance = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let mut c = DMatrix::zeros(n, horizon * m);
        let mut d = DMatrix::zeros(n, horizon * n);
        // input/disturbance applied at step t reaches x(k) through A^(k-1-t)
        for t in 0..k {
            let p = &powers[k - 1 - t];
            c.view_mut((0, t * m), (n, m)).copy_from(&(p * system.b()));
            d.view_mut((0, t * n), (n, n)).copy_from(p);
        }
        control.push(c);
        disturbance.push(d);
    }

    Ok(ConcatenatedDynamics {
        horizon,
        state_dim: n,
        input_dim: m,
        powers,
        control,
        disturbance,
    })
}

impl ConcatenatedDynamics {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Length of a stacked control sequence, `N·m`.
    pub fn control_len(&self) -> usize {
        self.horizon * self.input_dim
    }

    /// Length of a stacked disturbance sequence, `N·n`.
    pub fn disturbance_len(&self) -> usize {
        self.horizon * self.state_dim
    }

    fn check_step(&self, k: usize) {
        assert!(
            (1..=self.horizon).contains(&k),
            "time step {k} outside 1..={}",
            self.horizon
        );
    }

    /// `A^k`, for `k = 0..=N`.
    pub fn state_power(&self, k: usize) -> &DMatrix<f64> {
        &self.powers[k]
    }

    /// `C(k)`, for `k = 1..=N`.
    pub fn control_block(&self, k: usize) -> &DMatrix<f64> {
        self.check_step(k);
        &self.control[k - 1]
    }

    /// `D(k)`, for `k = 1..=N`.
    pub fn disturbance_block(&self, k: usize) -> &DMatrix<f64> {
        self.check_step(k);
        &self.disturbance[k - 1]
    }

    /// `A^k x0 + C(k) U + D(k) W`.
    pub fn state_at(
        &self,
        k: usize,
        x0: &DVector<f64>,
        controls: &DVector<f64>,
        disturbance: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_dims(x0, controls, disturbance)?;
        self.check_step(k);
        Ok(&self.powers[k] * x0
            + &self.control[k - 1] * controls
            + &self.disturbance[k - 1] * disturbance)
    }

    fn check_dims(
        &self,
        x0: &DVector<f64>,
        controls: &DVector<f64>,
        disturbance: &DVector<f64>,
    ) -> Result<()> {
        if x0.len() != self.state_dim {
            return Err(Error::dim(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                self.state_dim
            )));
        }
        if controls.len() != self.control_len() {
            return Err(Error::dim(format!(
                "control sequence has length {}, expected {}",
                controls.len(),
                self.control_len()
            )));
        }
        if disturbance.len() != self.disturbance_len() {
            return Err(Error::dim(format!(
                "disturbance sequence has length {}, expected {}",
                disturbance.len(),
                self.disturbance_len()
            )));
        }
        Ok(())
    }
}

/// A vehicle and its known initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    pub x0: DVector<f64>,
}

/// Mean trajectory `x̄(k) = A^k x0 + C(k) U + D(k) ŵ` for `k = 1..=N`.
pub fn mean_trajectory(
    dynamics: &ConcatenatedDynamics,
    x0: &DVector<f64>,
    controls: &DVector<f64>,
    disturbance_mean: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    (1..=dynamics.horizon())
        .map(|k| dynamics.state_at(k, x0, controls, disturbance_mean))
        .collect()
}

/// Closed-form CWH state transition matrix over `t` seconds for orbital
/// rate `n`. State order is `[x y z vx vy vz]` with `x` radial, `y`
/// along-track and `z` cross-track.
pub fn cwh_transition(n: f64, t: f64) -> Matrix6<f64> {
    let nt = n * t;
    let (s, c) = nt.sin_cos();
    Matrix6::new(
        4.0 - 3.0 * c,
        0.0,
        0.0,
        s / n,
        2.0 * (1.0 - c) / n,
        0.0,
        //
        6.0 * (s - nt),
        1.0,
        0.0,
        -2.0 * (1.0 - c) / n,
        (4.0 * s - 3.0 * nt) / n,
        0.0,
        //
        0.0,
        0.0,
        c,
        0.0,
        0.0,
        s / n,
        //
        3.0 * n * s,
        0.0,
        0.0,
        c,
        2.0 * s,
        0.0,
        //
        -6.0 * n * (1.0 - c),
        0.0,
        0.0,
        -2.0 * s,
        4.0 * c - 3.0,
        0.0,
        //
        0.0,
        0.0,
        -n * s,
        0.0,
        0.0,
        c,
    )
}

/// Orbital rate `sqrt(mu / R0^3)` in rad/s.
pub fn orbital_rate(radius_km: f64, mu_km3_s2: f64) -> f64 {
    (mu_km3_s2 / radius_km.powi(3)).sqrt()
}

/// Discrete CWH model with impulsive velocity changes applied at the start of
/// each interval: `A = Φ(dt)`, `B = Φ(dt)·[0; I₃]`. Mass is normalized to one,
/// so controls carry velocity-change units.
pub fn cwh_system(radius_km: f64, mu_km3_s2: f64, dt: f64) -> Result<LtiSystem> {
    for (name, v) in [("orbital radius", radius_km), ("gravitational parameter", mu_km3_s2), ("dt", dt)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let n = orbital_rate(radius_km, mu_km3_s2);
    let phi = cwh_transition(n, dt);
    let a = DMatrix::from_iterator(6, 6, phi.iter().copied());
    let b = a.columns(3, 3).into_owned();
    LtiSystem::new(a, b, dt)
}

/// Circular chief orbit. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircularOrbit {
    pub radius_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Argument of perigee plus true anomaly.
    pub arg_latitude_deg: f64,
}

/// Differences between a circular deputy orbit and the chief's. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelativeElements {
    pub radius_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub arg_latitude_deg: f64,
}

/// First-order map from circular relative elements to a CWH state in meters
/// and meters per second:
///
/// ```text
/// x  = δa
/// y  = a (δu + cos i δΩ)
/// z  = a (sin u δi − cos u sin i δΩ)
/// ẋ  = 0
/// ẏ  = −(3/2) n δa
/// ż  = a n (cos u δi + sin u sin i δΩ)
/// ```
pub fn relative_state_from_elements(
    chief: &CircularOrbit,
    deputy: &RelativeElements,
    mu_km3_s2: f64,
) -> DVector<f64> {
    let a = chief.radius_km * 1e3;
    let n = orbital_rate(chief.radius_km, mu_km3_s2);
    let i = chief.inclination_deg.to_radians();
    let u = chief.arg_latitude_deg.to_radians();
    let da = deputy.radius_km * 1e3;
    let di = deputy.inclination_deg.to_radians();
    let draan = deputy.raan_deg.to_radians();
    let du = deputy.arg_latitude_deg.to_radians();

    DVector::from_vec(vec![
        da,
        a * (du + i.cos() * draan),
        a * (u.sin() * di - u.cos() * i.sin() * draan),
        0.0,
        -1.5 * n * da,
        a * n * (u.cos() * di + u.sin() * i.sin() * draan),
    ])
}
