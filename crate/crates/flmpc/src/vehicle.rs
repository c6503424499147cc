//! Kinematic car model: rear-driven bicycle kinematics, physical parameters,
//! and the box of admissible velocity commands.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("steering singularity: |phi| = {0} >= pi/2")]
    SteeringSingularity(f64),
}

/// Physical parameters of the car and the controller sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarParams {
    /// Wheelbase [m].
    pub l: f64,
    /// Distance of the flat-output point P ahead of the front axle [m].
    pub delta: f64,
    /// Longitudinal speed bound [m/s].
    pub v_max: f64,
    /// Steering rate bound [rad/s].
    pub omega_max: f64,
    /// Steering angle bound [rad].
    pub phi_max: f64,
    /// Sampling time [s].
    pub ts: f64,
}

impl CarParams {
    /// Quanser QCar lab configuration.
    pub fn qcar() -> Self {
        CarParams {
            l: 0.256,
            delta: 0.35,
            v_max: 1.0,
            omega_max: 10.0,
            phi_max: 0.6,
            ts: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 6] = [
            ("l", self.l, self.l > 0.0),
            ("delta", self.delta, self.delta > 0.0),
            ("v_max", self.v_max, self.v_max > 0.0),
            ("omega_max", self.omega_max, self.omega_max > 0.0),
            (
                "phi_max",
                self.phi_max,
                self.phi_max > 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2,
            ),
            ("ts", self.ts, self.ts > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

/// Car pose: rear-axle midpoint, heading and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub phi: f64,
}

impl CarState {
    pub fn new(x: f64, y: f64, theta: f64, phi: f64) -> Self {
        CarState { x, y, theta, phi }
    }

    /// Front-axle midpoint, derived from the pose.
    pub fn front_axle(&self, p: &CarParams) -> (f64, f64) {
        (
            self.x + p.l * self.theta.cos(),
            self.y + p.l * self.theta.sin(),
        )
    }
}

/// Velocity command: longitudinal speed and steering rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CarInput {
    pub v: f64,
    pub omega: f64,
}

impl CarInput {
    pub fn new(v: f64, omega: f64) -> Self {
        CarInput { v, omega }
    }
}

/// Right-hand side of the continuous-time kinematics.
pub fn continuous_derivative(
    q: &CarState,
    u: &CarInput,
    p: &CarParams,
) -> Result<[f64; 4], ModelError> {
    if q.phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(ModelError::SteeringSingularity(q.phi));
    }
    Ok([
        u.v * q.theta.cos(),
        u.v * q.theta.sin(),
        u.v / p.l * q.phi.tan(),
        u.omega,
    ])
}

/// One forward-Euler step of the discrete kinematics.
pub fn step_discrete(q: &CarState, u: &CarInput, p: &CarParams) -> Result<CarState, ModelError> {
    let dq = continuous_derivative(q, u, p)?;
    Ok(CarState {
        x: q.x + p.ts * dq[0],
        y: q.y + p.ts * dq[1],
        theta: q.theta + p.ts * dq[2],
        phi: q.phi + p.ts * dq[3],
    })
}

/// RK4 integration of the continuous kinematics over one sampling period,
/// split into `substeps` stages. Used as a plant-mismatch mode; the discrete
/// Euler model remains the default plant.
pub fn step_rk4(
    q: &CarState,
    u: &CarInput,
    p: &CarParams,
    substeps: usize,
) -> Result<CarState, ModelError> {
    let h = p.ts / substeps.max(1) as f64;
    let mut s = [q.x, q.y, q.theta, q.phi];
    let deriv = |s: &[f64; 4]| -> Result<[f64; 4], ModelError> {
        continuous_derivative(&CarState::new(s[0], s[1], s[2], s[3]), u, p)
    };
    for _ in 0..substeps.max(1) {
        let k1 = deriv(&s)?;
        let mid1 = std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]);
        let k2 = deriv(&mid1)?;
        let mid2 = std::array::from_fn(|i| s[i] + 0.5 * h * k2[i]);
        let k3 = deriv(&mid2)?;
        let end = std::array::from_fn(|i| s[i] + h * k3[i]);
        let k4 = deriv(&end)?;
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(CarState::new(s[0], s[1], s[2], s[3]))
}

/// Membership in the closed velocity box.
pub fn is_admissible(u: &CarInput, p: &CarParams) -> bool {
    u.v.abs() <= p.v_max && u.omega.abs() <= p.omega_max
}
