//! Input-output feedback linearization of the car kinematics and the exact
//! geometry of the state-dependent input-constraint parallelogram.
//!
//! The flat output z is the Cartesian position of a point P at distance
//! `delta` ahead of the front axle. In the transformed coordinates the
//! output dynamics are two decoupled integrators `z' = z + Ts w`, while the
//! internal state `eta = [theta, phi]` keeps a nonlinear update.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::vehicle::{CarInput, CarParams, CarState};

#[derive(Debug, Error, PartialEq)]
pub enum LinearizeError {
    #[error("steering singularity: |eta2| = {0} not < {1}")]
    SteeringSingularity(f64, f64),
}

/// Internal (unlinearized) state, `eta = [theta, phi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalState {
    pub eta1: f64,
    pub eta2: f64,
}

impl InternalState {
    pub fn new(eta1: f64, eta2: f64) -> Self {
        InternalState { eta1, eta2 }
    }

    pub fn from_state(q: &CarState) -> Self {
        InternalState {
            eta1: q.theta,
            eta2: q.phi,
        }
    }

    /// eta2 must stay clear of the pi/2 singularity; when params are given
    /// the stricter bound phi_max applies.
    pub fn check(&self, p: Option<&CarParams>) -> Result<(), LinearizeError> {
        let bound = p
            .map(|p| p.phi_max)
            .unwrap_or(std::f64::consts::FRAC_PI_2);
        // Allow the closed interval [-phi_max, phi_max] but never pi/2.
        if self.eta2.abs() > bound || self.eta2.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(LinearizeError::SteeringSingularity(self.eta2, bound));
        }
        Ok(())
    }
}

/// Cartesian position of the flat-output point P.
pub fn output_transform(q: &CarState, p: &CarParams) -> Vector2<f64> {
    Vector2::new(
        q.x + p.l * q.theta.cos() + p.delta * (q.theta + q.phi).cos(),
        q.y + p.l * q.theta.sin() + p.delta * (q.theta + q.phi).sin(),
    )
}

/// The 2x2 input transformation `w = M(eta) u`.
pub fn input_matrix(eta: &InternalState, p: &CarParams) -> Result<Matrix2<f64>, LinearizeError> {
    eta.check(None)?;
    let (e1, e2) = (eta.eta1, eta.eta2);
    let s1 = (e1 + e2).sin();
    let c1 = (e1 + e2).cos();
    let t2 = e2.tan();
    Ok(Matrix2::new(
        e1.cos() - t2 * (e1.sin() + p.delta / p.l * s1),
        -p.delta * s1,
        e1.sin() + t2 * (e1.cos() + p.delta / p.l * c1),
        p.delta * c1,
    ))
}

/// Analytic inverse of `M(eta)` via the 2x2 adjugate and the closed-form
/// determinant `delta / cos(eta2)`.
pub fn input_matrix_inverse(
    eta: &InternalState,
    p: &CarParams,
) -> Result<Matrix2<f64>, LinearizeError> {
    let m = input_matrix(eta, p)?;
    let det = p.delta / eta.eta2.cos();
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// The 2x2 matrix of the internal dynamics `eta_dot = O(eta) w`.
pub fn internal_matrix(eta: &InternalState, p: &CarParams) -> Result<Matrix2<f64>, LinearizeError> {
    eta.check(None)?;
    let (e1, e2) = (eta.eta1, eta.eta2);
    let s1 = (e1 + e2).sin();
    let c1 = (e1 + e2).cos();
    let s2v = e2.sin();
    Ok(Matrix2::new(
        s2v * c1 / p.l,
        s2v * s1 / p.l,
        -s2v * c1 / p.l - s1 / p.delta,
        -s2v * s1 / p.l + c1 / p.delta,
    ))
}

/// One forward-Euler step of the discrete feedback-linearized model.
pub fn fl_discrete_step(
    z: &Vector2<f64>,
    eta: &InternalState,
    w: &Vector2<f64>,
    p: &CarParams,
) -> Result<(Vector2<f64>, InternalState), LinearizeError> {
    let o = internal_matrix(eta, p)?;
    let deta = o * w;
    Ok((
        z + p.ts * w,
        InternalState::new(eta.eta1 + p.ts * deta[0], eta.eta2 + p.ts * deta[1]),
    ))
}

/// Tracking-error update `z_err' = z_err + Ts (w - w_r)`.
pub fn error_step(
    z_err: &Vector2<f64>,
    w: &Vector2<f64>,
    w_r: &Vector2<f64>,
    p: &CarParams,
) -> Vector2<f64> {
    z_err + p.ts * (w - w_r)
}

/// Time derivative of the output transform along the car dynamics,
/// `J(q) f(q, u)`. Coincides with `M(eta) u`; the identity is what makes
/// linearization and Euler discretization commute.
pub fn output_derivative(q: &CarState, u: &CarInput, p: &CarParams) -> Vector2<f64> {
    let theta_dot = u.v / p.l * q.phi.tan();
    let phi_dot = u.omega;
    let a = q.theta + q.phi;
    Vector2::new(
        u.v * q.theta.cos() - p.l * q.theta.sin() * theta_dot - p.delta * a.sin() * (theta_dot + phi_dot),
        u.v * q.theta.sin() + p.l * q.theta.cos() * theta_dot + p.delta * a.cos() * (theta_dot + phi_dot),
    )
}

/// The state-dependent parallelogram `{w : L(eta) w <= g}` with its analytic
/// vertices (V3 = -V1, V4 = -V2).
#[derive(Debug, Clone)]
pub struct InputPolytope {
    /// 4x2 shaping matrix, `L = T M^{-1}(eta)`.
    pub l_rows: [[f64; 2]; 4],
    /// Right-hand side `[v_max, omega_max, v_max, omega_max]`.
    pub g: [f64; 4],
    pub vertices: [Vector2<f64>; 4],
}

impl InputPolytope {
    pub fn contains(&self, w: &Vector2<f64>, tol: f64) -> bool {
        self.l_rows
            .iter()
            .zip(self.g.iter())
            .all(|(row, &gi)| row[0] * w[0] + row[1] * w[1] <= gi + tol)
    }
}

/// Build the input polytope at a given internal state.
pub fn constraint_polytope(
    eta: &InternalState,
    p: &CarParams,
) -> Result<InputPolytope, LinearizeError> {
    eta.check(None)?;
    let m_inv = input_matrix_inverse(eta, p)?;
    // T = [-1 0; 0 -1; 1 0; 0 1]
    let l_rows = [
        [-m_inv[(0, 0)], -m_inv[(0, 1)]],
        [-m_inv[(1, 0)], -m_inv[(1, 1)]],
        [m_inv[(0, 0)], m_inv[(0, 1)]],
        [m_inv[(1, 0)], m_inv[(1, 1)]],
    ];
    let g = [p.v_max, p.omega_max, p.v_max, p.omega_max];

    // The parallelogram is the exact image of the velocity box under M, so
    // its vertices are the mapped box corners.
    let m = input_matrix(eta, p)?;
    let v1 = -(m * Vector2::new(p.v_max, p.omega_max));
    let v2 = m * Vector2::new(-p.v_max, p.omega_max);
    Ok(InputPolytope {
        l_rows,
        g,
        vertices: [v1, v2, -v1, -v2],
    })
}

/// Radii of the two inscribed-circle candidates of the parallelogram.
pub fn inscribed_radii(eta2: f64, p: &CarParams) -> Result<(f64, f64), LinearizeError> {
    InternalState::new(0.0, eta2).check(None)?;
    let r1 = p.delta * p.l * p.omega_max
        / (p.delta * p.delta - p.delta * p.delta * eta2.cos().powi(2) + p.l * p.l).sqrt();
    let r2 = p.v_max / eta2.cos();
    Ok((r1, r2))
}

/// Worst-case disc contained in the input polytope for every admissible eta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseDisc {
    pub r_hat: f64,
}

pub fn worst_case_disc(p: &CarParams) -> WorstCaseDisc {
    let r1 = p.delta * p.l * p.omega_max / (p.delta * p.delta + p.l * p.l).sqrt();
    WorstCaseDisc {
        r_hat: r1.min(p.v_max),
    }
}
