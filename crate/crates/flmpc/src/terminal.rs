//! Terminal ellipsoid construction, the disturbance-robust invariance
//! certificate, and the terminal feedback law with its small projection QP.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::linearize::{constraint_polytope, worst_case_disc, InternalState, LinearizeError};
use crate::qp::{QpError, QpSolver, WarmStart};
use crate::vehicle::CarParams;

pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TerminalError {
    #[error("gain matrix K is not invertible")]
    SingularGain,
    #[error("certificate eigenvalues are not repeated: {0} vs {1}")]
    EigenvalueNotRepeated(f64, f64),
    #[error("xi = {0} outside (0, 1); lambda undefined")]
    InvalidXi(f64),
    #[error("tracking error is outside the terminal set (form = {0})")]
    OutsideTerminalSet(f64),
    #[error("terminal projection QP failed: {0}")]
    Qp(#[from] QpError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
}

/// Terminal ellipsoid `{z_err : z_err' S z_err <= 1}` together with the gain
/// and the scalars of its invariance certificate.
#[derive(Debug, Clone)]
pub struct TerminalSet {
    pub s: Matrix2<f64>,
    pub k: Matrix2<f64>,
    pub r_d: f64,
    pub lambda: f64,
    pub xi: f64,
    /// Ellipsoid factor with G' S G = I (G = S^{-1/2}); maps the unit disc
    /// onto the terminal set.
    pub g_factor: Matrix2<f64>,
}

impl TerminalSet {
    pub fn quadratic_form(&self, z_err: &Vector2<f64>) -> f64 {
        (self.s * z_err).dot(z_err)
    }

    pub fn contains(&self, z_err: &Vector2<f64>) -> bool {
        self.quadratic_form(z_err) <= 1.0 + MEMBERSHIP_TOL
    }
}

/// Inverse square root of a symmetric positive-definite 2x2 matrix.
fn spd_inv_sqrt(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let eig = nalgebra::SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Build the terminal set for a given gain and disturbance radius.
pub fn build_terminal_set(
    k: Matrix2<f64>,
    p: &CarParams,
    r_d: f64,
) -> Result<TerminalSet, TerminalError> {
    if k.determinant().abs() < 1e-12 {
        return Err(TerminalError::SingularGain);
    }
    let r_hat = worst_case_disc(p).r_hat;
    let s = k.transpose() * k / (r_hat * r_hat);
    let g = spd_inv_sqrt(&s).ok_or(TerminalError::SingularGain)?;
    // xi: repeated eigenvalue of G' B' W_r^{-1} B G = (Ts^2 / r_d^2) G' G.
    let m = g.transpose() * g * (p.ts * p.ts / (r_d * r_d));
    let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
    let (e0, e1) = (eig[0], eig[1]);
    if (e0 - e1).abs() > 1e-9 * e0.abs().max(e1.abs()) {
        return Err(TerminalError::EigenvalueNotRepeated(e0, e1));
    }
    let xi = 0.5 * (e0 + e1);
    if !(0.0..1.0).contains(&xi) || xi == 0.0 {
        return Err(TerminalError::InvalidXi(xi));
    }
    let lambda = 1.0 - xi.sqrt();
    Ok(TerminalSet {
        s,
        k,
        r_d,
        lambda,
        xi,
        g_factor: g,
    })
}

/// Closed-loop matrix `A - BK` for the integrator error dynamics.
pub fn closed_loop_matrix(k: &Matrix2<f64>, p: &CarParams) -> Matrix2<f64> {
    Matrix2::identity() - p.ts * k
}

/// Result of evaluating the invariance certificate inequality.
#[derive(Debug, Clone, Copy)]
pub struct RpiCheck {
    pub holds: bool,
    /// Smallest eigenvalue of the certificate slack matrix.
    pub margin: f64,
}

/// Evaluate `S^{-1} - lambda^{-1} A_cl' S^{-1} A_cl - (1-lambda)^{-1} B' W_r^{-1} B`
/// and report positive semidefiniteness with its margin.
pub fn check_rpi(ts: &TerminalSet, p: &CarParams) -> RpiCheck {
    let s_inv = ts.s.try_inverse().expect("S is positive definite");
    let a_cl = closed_loop_matrix(&ts.k, p);
    let b_wr_b = Matrix2::identity() * (p.ts * p.ts / (ts.r_d * ts.r_d));
    let slack = s_inv
        - a_cl.transpose() * s_inv * a_cl / ts.lambda
        - b_wr_b / (1.0 - ts.lambda);
    let margin = nalgebra::SymmetricEigen::new(slack)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    RpiCheck {
        holds: margin >= 0.0,
        margin,
    }
}

/// Terminal feedback law `w = -K z_err + w_hat` (the stabilizing sign that
/// yields the closed loop `A - BK`), where `w_hat` is the projection of the
/// reference input onto the inputs that keep the combined command inside the
/// state-dependent polytope.
pub fn terminal_control(
    z_err: &Vector2<f64>,
    eta: &InternalState,
    w_r: &Vector2<f64>,
    ts: &TerminalSet,
    p: &CarParams,
) -> Result<Vector2<f64>, TerminalError> {
    let form = ts.quadratic_form(z_err);
    if form > 1.0 + MEMBERSHIP_TOL {
        return Err(TerminalError::OutsideTerminalSet(form));
    }
    let k_z = -(ts.k * z_err);
    let poly = constraint_polytope(eta, p)?;
    let mut a = DMatrix::zeros(4, 2);
    let mut b = DVector::zeros(4);
    for i in 0..4 {
        a[(i, 0)] = poly.l_rows[i][0];
        a[(i, 1)] = poly.l_rows[i][1];
        b[i] = poly.g[i] - (poly.l_rows[i][0] * k_z[0] + poly.l_rows[i][1] * k_z[1]);
    }
    // w_hat = K z_err is always feasible (it maps the command to zero), so
    // an infeasible projection signals a broken invariant upstream.
    let warm = WarmStart {
        x: DVector::from_vec(vec![-k_z[0], -k_z[1]]),
        active: vec![],
    };
    let solver = QpSolver::new(&DMatrix::identity(2, 2))?;
    let sol = solver.solve(
        &DVector::from_vec(vec![-w_r[0], -w_r[1]]),
        &a,
        &b,
        Some(&warm),
    )?;
    let w_hat = Vector2::new(sol.x[0], sol.x[1]);
    Ok(k_z + w_hat)
}

/// Convenience scan for a scalar gain `K = k I` with a positive certificate
/// margin; not part of the design procedure, just a helper for new plants.
pub fn search_scalar_gain(p: &CarParams, r_d: f64, samples: usize) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    // Certified gains live well below the deadbeat limit 2/Ts; scan a
    // logarithmic grid from 1e-3 of the limit upward.
    let k_max = 2.0 / p.ts;
    for i in 0..samples {
        let k = k_max * 1e-3_f64.powf(1.0 - i as f64 / (samples.max(2) - 1) as f64);
        let Ok(ts) = build_terminal_set(Matrix2::identity() * k, p, r_d) else {
            continue;
        };
        let check = check_rpi(&ts, p);
        if check.holds && best.map_or(true, |(_, m)| check.margin > m) {
            best = Some((k, check.margin));
        }
    }
    best
}
