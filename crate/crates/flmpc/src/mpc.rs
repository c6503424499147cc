//! Condensed MPC over the linearized error dynamics: prediction matrices,
//! polygonal inner approximations of the quadratic constraints, per-step QP
//! assembly, and the dual-mode receding-horizon controller.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::linearize::{
    constraint_polytope, input_matrix_inverse, output_transform, InternalState, LinearizeError,
};
use crate::qp::{QpError, QpProblem, QpSolution, QpSolver, WarmStart};
use crate::terminal::{terminal_control, TerminalError, TerminalSet};
use crate::trajectory::ReferenceSample;
use crate::vehicle::{CarInput, CarParams, CarState};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Terminal(#[from] TerminalError),
    #[error("QP infeasible at the first step (no stored sequence to fall back on)")]
    InitialInfeasible,
    #[error("empty reference window")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    DualMode,
    AlwaysQp,
}

/// Controller configuration. `n_w` and `n_n` are the side counts of the
/// polygonal inner approximations of the input disc and the terminal set.
#[derive(Debug, Clone)]
pub struct MpcConfig {
    pub n: usize,
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub n_w: usize,
    pub n_n: usize,
    pub mode: ControlMode,
}

impl MpcConfig {
    /// Reference configuration: N = 10, Q = I, R = 0.01 I, decagon
    /// approximations.
    pub fn qcar(mode: ControlMode) -> Self {
        MpcConfig {
            n: 10,
            q: Matrix2::identity(),
            r: Matrix2::identity() * 0.01,
            n_w: 10,
            n_n: 10,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.n < 1 {
            return Err(MpcError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.n_w < 3 || self.n_n < 3 {
            return Err(MpcError::InvalidConfig(
                "polygon approximations need at least 3 sides".into(),
            ));
        }
        let sym = |m: &Matrix2<f64>| (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12;
        if !sym(&self.q) || !sym(&self.r) {
            return Err(MpcError::InvalidConfig("Q and R must be symmetric".into()));
        }
        let eig_min = |m: &Matrix2<f64>| {
            nalgebra::SymmetricEigen::new(*m)
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b))
        };
        if eig_min(&self.q) < 0.0 {
            return Err(MpcError::InvalidConfig("Q must be PSD".into()));
        }
        if eig_min(&self.r) <= 0.0 {
            return Err(MpcError::InvalidConfig("R must be PD".into()));
        }
        Ok(())
    }
}

/// Static matrices of the condensed program: the prediction maps, the
/// stacked weights, and the factorized Hessian.
pub struct CondensedQp {
    pub n: usize,
    pub params: CarParams,
    pub psi: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub psi_n: Matrix2<f64>,
    pub theta_n: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    pub r_hat: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub solver: QpSolver,
}

/// Build the condensed prediction and cost matrices. For the integrator
/// error model A = I, B = T_s I, so Ψ stacks identity blocks and every
/// nonzero block of Θ equals T_s I.
pub fn build_condensed(cfg: &MpcConfig, p: &CarParams) -> Result<CondensedQp, MpcError> {
    cfg.validate()?;
    p.validate()
        .map_err(|e| MpcError::InvalidConfig(e.to_string()))?;
    let n = cfg.n;
    let dim = 2 * n;
    let mut psi = DMatrix::zeros(dim, 2);
    let mut theta = DMatrix::zeros(dim, dim);
    for i in 0..n {
        psi.view_mut((2 * i, 0), (2, 2))
            .copy_from(&Matrix2::identity());
        for j in 0..=i {
            theta
                .view_mut((2 * i, 2 * j), (2, 2))
                .copy_from(&(Matrix2::identity() * p.ts));
        }
    }
    let psi_n = Matrix2::identity();
    let theta_n = theta.rows(dim - 2, 2).into_owned();
    let mut q_hat = DMatrix::zeros(dim, dim);
    let mut r_hat = DMatrix::zeros(dim, dim);
    for i in 0..n {
        q_hat.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&cfg.q);
        r_hat.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&cfg.r);
    }
    let h = theta.transpose() * &q_hat * &theta + &r_hat;
    // Symmetrize away roundoff before factorizing.
    let h = (&h + h.transpose()) * 0.5;
    let solver = QpSolver::new(&h)?;
    Ok(CondensedQp {
        n,
        params: *p,
        psi,
        theta,
        psi_n,
        theta_n,
        q_hat,
        r_hat,
        h,
        solver,
    })
}

/// Polygonal inner approximations: an n_w-gon of the worst-case input disc
/// and an n_N-gon inscribed in the terminal ellipsoid.
#[derive(Debug, Clone)]
pub struct PolygonApprox {
    pub p_w: DMatrix<f64>,
    pub p_w_rhs: DVector<f64>,
    pub p_zn: DMatrix<f64>,
    pub p_zn_rhs: DVector<f64>,
}

/// Half-plane rows of the regular n-gon whose vertices lie on the circle of
/// radius r, first vertex at angle 0.
fn regular_polygon_rows(n: usize, r: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rows = DMatrix::zeros(n, 2);
    let rhs = DVector::from_element(n, r * (std::f64::consts::PI / n as f64).cos());
    for i in 0..n {
        let a = std::f64::consts::PI * (2 * i + 1) as f64 / n as f64;
        rows[(i, 0)] = a.cos();
        rows[(i, 1)] = a.sin();
    }
    (rows, rhs)
}

pub fn build_polygons(cfg: &MpcConfig, terminal: &TerminalSet, r_hat: f64) -> PolygonApprox {
    let (p_w, p_w_rhs) = regular_polygon_rows(cfg.n_w, r_hat);
    // Unit-disc polygon mapped through G: rows act on G^{-1} z_err.
    let (unit_rows, p_zn_rhs) = regular_polygon_rows(cfg.n_n, 1.0);
    let g_inv = terminal
        .g_factor
        .try_inverse()
        .expect("G is positive definite");
    let mut p_zn = DMatrix::zeros(cfg.n_n, 2);
    for i in 0..cfg.n_n {
        let row = Vector2::new(unit_rows[(i, 0)], unit_rows[(i, 1)]).transpose() * g_inv;
        p_zn[(i, 0)] = row[0];
        p_zn[(i, 1)] = row[1];
    }
    PolygonApprox {
        p_w,
        p_w_rhs,
        p_zn,
        p_zn_rhs,
    }
}

/// Assemble the per-step QP: cost centered on the reference inputs, exact
/// input polytope at the measured internal state for the first step, disc
/// polygon for the remaining steps, terminal polygon in the error output.
pub fn assemble_step_qp(
    cond: &CondensedQp,
    poly: &PolygonApprox,
    z_err: &Vector2<f64>,
    eta: &InternalState,
    w_r_horizon: &[Vector2<f64>],
) -> Result<QpProblem, MpcError> {
    let n = cond.n;
    assert_eq!(w_r_horizon.len(), n, "reference window must cover the horizon");
    let dim = 2 * n;
    let mut w_r = DVector::zeros(dim);
    for (i, w) in w_r_horizon.iter().enumerate() {
        w_r[2 * i] = w[0];
        w_r[2 * i + 1] = w[1];
    }
    let z = DVector::from_vec(vec![z_err[0], z_err[1]]);
    let p_vec = cond.theta.transpose() * &cond.q_hat * &cond.psi * &z - &cond.h * &w_r;

    let input_poly = constraint_polytope(eta, &cond.params)?;
    let n_w = poly.p_w.nrows();
    let n_n = poly.p_zn.nrows();
    let m = 4 + n_w * (n - 1) + n_n;
    let mut a = DMatrix::zeros(m, dim);
    let mut b = DVector::zeros(m);
    for i in 0..4 {
        a[(i, 0)] = input_poly.l_rows[i][0];
        a[(i, 1)] = input_poly.l_rows[i][1];
        b[i] = input_poly.g[i];
    }
    let mut row = 4;
    for i in 1..n {
        a.view_mut((row, 2 * i), (n_w, 2)).copy_from(&poly.p_w);
        b.rows_mut(row, n_w).copy_from(&poly.p_w_rhs);
        row += n_w;
    }
    // Terminal rows on the true predicted error z_err + Θ_N (w - w_r).
    let pth = &poly.p_zn * &cond.theta_n;
    a.view_mut((row, 0), (n_n, dim)).copy_from(&pth);
    let offset = &poly.p_zn * (cond.psi_n * z_err) - &pth * &w_r;
    for i in 0..n_n {
        b[row + i] = poly.p_zn_rhs[i] - offset[i];
    }
    Ok(QpProblem {
        h: cond.h.clone(),
        p: p_vec,
        a_ineq: a,
        b_ineq: b,
        warm: None,
    })
}

/// Per-step controller diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    /// True when the terminal law produced the input.
    pub terminal_mode: bool,
    /// True when the QP was infeasible and the shifted fallback was applied.
    pub fallback: bool,
    pub qp_iterations: usize,
    /// Horizon cost J_N of the applied sequence (0 in terminal mode).
    pub cost: f64,
    pub z_err: Vector2<f64>,
    /// z_err' S z_err against the terminal membership threshold 1.
    pub quad_form: f64,
}

/// Dual-mode receding-horizon controller. One instance per vehicle;
/// `control_step` is sequential because of the internal warm-start state.
pub struct Controller {
    pub cfg: MpcConfig,
    pub cond: CondensedQp,
    pub poly: PolygonApprox,
    pub terminal: TerminalSet,
    prev: Option<QpSolution>,
}

impl Controller {
    pub fn new(
        cfg: MpcConfig,
        params: &CarParams,
        terminal: TerminalSet,
    ) -> Result<Self, MpcError> {
        let cond = build_condensed(&cfg, params)?;
        let r_hat = crate::linearize::worst_case_disc(params).r_hat;
        let poly = build_polygons(&cfg, &terminal, r_hat);
        Ok(Controller {
            cfg,
            cond,
            poly,
            terminal,
            prev: None,
        })
    }

    /// Clear warm-start state (e.g. before a fresh run).
    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Horizon cost J_N of an input sequence by explicit error rollout.
    fn rollout_cost(&self, z_err: &Vector2<f64>, w: &DVector<f64>, w_r: &[Vector2<f64>]) -> f64 {
        let mut z = *z_err;
        let mut cost = 0.0;
        for i in 0..self.cond.n {
            let wi = Vector2::new(w[2 * i], w[2 * i + 1]);
            let wt = wi - w_r[i];
            z += self.cond.params.ts * wt;
            cost += 0.5 * ((self.cfg.q * z).dot(&z) + (self.cfg.r * wt).dot(&wt));
        }
        cost
    }

    /// Shifted fallback sequence: drop the applied block, repeat the tail
    /// with the terminal law on the predicted error, saturate into the
    /// current constraint sets.
    fn fallback_sequence(
        &self,
        z_err: &Vector2<f64>,
        eta: &InternalState,
        w_r: &[Vector2<f64>],
    ) -> Result<DVector<f64>, MpcError> {
        let prev = self.prev.as_ref().ok_or(MpcError::InitialInfeasible)?;
        let n = self.cond.n;
        let ts = self.cond.params.ts;
        let mut seq = DVector::zeros(2 * n);
        for i in 0..n - 1 {
            seq[2 * i] = prev.x[2 * (i + 1)];
            seq[2 * i + 1] = prev.x[2 * (i + 1) + 1];
        }
        // Predicted error at the last step under the shifted sequence.
        let mut z = *z_err;
        for i in 0..n - 1 {
            z += ts * (Vector2::new(seq[2 * i], seq[2 * i + 1]) - w_r[i]);
        }
        let w_last = self.terminal.k * (-z) + w_r[n - 1];
        seq[2 * (n - 1)] = w_last[0];
        seq[2 * (n - 1) + 1] = w_last[1];
        // Saturate: first block into the measured polytope, later blocks
        // into the disc polygon, by radial scaling (both sets contain 0).
        let input_poly = constraint_polytope(eta, &self.cond.params)?;
        let mut scale: f64 = 1.0;
        for i in 0..4 {
            let lw = input_poly.l_rows[i][0] * seq[0] + input_poly.l_rows[i][1] * seq[1];
            if lw > input_poly.g[i] {
                scale = scale.min(input_poly.g[i] / lw);
            }
        }
        seq[0] *= scale;
        seq[1] *= scale;
        for i in 1..n {
            let wi = Vector2::new(seq[2 * i], seq[2 * i + 1]);
            let mut s: f64 = 1.0;
            for r in 0..self.poly.p_w.nrows() {
                let pw = self.poly.p_w[(r, 0)] * wi[0] + self.poly.p_w[(r, 1)] * wi[1];
                if pw > self.poly.p_w_rhs[r] {
                    s = s.min(self.poly.p_w_rhs[r] / pw);
                }
            }
            seq[2 * i] *= s;
            seq[2 * i + 1] *= s;
        }
        Ok(seq)
    }

    /// One receding-horizon step. `refs` is the reference window starting at
    /// the current sample; it is clamped at the trajectory end.
    pub fn control_step(
        &mut self,
        state: &CarState,
        refs: &[ReferenceSample],
    ) -> Result<(CarInput, StepDiagnostics), MpcError> {
        if refs.is_empty() {
            return Err(MpcError::EmptyWindow);
        }
        let p = &self.cond.params;
        let eta = InternalState::from_state(state);
        let z = output_transform(state, p);
        let z_err = z - refs[0].z;
        let quad_form = self.terminal.quadratic_form(&z_err);
        let w_r: Vec<Vector2<f64>> = (0..self.cond.n)
            .map(|i| refs[i.min(refs.len() - 1)].w)
            .collect();

        let (w0, diag) = if self.cfg.mode == ControlMode::DualMode && quad_form <= 1.0 {
            let w = terminal_control(&z_err, &eta, &w_r[0], &self.terminal, p)?;
            self.prev = None;
            (
                w,
                StepDiagnostics {
                    terminal_mode: true,
                    fallback: false,
                    qp_iterations: 0,
                    cost: 0.0,
                    z_err,
                    quad_form,
                },
            )
        } else {
            let mut qp = assemble_step_qp(&self.cond, &self.poly, &z_err, &eta, &w_r)?;
            if let Some(prev) = &self.prev {
                // Shift the previous optimum one block; repeat the tail.
                let n = self.cond.n;
                let mut x = DVector::zeros(2 * n);
                for i in 0..n - 1 {
                    x[2 * i] = prev.x[2 * (i + 1)];
                    x[2 * i + 1] = prev.x[2 * (i + 1) + 1];
                }
                x[2 * (n - 1)] = prev.x[2 * (n - 1)];
                x[2 * (n - 1) + 1] = prev.x[2 * (n - 1) + 1];
                qp.warm = Some(WarmStart { x, active: vec![] });
            }
            match self.cond.solver.solve(&qp.p, &qp.a_ineq, &qp.b_ineq, qp.warm.as_ref()) {
                Ok(sol) => {
                    let w0 = Vector2::new(sol.x[0], sol.x[1]);
                    let cost = self.rollout_cost(&z_err, &sol.x, &w_r);
                    let iters = sol.iterations;
                    self.prev = Some(sol);
                    (
                        w0,
                        StepDiagnostics {
                            terminal_mode: false,
                            fallback: false,
                            qp_iterations: iters,
                            cost,
                            z_err,
                            quad_form,
                        },
                    )
                }
                Err(QpError::Infeasible(_)) => {
                    let seq = self.fallback_sequence(&z_err, &eta, &w_r)?;
                    let w0 = Vector2::new(seq[0], seq[1]);
                    let cost = self.rollout_cost(&z_err, &seq, &w_r);
                    self.prev = Some(QpSolution {
                        x: seq,
                        active_set: vec![],
                        kkt_residual: f64::NAN,
                        iterations: 0,
                    });
                    (
                        w0,
                        StepDiagnostics {
                            terminal_mode: false,
                            fallback: true,
                            qp_iterations: 0,
                            cost,
                            z_err,
                            quad_form,
                        },
                    )
                }
                Err(e) => return Err(e.into()),
            }
        };

        let m_inv = input_matrix_inverse(&eta, p)?;
        let u = m_inv * w0;
        // The recovered input lies in the velocity box up to solver
        // tolerance; clip the residual overshoot.
        let input = CarInput {
            v: u[0].clamp(-p.v_max, p.v_max),
            omega: u[1].clamp(-p.omega_max, p.omega_max),
        };
        Ok((input, diag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{error_step, worst_case_disc};
    use crate::qp;
    use crate::terminal::build_terminal_set;
    use crate::trajectory::FlatSample;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn qcar() -> CarParams {
        CarParams::qcar()
    }

    fn terminal_set(p: &CarParams) -> TerminalSet {
        build_terminal_set(Matrix2::identity() * 4.0, p, 11.54).unwrap()
    }

    fn config(n: usize) -> MpcConfig {
        MpcConfig {
            n,
            ..MpcConfig::qcar(ControlMode::DualMode)
        }
    }

    #[test]
    fn horizon_one_matrices() {
        let p = qcar();
        let cond = build_condensed(&config(1), &p).unwrap();
        assert_abs_diff_eq!(cond.psi[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(cond.theta[(0, 0)], p.ts, epsilon = 0.0);
        let expected = p.ts * p.ts * 1.0 + 0.01;
        assert_abs_diff_eq!(cond.h[(0, 0)], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(cond.h[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn horizon_two_hessian_blocks() {
        let p = qcar();
        let cond = build_condensed(&config(2), &p).unwrap();
        // Ts = 0.01, Q = I, R = 0.01 I.
        assert_abs_diff_eq!(cond.h[(0, 0)], 2.0 * 1e-4 + 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(cond.h[(2, 2)], 1e-4 + 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(cond.h[(0, 2)], 1e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(cond.h[(0, 3)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn prediction_matches_iterated_error_step() {
        let p = qcar();
        let cond = build_condensed(&config(6), &p).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let z0 = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let w: Vec<Vector2<f64>> = (0..6)
                .map(|_| Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let w_r: Vec<Vector2<f64>> = (0..6)
                .map(|_| Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let mut w_stack = DVector::zeros(12);
            let mut wr_stack = DVector::zeros(12);
            for i in 0..6 {
                w_stack[2 * i] = w[i][0];
                w_stack[2 * i + 1] = w[i][1];
                wr_stack[2 * i] = w_r[i][0];
                wr_stack[2 * i + 1] = w_r[i][1];
            }
            let z0_dyn = DVector::from_vec(vec![z0[0], z0[1]]);
            let pred = &cond.psi * &z0_dyn + &cond.theta * (&w_stack - &wr_stack);
            let mut z = z0;
            for i in 0..6 {
                z = error_step(&z, &w[i], &w_r[i], &p);
                assert_abs_diff_eq!(pred[2 * i], z[0], epsilon = 1e-12);
                assert_abs_diff_eq!(pred[2 * i + 1], z[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn polygon_square_and_inradius() {
        let p = qcar();
        let term = terminal_set(&p);
        let mut cfg = config(2);
        cfg.n_w = 4;
        let poly = build_polygons(&cfg, &term, 1.0);
        // Vertices (±1, 0), (0, ±1): each row is satisfied with equality by
        // its two adjacent vertices, inradius sqrt(2)/2.
        for r in 0..4 {
            assert_abs_diff_eq!(poly.p_w_rhs[r], (2.0_f64).sqrt() / 2.0, epsilon = 1e-12);
        }
        for v in [
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(-1.0, 0.0),
            Vector2::new(0.0, -1.0),
        ] {
            let prod = &poly.p_w * v;
            assert!(prod.iter().all(|&x| x <= poly.p_w_rhs[0] + 1e-12));
        }

        let cfg10 = config(2);
        let poly10 = build_polygons(&cfg10, &term, 1.0);
        assert_abs_diff_eq!(
            poly10.p_w_rhs[0],
            (std::f64::consts::PI / 10.0).cos(),
            epsilon = 1e-12
        );
        // Polygon interior stays inside the unit disc.
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..2000 {
            let w = Vector2::new(rng.random_range(-1.1..1.1), rng.random_range(-1.1..1.1));
            let inside = (&poly10.p_w * w)
                .iter()
                .zip(poly10.p_w_rhs.iter())
                .all(|(l, r)| l <= r);
            if inside {
                assert!(w.norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn terminal_polygon_vertices_on_boundary() {
        let p = qcar();
        let term = terminal_set(&p);
        let cfg = config(2);
        let poly = build_polygons(&cfg, &term, 1.0);
        // Vertices of the unit-circle decagon mapped through G satisfy the
        // quadratic form with equality and every polygon row within rhs.
        for i in 0..10 {
            let a = 2.0 * std::f64::consts::PI * i as f64 / 10.0;
            let v = term.g_factor * Vector2::new(a.cos(), a.sin());
            assert_abs_diff_eq!(term.quadratic_form(&v), 1.0, epsilon = 1e-12);
            let prod = &poly.p_zn * v;
            for (l, r) in prod.iter().zip(poly.p_zn_rhs.iter()) {
                assert!(*l <= r + 1e-12);
            }
        }
    }

    #[test]
    fn zero_error_zero_reference_optimum_is_zero() {
        let p = qcar();
        let cond = build_condensed(&config(3), &p).unwrap();
        let term = terminal_set(&p);
        let poly = build_polygons(&config(3), &term, worst_case_disc(&p).r_hat);
        let qp_prob = assemble_step_qp(
            &cond,
            &poly,
            &Vector2::zeros(),
            &InternalState::new(0.0, 0.0),
            &[Vector2::zeros(); 3],
        )
        .unwrap();
        let sol = qp::solve(&qp_prob).unwrap();
        assert!(sol.x.norm() < 1e-10);
    }

    #[test]
    fn perfect_feedforward_recovers_reference() {
        let p = qcar();
        let cond = build_condensed(&config(3), &p).unwrap();
        let term = terminal_set(&p);
        let poly = build_polygons(&config(3), &term, worst_case_disc(&p).r_hat);
        let w_r = Vector2::new(0.3, -0.2); // strictly inside every polygon
        let qp_prob = assemble_step_qp(
            &cond,
            &poly,
            &Vector2::zeros(),
            &InternalState::new(0.4, 0.1),
            &[w_r; 3],
        )
        .unwrap();
        let sol = qp::solve(&qp_prob).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(sol.x[2 * i], w_r[0], epsilon = 1e-9);
            assert_abs_diff_eq!(sol.x[2 * i + 1], w_r[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn qp_objective_matches_rollout_cost() {
        let p = qcar();
        let n = 4;
        let cond = build_condensed(&config(n), &p).unwrap();
        let term = terminal_set(&p);
        let poly = build_polygons(&config(n), &term, worst_case_disc(&p).r_hat);
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..20 {
            let z_err = Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let w_r: Vec<Vector2<f64>> = (0..n)
                .map(|_| Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
                .collect();
            let qp_prob =
                assemble_step_qp(&cond, &poly, &z_err, &InternalState::new(0.2, -0.1), &w_r)
                    .unwrap();
            let sol = qp::solve(&qp_prob).unwrap();
            // Dropped constant of the condensed cost.
            let mut wr_stack = DVector::zeros(2 * n);
            for i in 0..n {
                wr_stack[2 * i] = w_r[i][0];
                wr_stack[2 * i + 1] = w_r[i][1];
            }
            let z_dyn = DVector::from_vec(vec![z_err[0], z_err[1]]);
            let zr = &cond.psi * &z_dyn - &cond.theta * &wr_stack;
            let c = 0.5 * (&zr.transpose() * &cond.q_hat * &zr)[(0, 0)]
                + 0.5 * (&wr_stack.transpose() * &cond.r_hat * &wr_stack)[(0, 0)];
            let obj = 0.5 * (&sol.x.transpose() * &cond.h * &sol.x)[(0, 0)]
                + qp_prob.p.dot(&sol.x)
                + c;
            // Rollout of the same sequence.
            let mut z = z_err;
            let mut rollout = 0.0;
            for i in 0..n {
                let wi = Vector2::new(sol.x[2 * i], sol.x[2 * i + 1]);
                let wt = wi - w_r[i];
                z += p.ts * wt;
                rollout += 0.5 * (z.dot(&z) + 0.01 * wt.dot(&wt));
            }
            assert_abs_diff_eq!(obj, rollout, epsilon = 1e-10);
        }
    }

    fn reference_sample(p: &CarParams, state: CarState, input: CarInput) -> ReferenceSample {
        let (z, w) = crate::trajectory::linearized_reference(&state, &input, p);
        ReferenceSample {
            t: 0.0,
            flat: FlatSample::default(),
            state,
            input,
            z,
            w,
        }
    }

    #[test]
    fn on_reference_start_recovers_reference_input() {
        let p = qcar();
        let term = terminal_set(&p);
        for mode in [ControlMode::DualMode, ControlMode::AlwaysQp] {
            let mut ctrl = Controller::new(
                MpcConfig {
                    n: 5,
                    ..MpcConfig::qcar(mode)
                },
                &p,
                term.clone(),
            )
            .unwrap();
            let state = CarState::new(0.3, -0.2, 0.4, 0.1);
            let input = CarInput::new(0.5, 0.3);
            let refs = vec![reference_sample(&p, state, input); 6];
            let (u, diag) = ctrl.control_step(&state, &refs).unwrap();
            assert_abs_diff_eq!(u.v, input.v, epsilon = 1e-7);
            assert_abs_diff_eq!(u.omega, input.omega, epsilon = 1e-7);
            assert_eq!(diag.terminal_mode, mode == ControlMode::DualMode);
        }
    }

    #[test]
    fn inside_terminal_set_takes_terminal_branch() {
        let p = qcar();
        let term = terminal_set(&p);
        let mut ctrl = Controller::new(config(5), &p, term).unwrap();
        let ref_state = CarState::new(0.0, 0.0, 0.0, 0.0);
        let refs = vec![reference_sample(&p, ref_state, CarInput::new(0.5, 0.0)); 6];
        // 0.2 m offset: quadratic form 16 * 0.04 = 0.64 < 1.
        let state = CarState::new(0.0, 0.2, 0.0, 0.0);
        let (u, diag) = ctrl.control_step(&state, &refs).unwrap();
        assert!(diag.terminal_mode);
        assert!(diag.quad_form <= 1.0);
        assert!(crate::vehicle::is_admissible(&u, &p));
    }

    #[test]
    fn random_feasible_steps_yield_admissible_inputs() {
        let p = qcar();
        let term = terminal_set(&p);
        let mut rng = StdRng::seed_from_u64(77);
        for mode in [ControlMode::DualMode, ControlMode::AlwaysQp] {
            let mut ctrl = Controller::new(
                MpcConfig {
                    n: 4,
                    ..MpcConfig::qcar(mode)
                },
                &p,
                term.clone(),
            )
            .unwrap();
            for _ in 0..300 {
                ctrl.reset();
                let ref_state = CarState::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.3..0.3),
                );
                let input = CarInput::new(rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0));
                let refs = vec![reference_sample(&p, ref_state, input); 5];
                let state = CarState::new(
                    ref_state.x + rng.random_range(-0.05..0.05),
                    ref_state.y + rng.random_range(-0.05..0.05),
                    ref_state.theta + rng.random_range(-0.1..0.1),
                    ref_state.phi + rng.random_range(-0.1..0.1),
                );
                let (u, _) = ctrl.control_step(&state, &refs).unwrap();
                assert!(crate::vehicle::is_admissible(&u, &p), "u = {u:?}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(0).validate().is_err());
        let mut c = config(2);
        c.n_w = 2;
        assert!(c.validate().is_err());
        let mut c = config(2);
        c.r = Matrix2::zeros();
        assert!(c.validate().is_err());
    }
}
