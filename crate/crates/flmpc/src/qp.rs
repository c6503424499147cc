//! Dense primal active-set solver for strictly convex QPs with linear
//! inequality constraints,
//!
//! ```text
//!     minimize    1/2 x' H x + p' x
//!     subject to  A x <= b
//! ```
//!
//! The Cholesky factor of H is computed once per solver instance and reused
//! across solves, which matches how the MPC keeps its Hessian constant over
//! a run. Steps are computed in range space from the factored Hessian.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-9;
pub const KKT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("hessian is not symmetric within 1e-10")]
    NotSymmetric,
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("problem is infeasible (min residual {0:.3e})")]
    Infeasible(f64),
    #[error("active-set iteration limit reached")]
    MaxIterations,
    #[error("dimension mismatch between problem blocks")]
    DimensionMismatch,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub p: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub warm: Option<WarmStart>,
}

#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub active_set: Vec<usize>,
    /// Stationarity residual norm at the returned point.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Factored solver handle; reuse across calls that share the same H.
pub struct QpSolver {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl QpSolver {
    pub fn new(h: &DMatrix<f64>) -> Result<Self, QpError> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(QpError::DimensionMismatch);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 {
                    return Err(QpError::NotSymmetric);
                }
            }
        }
        let chol = Cholesky::new(h.clone()).ok_or(QpError::NotPositiveDefinite)?;
        Ok(QpSolver { chol, n })
    }

    pub fn solve(
        &self,
        p: &DVector<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        warm: Option<&WarmStart>,
    ) -> Result<QpSolution, QpError> {
        if p.len() != self.n || a.ncols() != self.n && a.nrows() > 0 || a.nrows() != b.len() {
            return Err(QpError::DimensionMismatch);
        }
        let m = a.nrows();
        let x_free = -self.chol.solve(p);
        if m == 0 {
            return Ok(QpSolution {
                x: x_free,
                active_set: vec![],
                kkt_residual: 0.0,
                iterations: 0,
            });
        }

        // Starting point: warm start, unconstrained optimum, or phase-1.
        let (x0, w0) = if let Some(ws) = warm.filter(|ws| feasible(a, b, &ws.x, FEAS_TOL)) {
            let active = ws
                .active
                .iter()
                .copied()
                .filter(|&i| i < m && (a.row(i).dot(&ws.x.transpose()) - b[i]).abs() < 1e-7)
                .collect();
            (ws.x.clone(), independent_subset(a, &active))
        } else if feasible(a, b, &x_free, FEAS_TOL) {
            (x_free, vec![])
        } else {
            (self.phase1(a, b)?, vec![])
        };
        let w0 = if feasible(a, b, &x0, FEAS_TOL) {
            w0
        } else {
            return Err(QpError::Infeasible(max_violation(a, b, &x0)));
        };

        self.active_set_loop(p, a, b, x0, w0)
    }

    fn active_set_loop(
        &self,
        p: &DVector<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        mut x: DVector<f64>,
        mut working: Vec<usize>,
    ) -> Result<QpSolution, QpError> {
        let m = a.nrows();
        for iter in 1..=MAX_ITERATIONS {
            let g = self.chol.l() * (self.chol.l().transpose() * &x) + p;
            let (d, lambda) = self.eqp_step(&g, a, &working)?;

            if d.norm() <= 1e-11 * (1.0 + x.norm()) {
                // Stationary on the working set: check multiplier signs.
                let (min_lambda, min_idx) = lambda
                    .iter()
                    .enumerate()
                    .fold((f64::INFINITY, usize::MAX), |acc, (j, &l)| {
                        if l < acc.0 {
                            (l, j)
                        } else {
                            acc
                        }
                    });
                if working.is_empty() || min_lambda >= -1e-10 {
                    let mut resid = g.clone();
                    for (j, &i) in working.iter().enumerate() {
                        resid += a.row(i).transpose() * lambda[j];
                    }
                    return Ok(QpSolution {
                        x,
                        active_set: working,
                        kkt_residual: resid.norm(),
                        iterations: iter,
                    });
                }
                working.remove(min_idx);
                continue;
            }

            // Ratio test against constraints outside the working set;
            // blocking ties broken by smallest row index.
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let ad = a.row(i).dot(&d.transpose());
                if ad > 1e-12 {
                    let t = ((b[i] - a.row(i).dot(&x.transpose())) / ad).max(0.0);
                    if t < alpha - 1e-12 {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            x += alpha * &d;
            if let Some(i) = blocking {
                if row_independent(a, &working, i) {
                    working.push(i);
                } else if alpha <= 1e-14 {
                    // Dependent blocking row at zero step: no progress possible.
                    return Err(QpError::MaxIterations);
                }
            }
        }
        Err(QpError::MaxIterations)
    }

    /// Equality-constrained step on the current working set:
    /// minimize the quadratic model subject to A_W d = 0.
    fn eqp_step(
        &self,
        g: &DVector<f64>,
        a: &DMatrix<f64>,
        working: &[usize],
    ) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let hinv_g = self.chol.solve(g);
        if working.is_empty() {
            return Ok((-hinv_g, DVector::zeros(0)));
        }
        let k = working.len();
        let mut a_w = DMatrix::zeros(k, self.n);
        for (j, &i) in working.iter().enumerate() {
            a_w.row_mut(j).copy_from(&a.row(i));
        }
        let y = self.chol.solve(&a_w.transpose());
        let s = &a_w * &y;
        let s_chol = Cholesky::new(s).ok_or(QpError::MaxIterations)?;
        let lambda = s_chol.solve(&(-(&a_w * &hinv_g)));
        let mut d = -hinv_g - &y * &lambda;
        let mut lambda = lambda;
        // One pass of iterative refinement on the KKT system; the range-space
        // solve loses digits when H is badly scaled (phase-1 regularization).
        let h_d = self.chol.l() * (self.chol.l().transpose() * &d);
        let r1 = -(g + h_d + a_w.transpose() * &lambda);
        let r2 = -(&a_w * &d);
        let hinv_r1 = self.chol.solve(&r1);
        let dl = s_chol.solve(&(&a_w * &hinv_r1 - r2));
        d += hinv_r1 - &y * &dl;
        lambda += dl;
        Ok((d, lambda))
    }

    /// Phase-1 feasibility subproblem: slack variables absorb constraint
    /// violations, the slack norm is minimized, and the result is pulled
    /// exactly onto the violated boundaries.
    fn phase1(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, QpError> {
        let n = self.n;
        let m = a.nrows();
        let eps = 1e-4;
        let mut h_ext = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            h_ext[(i, i)] = eps;
        }
        for i in 0..m {
            h_ext[(n + i, n + i)] = 1.0;
        }
        // [A -I; 0 -I] [x; s] <= [b; 0]
        let mut a_ext = DMatrix::zeros(2 * m, n + m);
        let mut b_ext = DVector::zeros(2 * m);
        for i in 0..m {
            for j in 0..n {
                a_ext[(i, j)] = a[(i, j)];
            }
            a_ext[(i, n + i)] = -1.0;
            b_ext[i] = b[i];
            a_ext[(m + i, n + i)] = -1.0;
        }
        let mut x0 = DVector::zeros(n + m);
        for i in 0..m {
            x0[n + i] = (-b[i]).max(0.0);
        }
        let solver = QpSolver {
            chol: Cholesky::new(h_ext).ok_or(QpError::NotPositiveDefinite)?,
            n: n + m,
        };
        let sol = solver.active_set_loop(
            &DVector::zeros(n + m),
            &a_ext,
            &b_ext,
            x0,
            vec![],
        )?;
        let mut x = sol.x.rows(0, n).into_owned();

        // Pull residual violations exactly onto their boundaries.
        for _ in 0..8 {
            let violated: Vec<usize> = (0..m)
                .filter(|&i| a.row(i).dot(&x.transpose()) - b[i] > 0.0)
                .collect();
            if violated.is_empty() {
                return Ok(x);
            }
            let k = violated.len();
            let mut a_v = DMatrix::zeros(k, n);
            let mut r = DVector::zeros(k);
            for (j, &i) in violated.iter().enumerate() {
                a_v.row_mut(j).copy_from(&a.row(i));
                r[j] = b[i] - a.row(i).dot(&x.transpose());
            }
            let gram = &a_v * a_v.transpose();
            match Cholesky::new(gram) {
                Some(c) => x += a_v.transpose() * c.solve(&r),
                None => break,
            }
        }
        if feasible(a, b, &x, FEAS_TOL) {
            Ok(x)
        } else {
            Err(QpError::Infeasible(max_violation(a, b, &x)))
        }
    }
}

/// One-shot convenience entry point.
pub fn solve(qp: &QpProblem) -> Result<QpSolution, QpError> {
    QpSolver::new(&qp.h)?.solve(&qp.p, &qp.a_ineq, &qp.b_ineq, qp.warm.as_ref())
}

fn feasible(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, tol: f64) -> bool {
    max_violation(a, b, x) <= tol
}

fn max_violation(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).dot(&x.transpose()) - b[i])
        .fold(0.0f64, f64::max)
}

fn row_independent(a: &DMatrix<f64>, working: &[usize], candidate: usize) -> bool {
    if working.is_empty() {
        return a.row(candidate).norm() > 1e-14;
    }
    if working.len() >= a.ncols() {
        return false;
    }
    let k = working.len();
    let mut a_w = DMatrix::zeros(k, a.ncols());
    for (j, &i) in working.iter().enumerate() {
        a_w.row_mut(j).copy_from(&a.row(i));
    }
    let gram = &a_w * a_w.transpose();
    let Some(chol) = Cholesky::new(gram) else {
        return false;
    };
    let c = a.row(candidate).transpose();
    let t = chol.solve(&(&a_w * &c));
    let resid = &c - a_w.transpose() * t;
    resid.norm() > 1e-10 * c.norm().max(1.0)
}

fn independent_subset(a: &DMatrix<f64>, rows: &Vec<usize>) -> Vec<usize> {
    let mut keep: Vec<usize> = vec![];
    for &i in rows {
        if keep.len() < a.ncols() && row_independent(a, &keep, i) {
            keep.push(i);
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_qp_oracle;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn objective(h: &DMatrix<f64>, p: &DVector<f64>, x: &DVector<f64>) -> f64 {
        0.5 * (h * x).dot(x) + p.dot(x)
    }

    #[test]
    fn unconstrained_minimum() {
        let qp = QpProblem {
            h: DMatrix::identity(2, 2),
            p: DVector::from_vec(vec![-1.0, -1.0]),
            a_ineq: DMatrix::zeros(0, 2),
            b_ineq: DVector::zeros(0),
            warm: None,
        };
        let sol = solve(&qp).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn halfspace_projection() {
        // min 1/2 |x|^2  s.t. x1 >= 1
        let qp = QpProblem {
            h: DMatrix::identity(2, 2),
            p: DVector::zeros(2),
            a_ineq: DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            b_ineq: DVector::from_vec(vec![-1.0]),
            warm: None,
        };
        let sol = solve(&qp).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-9);
        assert!(sol.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn detects_infeasibility() {
        // x <= -1 and -x <= 0 cannot both hold.
        let qp = QpProblem {
            h: DMatrix::identity(1, 1),
            p: DVector::zeros(1),
            a_ineq: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            b_ineq: DVector::from_vec(vec![-1.0, 0.0]),
            warm: None,
        };
        assert!(matches!(solve(&qp), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let qp = QpProblem {
            h: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            p: DVector::zeros(2),
            a_ineq: DMatrix::zeros(0, 2),
            b_ineq: DVector::zeros(0),
            warm: None,
        };
        assert_eq!(solve(&qp).unwrap_err(), QpError::NotSymmetric);
    }

    #[test]
    fn warm_start_resolves_quickly() {
        let qp = QpProblem {
            h: DMatrix::identity(2, 2),
            p: DVector::from_vec(vec![-3.0, 0.0]),
            a_ineq: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b_ineq: DVector::from_vec(vec![1.0]),
            warm: None,
        };
        let sol = solve(&qp).unwrap();
        let warm = WarmStart {
            x: sol.x.clone(),
            active: sol.active_set.clone(),
        };
        let solver = QpSolver::new(&qp.h).unwrap();
        let resolved = solver
            .solve(&qp.p, &qp.a_ineq, &qp.b_ineq, Some(&warm))
            .unwrap();
        assert!(resolved.iterations <= 2);
        assert_abs_diff_eq!(resolved.x[0], sol.x[0], epsilon = 1e-12);
    }

    /// Random feasible strictly convex QPs against the enumeration oracle.
    #[test]
    fn random_qps_match_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(0..=10);
            let (h, p, a, b) = random_feasible_qp(&mut rng, n, m);
            let sol = solve(&QpProblem {
                h: h.clone(),
                p: p.clone(),
                a_ineq: a.clone(),
                b_ineq: b.clone(),
                warm: None,
            })
            .unwrap();
            let oracle = enumerate_qp_oracle(&h, &p, &a, &b).expect("oracle found a point");
            assert!(
                (objective(&h, &p, &sol.x) - oracle.objective).abs() <= 1e-8,
                "objective mismatch: {} vs {}",
                objective(&h, &p, &sol.x),
                oracle.objective
            );
            assert!(sol.kkt_residual <= KKT_TOL);
        }
    }

    pub(crate) fn random_feasible_qp(
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
    ) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &f * f.transpose() + DMatrix::identity(n, n) * 0.5;
        let p = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let x_feas = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x_feas + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.5));
        (h, p, a, b)
    }
}
