//! Scalar quintic spline interpolation with continuous derivatives through
//! the fourth order. Each segment is a quintic Hermite patch; knot first and
//! second derivatives are free parameters fixed by a global linear system
//! enforcing third- and fourth-derivative continuity at interior knots, with
//! clamped first derivatives and zero second derivatives at the ends.

use nalgebra::{DMatrix, DVector, Matrix6};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("need at least two knots")]
    TooFewKnots,
    #[error("knot times must be strictly increasing (index {0})")]
    NonMonotonicKnots(usize),
    #[error("singular interpolation system")]
    SingularSystem,
}

/// Piecewise quintic with monomial coefficients per segment in the
/// normalized coordinate s = (t - t_i) / h_i.
#[derive(Debug, Clone)]
pub struct QuinticSpline {
    knots: Vec<f64>,
    coeffs: Vec<[f64; 6]>,
}

/// Inverse of the quintic Hermite condition matrix: rows are
/// f(0), f'(0), f''(0), f(1), f'(1), f''(1) applied to monomial coefficients.
fn basis_inverse() -> Matrix6<f64> {
    let mut cond = Matrix6::zeros();
    cond[(0, 0)] = 1.0;
    cond[(1, 1)] = 1.0;
    cond[(2, 2)] = 2.0;
    for k in 0..6 {
        cond[(3, k)] = 1.0;
        cond[(4, k)] = k as f64;
        cond[(5, k)] = (k as f64) * (k as f64 - 1.0);
    }
    cond.try_inverse().expect("hermite conditions are independent")
}

impl QuinticSpline {
    /// Interpolate `values` at `knots` with clamped end slopes `d0`, `dn`.
    pub fn interpolate(
        knots: &[f64],
        values: &[f64],
        d0: f64,
        dn: f64,
    ) -> Result<Self, SplineError> {
        let n1 = knots.len();
        if n1 < 2 || values.len() != n1 {
            return Err(SplineError::TooFewKnots);
        }
        for i in 1..n1 {
            if knots[i] <= knots[i - 1] {
                return Err(SplineError::NonMonotonicKnots(i));
            }
        }
        let n = n1 - 1; // segments
        let binv = basis_inverse();

        // Unknowns: (m_i, k_i) per knot -> 2(n+1).
        let dim = 2 * n1;
        let mut mat = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);

        // Linear form of coefficient c_k of segment i over the four local
        // unknowns (m_i, k_i, m_{i+1}, k_{i+1}) plus a constant from the
        // interpolated positions. data = (P_i, m_i h, k_i h^2, P_j, m_j h, k_j h^2).
        let coeff_form = |i: usize, k: usize| -> ([f64; 4], f64) {
            let h = knots[i + 1] - knots[i];
            let row = binv.row(k);
            (
                [row[1] * h, row[2] * h * h, row[4] * h, row[5] * h * h],
                row[0] * values[i] + row[3] * values[i + 1],
            )
        };
        // q = sum_k alpha_k c_k, scaled by h^-pow; returns the global row.
        let quantity = |i: usize, alphas: &[(usize, f64)], pow: i32| -> ([f64; 4], f64) {
            let h = knots[i + 1] - knots[i];
            let scale = h.powi(-pow);
            let mut lin = [0.0; 4];
            let mut cst = 0.0;
            for &(k, alpha) in alphas {
                let (l, c) = coeff_form(i, k);
                for j in 0..4 {
                    lin[j] += alpha * l[j] * scale;
                }
                cst += alpha * c * scale;
            }
            (lin, cst)
        };

        let mut row = 0;
        let mut add_eq = |mat: &mut DMatrix<f64>,
                          rhs: &mut DVector<f64>,
                          seg_a: usize,
                          qa: ([f64; 4], f64),
                          seg_b: usize,
                          qb: ([f64; 4], f64)| {
            for (j, col_local) in [2 * seg_a, 2 * seg_a + 1, 2 * seg_a + 2, 2 * seg_a + 3]
                .into_iter()
                .enumerate()
            {
                mat[(row, col_local)] += qa.0[j];
            }
            for (j, col_local) in [2 * seg_b, 2 * seg_b + 1, 2 * seg_b + 2, 2 * seg_b + 3]
                .into_iter()
                .enumerate()
            {
                mat[(row, col_local)] -= qb.0[j];
            }
            rhs[row] = qb.1 - qa.1;
            row += 1;
        };

        // f'''(1^-) of segment i-1 equals f'''(0^+) of segment i; same for f''''.
        let third_end = [(3usize, 6.0), (4, 24.0), (5, 60.0)];
        let third_start = [(3usize, 6.0)];
        let fourth_end = [(4usize, 24.0), (5, 120.0)];
        let fourth_start = [(4usize, 24.0)];
        for i in 1..n {
            add_eq(
                &mut mat,
                &mut rhs,
                i - 1,
                quantity(i - 1, &third_end, 3),
                i,
                quantity(i, &third_start, 3),
            );
            add_eq(
                &mut mat,
                &mut rhs,
                i - 1,
                quantity(i - 1, &fourth_end, 4),
                i,
                quantity(i, &fourth_start, 4),
            );
        }
        // Boundary: clamp the end slopes, natural second derivatives.
        mat[(row, 0)] = 1.0;
        rhs[row] = d0;
        row += 1;
        mat[(row, 1)] = 1.0;
        rhs[row] = 0.0;
        row += 1;
        mat[(row, 2 * n)] = 1.0;
        rhs[row] = dn;
        row += 1;
        mat[(row, 2 * n + 1)] = 1.0;
        rhs[row] = 0.0;
        row += 1;
        debug_assert_eq!(row, dim);

        let sol = mat.lu().solve(&rhs).ok_or(SplineError::SingularSystem)?;

        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            let h = knots[i + 1] - knots[i];
            let data = [
                values[i],
                sol[2 * i] * h,
                sol[2 * i + 1] * h * h,
                values[i + 1],
                sol[2 * i + 2] * h,
                sol[2 * i + 3] * h * h,
            ];
            let mut c = [0.0; 6];
            for k in 0..6 {
                for (j, d) in data.iter().enumerate() {
                    c[k] += binv[(k, j)] * d;
                }
            }
            coeffs.push(c);
        }
        Ok(QuinticSpline {
            knots: knots.to_vec(),
            coeffs,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.coeffs.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.coeffs.len() - 1),
        }
    }

    /// Value and first three derivatives at t.
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let s = (t - self.knots[i]) / h;
        let c = &self.coeffs[i];
        let mut out = [0.0; 4];
        for k in (0..6).rev() {
            out[0] = out[0] * s + c[k];
        }
        for k in (1..6).rev() {
            out[1] = out[1] * s + c[k] * k as f64;
        }
        for k in (2..6).rev() {
            out[2] = out[2] * s + c[k] * (k * (k - 1)) as f64;
        }
        for k in (3..6).rev() {
            out[3] = out[3] * s + c[k] * (k * (k - 1) * (k - 2)) as f64;
        }
        out[1] /= h;
        out[2] /= h * h;
        out[3] /= h * h * h;
        out
    }
}
