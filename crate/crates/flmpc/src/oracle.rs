//! Brute-force reference computations used by the test suites. Everything
//! here is deliberately independent of the solver and geometry code paths it
//! checks: enumeration and small dense solves only.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::linearize::InputPolytope;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    pub objective: f64,
}

/// Globally optimal QP solution by enumerating every candidate active set.
///
/// For each subset of constraint rows (up to size n) the equality-constrained
/// KKT system is solved; primal-feasible candidates are ranked by objective.
/// Exponential in the row count, so callers keep m small.
pub fn enumerate_qp_oracle(
    h: &DMatrix<f64>,
    p: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<OracleSolution> {
    let n = h.nrows();
    let m = a.nrows();
    assert!(m <= 20, "oracle enumeration limited to 2^20 subsets");
    let feas_tol = 1e-7;
    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-p));
        for (j, &i) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = a[(i, c)];
                kkt[(c, n + j)] = a[(i, c)];
            }
            rhs[n + j] = b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let feasible = (0..m).all(|i| a.row(i).dot(&x.transpose()) - b[i] <= feas_tol);
        if !feasible {
            continue;
        }
        let obj = 0.5 * (h * &x).dot(&x) + p.dot(&x);
        if best.as_ref().map_or(true, |bst| obj < bst.objective - 0.0) {
            best = Some(OracleSolution { x, objective: obj });
        }
    }
    best
}

/// Vertices of `{w : L w <= g}` by intersecting every pair of half-plane
/// boundaries and keeping the feasible intersections.
pub fn halfplane_intersection_vertices(poly: &InputPolytope) -> Vec<Vector2<f64>> {
    let mut vertices = vec![];
    for i in 0..4 {
        for j in (i + 1)..4 {
            let (a1, a2) = (poly.l_rows[i], poly.l_rows[j]);
            let det = a1[0] * a2[1] - a1[1] * a2[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (poly.g[i] * a2[1] - a1[1] * poly.g[j]) / det;
            let y = (a1[0] * poly.g[j] - poly.g[i] * a2[0]) / det;
            let v = Vector2::new(x, y);
            if poly.contains(&v, 1e-7) {
                vertices.push(v);
            }
        }
    }
    vertices
}

/// Check that the disc of the given radius is contained in the polytope by
/// sampling directions and also checking exact per-row distances.
pub fn disc_in_polytope(poly: &InputPolytope, radius: f64, directions: usize, tol: f64) -> bool {
    for k in 0..directions {
        let ang = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
        let w = Vector2::new(radius * ang.cos(), radius * ang.sin());
        if !poly.contains(&w, tol) {
            return false;
        }
    }
    // Exact check: distance from origin to each edge must be >= radius.
    poly.l_rows.iter().zip(poly.g.iter()).all(|(row, &gi)| {
        let norm = (row[0] * row[0] + row[1] * row[1]).sqrt();
        norm > 0.0 && gi / norm + tol >= radius
    })
}
