//! Dense dual active-set solver for small quadratic programs with a
//! positive diagonal weight:
//!
//! ```text
//!     minimize    (x - c)' P (x - c)
//!     subject to  G x  = g
//!                 A x <= b
//! ```
//!
//! The substitution `y = P^{1/2} (x - c)` turns the problem into projecting
//! the origin onto a polyhedron. Starting from the equality-constrained
//! minimizer, the most violated inequality is added at each step while
//! keeping the multipliers of the active inequalities nonnegative, dropping
//! constraints whose multiplier would turn negative (Goldfarb-Idnani). The
//! active-set factorization is recomputed from scratch at every step; the
//! problems handled here have a few dozen variables.

use nalgebra::{DMatrix, DVector};

use super::WeightMatrix;
use crate::error::{Error, Result};

/// Columns whose component orthogonal to the active normals is shorter than
/// this are treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Feasibility tolerance on row-normalized constraints in the weighted
    /// metric, scaled by `1 + |rhs|`.
    pub feasibility_tol: f64,
    /// Maximum number of add/drop steps; `0` selects a size-based default.
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { feasibility_tol: 1e-11, max_iterations: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Indices of inequality rows active at the solution.
    pub active: Vec<usize>,
    /// Multipliers of the equality rows for the objective `(x-c)'P(x-c)`.
    pub eq_multipliers: Vec<f64>,
    /// Multipliers of all inequality rows (zero when inactive).
    pub ineq_multipliers: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Eq(usize),
    Ineq(usize),
}

struct Transformed {
    normals: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    scale: Vec<f64>,
}

fn transform(matrix: &DMatrix<f64>, rhs: &[f64], inv_sqrt: &[f64], center: &[f64]) -> Transformed {
    let mut normals = Vec::with_capacity(matrix.nrows());
    let mut out_rhs = Vec::with_capacity(matrix.nrows());
    let mut scale = Vec::with_capacity(matrix.nrows());
    for (i, row) in matrix.row_iter().enumerate() {
        let n = DVector::from_iterator(inv_sqrt.len(), row.iter().zip(inv_sqrt).map(|(a, s)| a * s));
        let shift: f64 = row.iter().zip(center).map(|(a, c)| a * c).sum();
        let norm = n.norm();
        if norm > 0.0 {
            normals.push(n / norm);
            out_rhs.push((rhs[i] - shift) / norm);
        } else {
            normals.push(n);
            out_rhs.push(rhs[i] - shift);
        }
        scale.push(norm);
    }
    Transformed { normals, rhs: out_rhs, scale }
}

/// Orthogonal factorization of the active normals.
struct ActiveFactor {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl ActiveFactor {
    fn new(columns: &[&DVector<f64>], dim: usize) -> Option<Self> {
        if columns.is_empty() {
            return None;
        }
        let n = DMatrix::from_columns(&columns.iter().map(|c| (*c).clone()).collect::<Vec<_>>());
        debug_assert_eq!(n.nrows(), dim);
        let qr = n.qr();
        Some(Self { q: qr.q(), r: qr.r() })
    }

    /// Coefficients of `v` in the active normals and the residual orthogonal
    /// to their span.
    fn split(&self, v: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let proj = self.q.transpose() * v;
        let coeffs = self.r.solve_upper_triangular(&proj)?;
        let resid = v - &self.q * proj;
        Some((coeffs, resid))
    }
}

/// Solves the weighted projection problem described in the module docs.
pub fn solve_qp_active_set(
    weights: &WeightMatrix,
    g_eq: &DMatrix<f64>,
    c_eq: &[f64],
    a_ineq: &DMatrix<f64>,
    b_ineq: &[f64],
    center: &[f64],
) -> Result<QpSolution> {
    solve_qp_with(weights, g_eq, c_eq, a_ineq, b_ineq, center, QpOptions::default())
}

pub fn solve_qp_with(
    weights: &WeightMatrix,
    g_eq: &DMatrix<f64>,
    c_eq: &[f64],
    a_ineq: &DMatrix<f64>,
    b_ineq: &[f64],
    center: &[f64],
    opts: QpOptions,
) -> Result<QpSolution> {
    let dim = weights.len();
    if center.len() != dim
        || (g_eq.nrows() > 0 && g_eq.ncols() != dim)
        || (a_ineq.nrows() > 0 && a_ineq.ncols() != dim)
        || g_eq.nrows() != c_eq.len()
        || a_ineq.nrows() != b_ineq.len()
    {
        return Err(Error::Input("quadratic program dimensions are inconsistent".into()));
    }
    let inv_sqrt: Vec<f64> = weights.diag().iter().map(|w| 1.0 / w.sqrt()).collect();
    let eq = transform(g_eq, c_eq, &inv_sqrt, center);
    let ineq = transform(a_ineq, b_ineq, &inv_sqrt, center);

    for (i, s) in ineq.scale.iter().enumerate() {
        if *s == 0.0 && ineq.rhs[i] < -opts.feasibility_tol {
            return Err(Error::Infeasible { row: i });
        }
    }

    let max_iter = if opts.max_iterations == 0 {
        50 * (dim + a_ineq.nrows()) + 1000
    } else {
        opts.max_iterations
    };

    let column = |row: Row| -> &DVector<f64> {
        match row {
            Row::Eq(i) => &eq.normals[i],
            Row::Ineq(i) => &ineq.normals[i],
        }
    };

    // Equality-constrained start.
    let mut active: Vec<Row> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut y = DVector::<f64>::zeros(dim);
    for i in 0..eq.normals.len() {
        if eq.scale[i] == 0.0 {
            return Err(Error::RedundantConstraint { row: i });
        }
        active.push(Row::Eq(i));
    }
    if active.len() > dim {
        return Err(Error::RedundantConstraint { row: dim });
    }
    if !active.is_empty() {
        let cols: Vec<&DVector<f64>> = active.iter().map(|r| column(*r)).collect();
        let f = ActiveFactor::new(&cols, dim).expect("nonempty");
        for (i, v) in f.r.diagonal().iter().enumerate() {
            if v.abs() < DEPENDENCE_TOL {
                return Err(Error::RedundantConstraint { row: i });
            }
        }
        let rhs = DVector::from_iterator(eq.rhs.len(), eq.rhs.iter().copied());
        let u = f
            .r
            .transpose()
            .solve_lower_triangular(&rhs)
            .ok_or(Error::RedundantConstraint { row: 0 })?;
        y = &f.q * u;
        let (coeffs, _) = f.split(&y).ok_or(Error::RedundantConstraint { row: 0 })?;
        mult = coeffs.iter().map(|c| -c).collect();
    }

    let mut in_active = vec![false; ineq.normals.len()];
    let mut iterations = 0usize;
    loop {
        // Most violated inactive inequality.
        let mut worst: Option<(usize, f64)> = None;
        for (i, n) in ineq.normals.iter().enumerate() {
            if in_active[i] || ineq.scale[i] == 0.0 {
                continue;
            }
            let slack = n.dot(&y) - ineq.rhs[i];
            let tol = opts.feasibility_tol * (1.0 + ineq.rhs[i].abs());
            if slack > tol && worst.is_none_or(|(_, s)| slack > s) {
                worst = Some((i, slack));
            }
        }
        let Some((p, _)) = worst else { break };
        let np = ineq.normals[p].clone();
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::IterationLimit(max_iter));
            }
            let cols: Vec<&DVector<f64>> = active.iter().map(|r| column(*r)).collect();
            let (r_dir, z) = match ActiveFactor::new(&cols, dim) {
                Some(f) => f.split(&np).ok_or(Error::IterationLimit(iterations))?,
                None => (DVector::zeros(0), np.clone()),
            };

            // Longest dual step keeping active inequality multipliers >= 0.
            let mut t_dual = f64::INFINITY;
            let mut drop_at = None;
            for (k, row) in active.iter().enumerate() {
                if let Row::Ineq(_) = row {
                    if r_dir[k] > 1e-14 {
                        let t = mult[k] / r_dir[k];
                        if t < t_dual {
                            t_dual = t;
                            drop_at = Some(k);
                        }
                    }
                }
            }
            let zz = z.norm_squared();
            let t_primal = if zz.sqrt() > DEPENDENCE_TOL {
                (np.dot(&y) - ineq.rhs[p]) / zz
            } else {
                f64::INFINITY
            };
            if t_dual.is_infinite() && t_primal.is_infinite() {
                return Err(Error::Infeasible { row: p });
            }

            let t = t_dual.min(t_primal);
            if t_primal.is_finite() {
                y -= &z * t;
            }
            for (m, r) in mult.iter_mut().zip(r_dir.iter()) {
                *m -= t * r;
            }
            u_p += t;

            if t_primal <= t_dual {
                active.push(Row::Ineq(p));
                mult.push(u_p);
                in_active[p] = true;
                break;
            }
            let k = drop_at.expect("finite dual step has a blocking row");
            if let Row::Ineq(j) = active[k] {
                in_active[j] = false;
            }
            active.remove(k);
            mult.remove(k);
        }
    }

    // Re-solve the final working set exactly.
    if !active.is_empty() {
        let cols: Vec<&DVector<f64>> = active.iter().map(|r| column(*r)).collect();
        let f = ActiveFactor::new(&cols, dim).expect("nonempty");
        let rhs = DVector::from_iterator(
            active.len(),
            active.iter().map(|r| match r {
                Row::Eq(i) => eq.rhs[*i],
                Row::Ineq(i) => ineq.rhs[*i],
            }),
        );
        if let Some(u) = f.r.transpose().solve_lower_triangular(&rhs) {
            let polished = &f.q * u;
            if polished.iter().all(|v| v.is_finite()) {
                y = polished;
                if let Some((coeffs, _)) = f.split(&y) {
                    mult = coeffs.iter().map(|c| -c).collect();
                }
            }
        }
    }

    let x: Vec<f64> = center.iter().zip(&inv_sqrt).zip(y.iter()).map(|((c, s), y)| c + s * y).collect();
    let mut eq_multipliers = vec![0.0; eq.normals.len()];
    let mut ineq_multipliers = vec![0.0; ineq.normals.len()];
    let mut active_rows = Vec::new();
    for (row, u) in active.iter().zip(&mult) {
        match *row {
            Row::Eq(i) => eq_multipliers[i] = 2.0 * u / eq.scale[i],
            Row::Ineq(i) => {
                ineq_multipliers[i] = (2.0 * u / ineq.scale[i]).max(0.0);
                active_rows.push(i);
            }
        }
    }
    active_rows.sort_unstable();
    Ok(QpSolution { x, active: active_rows, eq_multipliers, ineq_multipliers, iterations })
}
