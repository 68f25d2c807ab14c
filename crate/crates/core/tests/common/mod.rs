//! Independent reference solvers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Dense KKT solve of `min (x-c)' diag(p) (x-c)  s.t.  G x = d`.
pub fn kkt_equality(p: &[f64], g: &DMatrix<f64>, d: &[f64], c: &[f64]) -> Option<Vec<f64>> {
    let n = p.len();
    let m = g.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        k[(i, i)] = 2.0 * p[i];
        rhs[i] = 2.0 * p[i] * c[i];
    }
    for r in 0..m {
        for j in 0..n {
            k[(n + r, j)] = g[(r, j)];
            k[(j, n + r)] = g[(r, j)];
        }
        rhs[n + r] = d[r];
    }
    let sol = k.full_piv_lu().solve(&rhs)?;
    Some(sol.rows(0, n).iter().copied().collect())
}

/// Rows of the even filter response `c0 + sum c_m cos(w m)`.
pub fn cos_rows(h: usize, ws: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ws.len(), h + 1, |r, j| if j == 0 { 1.0 } else { (ws[r] * j as f64).cos() })
}

/// Rows of the odd filter response `sum c_{m-1} sin(w m)`.
pub fn sin_rows(h: usize, ws: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ws.len(), h, |r, j| (ws[r] * (j + 1) as f64).sin())
}

pub fn weighted(p: &[f64], x: &[f64], c: &[f64]) -> f64 {
    p.iter().zip(x).zip(c).map(|((w, a), b)| w * (a - b) * (a - b)).sum()
}

/// Exhaustive active-set enumeration for `min (x-c)'P(x-c)` subject to
/// `G x = g`, `A x <= b`: the best primal-feasible equality minimizer over
/// all subsets of inequality rows held at equality.
pub fn brute_force_qp(
    p: &[f64],
    g: &DMatrix<f64>,
    gv: &[f64],
    a: &DMatrix<f64>,
    b: &[f64],
    c: &[f64],
) -> Option<Vec<f64>> {
    let n = p.len();
    let mi = a.nrows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << mi) {
        let rows: Vec<usize> = (0..mi).filter(|i| mask >> i & 1 == 1).collect();
        if rows.len() + g.nrows() > n {
            continue;
        }
        let mut m = DMatrix::zeros(g.nrows() + rows.len(), n);
        let mut d = Vec::new();
        for (r, v) in gv.iter().enumerate() {
            m.set_row(r, &g.row(r));
            d.push(*v);
        }
        for (k, &i) in rows.iter().enumerate() {
            m.set_row(g.nrows() + k, &a.row(i));
            d.push(b[i]);
        }
        if m.nrows() > 0 && m.clone().svd(false, false).singular_values.min() < 1e-9 {
            continue;
        }
        let Some(x) = kkt_equality(p, &m, &d, c) else { continue };
        let xv = DVector::from_column_slice(&x);
        let feasible = (a * &xv).iter().zip(b).all(|(l, r)| *l <= r + 1e-9);
        if !feasible {
            continue;
        }
        let f = weighted(p, &x, c);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}
