//! Offline design of the prototype filter bank.
//!
//! Each filter minimizes its weighted norm `a' P a` (the `L2[-π, π]`
//! energy of its amplitude response) subject to harmonic zeros and, for the
//! derivative filters, discretized contractive inequalities. The filters are
//! designed in sequence `a0 -> a1 -> a2`; the contractive constraints are
//! convex once `a0` is fixed.

pub mod contraction;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dfb::{response, FilterBank};
use crate::error::{Error, Result};
use crate::signal_model::SystemConfig;

use contraction::{family_grid, linear_model, ContractionCertificate, Family};
pub use qp::{solve_qp_active_set, QpSolution};

/// Positive diagonal weight of a squared filter norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    diag: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(diag: Vec<f64>) -> Self {
        assert!(diag.iter().all(|w| *w > 0.0 && w.is_finite()), "weights must be positive");
        Self { diag }
    }

    /// `diag(1, 1/2, ..., 1/2)` of size `h + 1`, for `a0` and `a2`.
    pub fn even(h: usize) -> Self {
        let mut diag = vec![0.5; h + 1];
        diag[0] = 1.0;
        Self { diag }
    }

    /// `diag(1/2, ..., 1/2)` of size `h`, for `a1`.
    pub fn odd(h: usize) -> Self {
        Self { diag: vec![0.5; h] }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn quadratic(&self, a: &[f64]) -> f64 {
        self.diag.iter().zip(a).map(|(w, a)| w * a * a).sum()
    }
}

/// Contractive ranges, contraction factors and discretization controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSpec {
    /// rad/s
    pub omega_con: f64,
    /// 1/s
    pub sigma_con: f64,
    /// rad/s^2
    pub alpha_con: f64,
    /// 1/s^2
    pub gamma_con: f64,
    pub l_omega: f64,
    pub l_sigma: f64,
    pub l_alpha: f64,
    pub l_gamma: f64,
    /// Points per symmetric contractive interval, zero excluded.
    pub grid_density: usize,
    /// Allowed excess of the contraction ratio over `L` on the validation grid.
    pub refine_tol: f64,
    /// Validation grid refinement factor relative to `grid_density`.
    pub validation_factor: usize,
    pub max_refine_rounds: usize,
}

impl Default for DesignSpec {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            omega_con: 2.0 * PI * 15.0,
            sigma_con: 4.0,
            alpha_con: 2.0 * PI * 16.0,
            gamma_con: 110.0,
            l_omega: 0.3,
            l_sigma: 0.3,
            l_alpha: 0.9,
            l_gamma: 0.9,
            grid_density: 401,
            refine_tol: 1e-9,
            validation_factor: 4,
            max_refine_rounds: 10,
        }
    }
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, l) in [
            ("l_omega", self.l_omega),
            ("l_sigma", self.l_sigma),
            ("l_alpha", self.l_alpha),
            ("l_gamma", self.l_gamma),
        ] {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {l}")));
            }
        }
        for (name, r) in [
            ("omega_con", self.omega_con),
            ("sigma_con", self.sigma_con),
            ("alpha_con", self.alpha_con),
            ("gamma_con", self.gamma_con),
        ] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {r}")));
            }
        }
        if self.grid_density < 3 || self.validation_factor < 1 {
            return Err(Error::InvalidConfig("grid too coarse".into()));
        }
        Ok(())
    }

    pub fn range(&self, family: Family) -> f64 {
        match family {
            Family::Frequency => self.omega_con,
            Family::Damping => self.sigma_con,
            Family::Rocof => self.alpha_con,
            Family::Rocod => self.gamma_con,
        }
    }

    pub fn factor(&self, family: Family) -> f64 {
        match family {
            Family::Frequency => self.l_omega,
            Family::Damping => self.l_sigma,
            Family::Rocof => self.l_alpha,
            Family::Rocod => self.l_gamma,
        }
    }

    pub fn ranges(&self) -> [f64; 4] {
        [self.omega_con, self.sigma_con, self.alpha_con, self.gamma_con]
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Minimizer of `(a - center)' P (a - center)` subject to `G a = c`:
/// `a = center + P^-1 G' (G P^-1 G')^-1 (c - G center)`.
///
/// Evaluated as a projection through a QR factorization of `(G P^{-1/2})'`;
/// a vanishing diagonal entry of `R` identifies the first row that depends
/// on its predecessors.
pub fn solve_equality_min_norm(p: &WeightMatrix, g: &DMatrix<f64>, c: &[f64], center: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    if g.ncols() != n || g.nrows() != c.len() || center.len() != n {
        return Err(Error::Input("equality system dimensions are inconsistent".into()));
    }
    if g.nrows() == 0 {
        return Ok(center.to_vec());
    }
    if g.nrows() > n {
        return Err(Error::RedundantConstraint { row: n });
    }
    let x0 = DVector::from_column_slice(center);
    let d = DVector::from_column_slice(c) - g * &x0;

    // Already feasible up to rounding of G * center.
    let rounding = g
        .row_iter()
        .zip(c)
        .map(|(row, ci)| row.iter().zip(center).map(|(a, b)| (a * b).abs()).sum::<f64>() + ci.abs())
        .fold(0.0, f64::max);
    if d.amax() <= 8.0 * f64::EPSILON * rounding.max(f64::MIN_POSITIVE) {
        return Ok(center.to_vec());
    }

    let inv_sqrt: Vec<f64> = p.diag().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut bt = g.transpose();
    for (i, s) in inv_sqrt.iter().enumerate() {
        bt.row_mut(i).scale_mut(*s);
    }
    let qr = bt.clone().qr();
    let r = qr.r();
    for i in 0..r.nrows() {
        let row_norm = bt.column(i).norm();
        if row_norm == 0.0 || r[(i, i)].abs() <= 1e-10 * row_norm {
            return Err(Error::RedundantConstraint { row: i });
        }
    }
    let u = r
        .transpose()
        .solve_lower_triangular(&d)
        .ok_or(Error::RedundantConstraint { row: 0 })?;
    let y = qr.q() * u;
    Ok(center.iter().zip(&inv_sqrt).zip(y.iter()).map(|((c, s), y)| c + s * y).collect())
}

/// Harmonic-zero rows of the even (phasor / second-derivative) filters at
/// normalized frequencies `ws`, preceded by the DC row.
pub fn even_constraint_rows(h: usize, ws: &[f64]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = std::iter::once(0.0)
        .chain(ws.iter().copied())
        .map(|w| response::even_row(h, w))
        .collect();
    rows_to_matrix(&rows, h + 1)
}

/// Harmonic-zero rows of the odd (first-derivative) filter.
pub fn odd_constraint_rows(h: usize, ws: &[f64]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = ws.iter().map(|w| response::odd_row(h, *w)).collect();
    rows_to_matrix(&rows, h)
}

fn nominal_harmonics(cfg: &SystemConfig) -> Vec<f64> {
    let w0 = cfg.omega0() * cfg.sample_period;
    (1..=cfg.harmonics).map(|l| l as f64 * w0).collect()
}

/// Minimum-norm phasor filter with unit DC gain and nominal harmonic zeros.
///
/// Also verifies the denominators used by the contractive constraints:
/// `A0 > 0` on the frequency range, `A0h > 0` on the damping range,
/// `R0 > 0` on the ROCOD range and `S0 != 0` on the ROCOF range.
pub fn design_a0(cfg: &SystemConfig, spec: &DesignSpec) -> Result<Vec<f64>> {
    cfg.validate()?;
    spec.validate()?;
    let h = cfg.half_order();
    let g = even_constraint_rows(h, &nominal_harmonics(cfg));
    let mut c = vec![0.0; g.nrows()];
    c[0] = 1.0;
    let a0 = solve_equality_min_norm(&WeightMatrix::even(h), &g, &c, &vec![0.0; h + 1])?;

    let t = cfg.sample_period;
    let points = spec.grid_density * spec.validation_factor;
    for family in Family::ALL {
        let range = spec.range(family);
        for x in contraction::symmetric_grid(range, points) {
            let den = match family {
                Family::Frequency => response::even(&a0, x * t),
                Family::Damping => response::even_hyperbolic(&a0, x * t),
                Family::Rocof => response::even_chirp(&a0, x * t * t).norm(),
                Family::Rocod => response::even_gaussian(&a0, x * t * t),
            };
            if den.is_nan() || den <= 0.0 {
                return Err(Error::DesignInfeasible(format!(
                    "phasor filter response vanishes or turns negative at {family:?} = {x}; \
                     increase the filter order or shrink the contractive range"
                )));
            }
        }
    }
    Ok(a0)
}

/// Result of one sequential design stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDesign {
    pub coeffs: Vec<f64>,
    pub refinement_rounds: usize,
    pub qp_iterations: usize,
    pub active_constraints: usize,
    pub grid_points: usize,
    /// Worst `ratio - L` on the validation grid (non-positive when satisfied).
    pub worst_excess: f64,
}

struct StageProblem<'a> {
    cfg: &'a SystemConfig,
    spec: &'a DesignSpec,
    a0: &'a [f64],
    families: [Family; 2],
    weights: WeightMatrix,
    eq: DMatrix<f64>,
    eq_rhs: Vec<f64>,
}

impl StageProblem<'_> {
    fn solve(&self) -> Result<StageDesign> {
        let t = self.cfg.sample_period;
        let mut grids: Vec<Vec<f64>> = self
            .families
            .iter()
            .map(|f| family_grid(*f, self.spec.range(*f), self.spec.grid_density))
            .collect();
        let validation: Vec<Vec<f64>> = self
            .families
            .iter()
            .map(|f| {
                let points = (self.spec.grid_density - 1) * self.spec.validation_factor + 1;
                family_grid(*f, self.spec.range(*f), points)
            })
            .collect();

        let mut total_iterations = 0;
        for round in 0..=self.spec.max_refine_rounds {
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            let mut origin = Vec::new();
            for (family, grid) in self.families.iter().zip(&grids) {
                let l = self.spec.factor(*family);
                for &x in grid {
                    let model = linear_model(*family, self.a0, x, t);
                    // x_hat * den in [(x - L|x|) den, (x + L|x|) den]
                    rows.push(model.row.clone());
                    rhs.push((x + l * x.abs()) * model.den);
                    rows.push(model.row.iter().map(|v| -v).collect());
                    rhs.push(-(x - l * x.abs()) * model.den);
                    origin.push((*family, x));
                    origin.push((*family, x));
                }
            }
            let a = rows_to_matrix(&rows, self.weights.len());
            let center = vec![0.0; self.weights.len()];
            let sol = qp::solve_qp_active_set(&self.weights, &self.eq, &self.eq_rhs, &a, &rhs, &center).map_err(
                |e| match e {
                    Error::Infeasible { row } => {
                        let (family, x) = origin[row];
                        Error::DesignInfeasible(format!("contractive constraint {family:?} binding at {x}"))
                    }
                    other => other,
                },
            )?;
            total_iterations += sol.iterations;

            let mut worst_excess = f64::NEG_INFINITY;
            let mut added = 0;
            for (k, family) in self.families.iter().enumerate() {
                let l = self.spec.factor(*family);
                let mut extra = Vec::new();
                for &x in &validation[k] {
                    let excess = contraction::ratio(*family, self.a0, &sol.x, x, t) - l;
                    worst_excess = worst_excess.max(excess);
                    if excess > self.spec.refine_tol {
                        extra.push(x);
                    }
                }
                added += extra.len();
                grids[k].extend(extra);
            }
            if added == 0 {
                return Ok(StageDesign {
                    coeffs: sol.x,
                    refinement_rounds: round,
                    qp_iterations: total_iterations,
                    active_constraints: sol.active.len(),
                    grid_points: grids.iter().map(Vec::len).sum(),
                    worst_excess,
                });
            }
            if round == self.spec.max_refine_rounds {
                return Err(Error::RefinementStalled { rounds: round, violation: worst_excess });
            }
        }
        unreachable!("loop returns on the final round")
    }
}

/// Minimum-norm first-derivative filter with harmonic zeros and frequency
/// and damping contraction on their ranges.
pub fn design_a1(a0: &[f64], cfg: &SystemConfig, spec: &DesignSpec) -> Result<StageDesign> {
    cfg.validate()?;
    spec.validate()?;
    let h = cfg.half_order();
    let eq = odd_constraint_rows(h, &nominal_harmonics(cfg));
    let eq_rhs = vec![0.0; eq.nrows()];
    StageProblem {
        cfg,
        spec,
        a0,
        families: [Family::Frequency, Family::Damping],
        weights: WeightMatrix::odd(h),
        eq,
        eq_rhs,
    }
    .solve()
}

/// Minimum-norm second-derivative filter with zero DC gain, harmonic zeros
/// and ROCOF and ROCOD contraction on their ranges. The first-derivative
/// filter does not enter: it annihilates the even chirp models.
pub fn design_a2(a0: &[f64], cfg: &SystemConfig, spec: &DesignSpec) -> Result<StageDesign> {
    cfg.validate()?;
    spec.validate()?;
    let h = cfg.half_order();
    let eq = even_constraint_rows(h, &nominal_harmonics(cfg));
    let eq_rhs = vec![0.0; eq.nrows()];
    StageProblem {
        cfg,
        spec,
        a0,
        families: [Family::Rocof, Family::Rocod],
        weights: WeightMatrix::even(h),
        eq,
        eq_rhs,
    }
    .solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterNorms {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Summary emitted alongside a designed bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub spec: DesignSpec,
    pub certificate: ContractionCertificate,
    pub certificate_points: usize,
    pub norms: FilterNorms,
    /// Largest `|A_i(l w0 T)|` over the nominal harmonics.
    pub harmonic_residuals: FilterNorms,
    pub dc_gain: f64,
    pub a1_stage: StageSummary,
    pub a2_stage: StageSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub refinement_rounds: usize,
    pub qp_iterations: usize,
    pub active_constraints: usize,
    pub grid_points: usize,
    pub worst_excess: f64,
}

impl From<&StageDesign> for StageSummary {
    fn from(s: &StageDesign) -> Self {
        Self {
            refinement_rounds: s.refinement_rounds,
            qp_iterations: s.qp_iterations,
            active_constraints: s.active_constraints,
            grid_points: s.grid_points,
            worst_excess: s.worst_excess,
        }
    }
}

/// Points of the grid used for the contraction certificate in reports.
pub const CERTIFICATE_POINTS: usize = 2001;

/// Runs the three stages and packages the prototype bank with its report.
pub fn design_prototype(cfg: &SystemConfig, spec: &DesignSpec) -> Result<(FilterBank, DesignReport)> {
    let a0 = design_a0(cfg, spec)?;
    let s1 = design_a1(&a0, cfg, spec)?;
    let s2 = design_a2(&a0, cfg, spec)?;
    let bank = FilterBank::prototype(cfg, a0, s1.coeffs.clone(), s2.coeffs.clone())?;

    let h = cfg.half_order();
    let harmonics = nominal_harmonics(cfg);
    let worst = |f: &dyn Fn(f64) -> f64| harmonics.iter().map(|w| f(*w).abs()).fold(0.0, f64::max);
    let report = DesignReport {
        spec: *spec,
        certificate: contraction::certificate(&bank, spec.ranges(), CERTIFICATE_POINTS),
        certificate_points: CERTIFICATE_POINTS,
        norms: FilterNorms {
            a0: WeightMatrix::even(h).quadratic(bank.a0()),
            a1: WeightMatrix::odd(h).quadratic(bank.a1()),
            a2: WeightMatrix::even(h).quadratic(bank.a2()),
        },
        harmonic_residuals: FilterNorms {
            a0: worst(&|w| response::even(bank.a0(), w)),
            a1: worst(&|w| response::odd(bank.a1(), w)),
            a2: worst(&|w| response::even(bank.a2(), w)),
        },
        dc_gain: response::even(bank.a0(), 0.0),
        a1_stage: (&s1).into(),
        a2_stage: (&s2).into(),
    };
    let meta = serde_json::json!({
        "spec": spec,
        "certificate": report.certificate,
        "norms": report.norms,
    });
    Ok((bank.with_design_meta(meta), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_projection() {
        let p = WeightMatrix::new(vec![1.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let a = solve_equality_min_norm(&p, &g, &[2.0], &[0.0, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15 && (a[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feasible_center_is_returned() {
        let p = WeightMatrix::new(vec![1.0, 0.5, 0.5]);
        let g = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 2.0, -1.0]);
        let center = [0.25, 0.5, 1.0];
        let c = [1.75, 0.0];
        assert_eq!(solve_equality_min_norm(&p, &g, &c, &center).unwrap(), center.to_vec());
    }

    #[test]
    fn duplicated_row_is_named() {
        let p = WeightMatrix::even(4);
        let rows = even_constraint_rows(4, &[0.4, 0.9, 0.4]);
        let c = [1.0, 0.0, 0.0, 0.0];
        let err = solve_equality_min_norm(&p, &rows, &c, &[0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::RedundantConstraint { row: 3 }), "{err}");
    }

    #[test]
    fn unit_gain_without_harmonics_is_the_moving_average() {
        let cfg = SystemConfig { harmonics: 0, ..SystemConfig::default() };
        let a0 = design_a0(&cfg, &DesignSpec::default()).unwrap();
        let n1 = cfg.window_len() as f64;
        assert!((a0[0] - 1.0 / n1).abs() < 1e-15);
        for a in &a0[1..] {
            assert!((a - 2.0 / n1).abs() < 1e-15);
        }
    }

    #[test]
    fn contraction_factor_outside_unit_interval_rejected() {
        let spec = DesignSpec { l_omega: 1.0, ..DesignSpec::default() };
        assert!(spec.validate().is_err());
    }
}
