//! Contractive constraints on the one-step estimation maps.
//!
//! For each model signal the filtering stage returns an estimate of the
//! model parameter `x`; the map `x -> x - x_hat(x)` must be a contraction
//! with factor `L` over the contractive range. All four families are linear
//! in the coefficients of the filter being designed once `a0` is fixed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dfb::{response, FilterBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `e^{j ω T m}`, estimate `A1/A0`.
    Frequency,
    /// `e^{-σ T m}`, estimate `A1h/A0h`.
    Damping,
    /// `e^{j α T² m² / 2}`, estimate `Im{S2/S0}`.
    Rocof,
    /// `e^{-γ T² m² / 2}`, estimate `-R2/R0`.
    Rocod,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Frequency, Family::Damping, Family::Rocof, Family::Rocod];

    /// Families whose constraint at `-x` coincides with the one at `x`.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Family::Rocod)
    }

    /// The stage whose coefficients the constraint acts on: 1 or 2.
    pub fn stage(self) -> usize {
        match self {
            Family::Frequency | Family::Damping => 1,
            Family::Rocof | Family::Rocod => 2,
        }
    }
}

/// Linear model `x_hat = row . coeffs` plus the normalizing denominator of
/// the division-free form; `row` is already scaled so that the constraint
/// reads `|x * den - row . coeffs| <= L |x| den`.
pub(crate) struct LinearModel {
    pub row: Vec<f64>,
    pub den: f64,
}

pub(crate) fn linear_model(family: Family, a0: &[f64], x: f64, t: f64) -> LinearModel {
    let h = a0.len() - 1;
    match family {
        Family::Frequency => LinearModel { row: response::odd_row(h, x * t), den: response::even(a0, x * t) },
        Family::Damping => LinearModel {
            row: (1..=h).map(|m| (x * t * m as f64).sinh()).collect(),
            den: response::even_hyperbolic(a0, x * t),
        },
        Family::Rocof => {
            let c = x * t * t;
            let s0 = response::even_chirp(a0, c);
            let s0c = s0.conj() / s0.norm_sqr();
            let row = (0..=h)
                .map(|m| (Complex64::from_polar(1.0, 0.5 * c * (m * m) as f64) * s0c).im)
                .collect();
            LinearModel { row, den: 1.0 }
        }
        Family::Rocod => {
            let c = x * t * t;
            // x_hat = -R2/R0, so x_hat * R0 = (-w) . a2
            let row = (0..=h).map(|m| -(-0.5 * c * (m * m) as f64).exp()).collect();
            LinearModel { row, den: response::even_gaussian(a0, c) }
        }
    }
}

/// Estimate `x_hat(x)` produced on the family's model signal.
pub fn estimate(family: Family, a0: &[f64], coeffs: &[f64], x: f64, t: f64) -> f64 {
    let model = linear_model(family, a0, x, t);
    let num: f64 = model.row.iter().zip(coeffs).map(|(r, a)| r * a).sum();
    num / model.den
}

/// `|x - x_hat(x)| / |x|`.
pub fn ratio(family: Family, a0: &[f64], coeffs: &[f64], x: f64, t: f64) -> f64 {
    (x - estimate(family, a0, coeffs, x, t)).abs() / x.abs()
}

/// `points` equispaced values on `[-range, range]` with zero removed.
pub fn symmetric_grid(range: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![range];
    }
    let step = 2.0 * range / (points - 1) as f64;
    (0..points)
        .map(|i| -range + step * i as f64)
        .map(|x| if (x).abs() < 1e-12 * range { 0.0 } else { x })
        .filter(|x| *x != 0.0)
        .collect()
}

/// Grid for a family: the positive half of the symmetric grid when the
/// constraint is symmetric, the full grid otherwise.
pub fn family_grid(family: Family, range: f64, points: usize) -> Vec<f64> {
    let g = symmetric_grid(range, points);
    if family.is_symmetric() {
        g.into_iter().filter(|x| *x > 0.0).collect()
    } else {
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstRatio {
    pub ratio: f64,
    pub at: f64,
}

/// Worst contraction ratio of `bank` per family over a `points`-point grid
/// on each contractive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub omega: WorstRatio,
    pub sigma: WorstRatio,
    pub alpha: WorstRatio,
    pub gamma: WorstRatio,
}

impl ContractionCertificate {
    pub fn family(&self, family: Family) -> WorstRatio {
        match family {
            Family::Frequency => self.omega,
            Family::Damping => self.sigma,
            Family::Rocof => self.alpha,
            Family::Rocod => self.gamma,
        }
    }
}

pub fn worst_ratio(family: Family, a0: &[f64], coeffs: &[f64], range: f64, points: usize, t: f64) -> WorstRatio {
    symmetric_grid(range, points)
        .into_iter()
        .map(|x| WorstRatio { ratio: ratio(family, a0, coeffs, x, t), at: x })
        .fold(WorstRatio { ratio: 0.0, at: 0.0 }, |w, r| if r.ratio > w.ratio { r } else { w })
}

pub fn certificate(bank: &FilterBank, ranges: [f64; 4], points: usize) -> ContractionCertificate {
    let t = bank.sample_period();
    let w = |family: Family, range: f64| {
        let coeffs = if family.stage() == 1 { bank.a1() } else { bank.a2() };
        worst_ratio(family, bank.a0(), coeffs, range, points, t)
    };
    ContractionCertificate {
        omega: w(Family::Frequency, ranges[0]),
        sigma: w(Family::Damping, ranges[1]),
        alpha: w(Family::Rocof, ranges[2]),
        gamma: w(Family::Rocod, ranges[3]),
    }
}
