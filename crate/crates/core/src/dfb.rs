//! Differentiator filter bank: three linear-phase FIR filters estimating the
//! phasor and its first two derivatives at the window centre.
//!
//! Coefficients are stored in half-band form. With `h = N/2`:
//!
//! * `a0[0..=h]`, even taps `h0[0] = a0[0]`, `h0[±m] = a0[m] / 2`, so that
//!   `A0(w) = a0[0] + Σ a0[m] cos(w m)`;
//! * `a1[0..h]` holds the odd coefficients for `m = 1..=h`, taps
//!   `h1[±m] = ±a1[m-1] / 2`, so that the frequency response is `j A1(w)`
//!   with `A1(w) = Σ a1[m-1] sin(w m)`;
//! * `a2` mirrors `a0`.
//!
//! The `1/T` and `1/T^2` derivative scalings live in `a1` and `a2`, so
//! ratios such as `Im{Z'/Z}` come out directly in rad/s.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{SystemConfig, WindowVector};

/// Relative division guard: `|Z| <= guard * rms(window)` invalidates the
/// derivative ratios.
pub const DEFAULT_Z_GUARD: f64 = 1e-9;

/// Tolerance used when checking nominal constraints of a prototype bank.
pub const PROTOTYPE_TOLERANCE: f64 = 1e-9;

const COSH_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Phasor filter `A0`.
    Phasor,
    /// First-derivative filter `A1`.
    First,
    /// Second-derivative filter `A2`.
    Second,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Prototype,
    Adapted,
}

/// Responses of raw half-band coefficient vectors. The design stage works on
/// these before a bank exists.
pub mod response {
    use num_complex::Complex64;

    /// `c[0] + Σ c[m] cos(w m)`.
    pub fn even(c: &[f64], w: f64) -> f64 {
        c[0] + c.iter().enumerate().skip(1).map(|(m, a)| a * (w * m as f64).cos()).sum::<f64>()
    }

    /// `Σ c[m-1] sin(w m)`.
    pub fn odd(c: &[f64], w: f64) -> f64 {
        c.iter().enumerate().map(|(i, a)| a * (w * (i + 1) as f64).sin()).sum()
    }

    /// `c[0] + Σ c[m] cosh(s m)`.
    pub fn even_hyperbolic(c: &[f64], s: f64) -> f64 {
        c[0] + c.iter().enumerate().skip(1).map(|(m, a)| a * (s * m as f64).cosh()).sum::<f64>()
    }

    /// `Σ c[m-1] sinh(s m)`.
    pub fn odd_hyperbolic(c: &[f64], s: f64) -> f64 {
        c.iter().enumerate().map(|(i, a)| a * (s * (i + 1) as f64).sinh()).sum()
    }

    /// `c[0] + Σ c[m] e^{j c2 m^2 / 2}` with `c2 = alpha T^2`.
    pub fn even_chirp(c: &[f64], c2: f64) -> Complex64 {
        c.iter()
            .enumerate()
            .map(|(m, a)| Complex64::from_polar(*a, 0.5 * c2 * (m * m) as f64))
            .sum()
    }

    /// `c[0] + Σ c[m] e^{-c2 m^2 / 2}` with `c2 = gamma T^2`.
    pub fn even_gaussian(c: &[f64], c2: f64) -> f64 {
        c.iter().enumerate().map(|(m, a)| a * (-0.5 * c2 * (m * m) as f64).exp()).sum()
    }

    /// Row `[1, cos w, ..., cos(w h)]`.
    pub fn even_row(h: usize, w: f64) -> Vec<f64> {
        (0..=h).map(|m| (w * m as f64).cos()).collect()
    }

    /// Row `[sin w, ..., sin(w h)]`.
    pub fn odd_row(h: usize, w: f64) -> Vec<f64> {
        (1..=h).map(|m| (w * m as f64).sin()).collect()
    }
}

/// Phasor, derivative and parameter estimates of one filtering pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEstimates {
    pub z: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
    /// rad/s
    pub omega: f64,
    /// rad/s^2
    pub alpha: f64,
    /// 1/s
    pub sigma: f64,
    /// 1/s^2
    pub gamma: f64,
    /// False when `|z|` tripped the division guard; the parameter fields
    /// are then NaN.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    n: usize,
    t: f64,
    f0: f64,
    m_harmonics: usize,
    a0: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    #[serde(default)]
    provenance: Provenance,
    #[serde(default)]
    design_meta: serde_json::Value,
}

impl FilterBank {
    /// Wraps coefficient vectors after checking their lengths against `cfg`.
    pub fn new(
        cfg: &SystemConfig,
        a0: Vec<f64>,
        a1: Vec<f64>,
        a2: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let bank = Self {
            n: cfg.order,
            t: cfg.sample_period,
            f0: cfg.f0,
            m_harmonics: cfg.harmonics,
            a0,
            a1,
            a2,
            provenance,
            design_meta: serde_json::Value::Null,
        };
        bank.check_shape()?;
        Ok(bank)
    }

    /// Like [`FilterBank::new`] but also checks `A0(0) = 1`, `A2(0) = 0` and
    /// the nominal harmonic zeros of all three filters.
    pub fn prototype(cfg: &SystemConfig, a0: Vec<f64>, a1: Vec<f64>, a2: Vec<f64>) -> Result<Self> {
        let bank = Self::new(cfg, a0, a1, a2, Provenance::Prototype)?;
        bank.check_nominal_constraints(PROTOTYPE_TOLERANCE)?;
        Ok(bank)
    }

    fn check_shape(&self) -> Result<()> {
        let h = self.n / 2;
        let bad = |detail: String| Err(Error::BankShape { order: self.n, detail });
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return bad("order must be even".into());
        }
        if self.a0.len() != h + 1 {
            return bad(format!("a0 has {} entries, expected {}", self.a0.len(), h + 1));
        }
        if self.a1.len() != h {
            return bad(format!("a1 has {} entries, expected {h}", self.a1.len()));
        }
        if self.a2.len() != h + 1 {
            return bad(format!("a2 has {} entries, expected {}", self.a2.len(), h + 1));
        }
        if !self.a0.iter().chain(&self.a1).chain(&self.a2).all(|v| v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        Ok(())
    }

    pub fn check_nominal_constraints(&self, tol: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::PrototypeConstraint(msg));
        let a0_dc = self.amplitude_response(Branch::Phasor, 0.0);
        if (a0_dc - 1.0).abs() > tol {
            return fail(format!("A0(0) = {a0_dc}"));
        }
        let a2_dc = self.amplitude_response(Branch::Second, 0.0);
        if a2_dc.abs() > tol * (1.0 + self.a2.iter().map(|v| v.abs()).sum::<f64>()) {
            return fail(format!("A2(0) = {a2_dc:e}"));
        }
        let w0 = 2.0 * std::f64::consts::PI * self.f0 * self.t;
        for l in 1..=self.m_harmonics {
            let w = l as f64 * w0;
            for (branch, scale) in [
                (Branch::Phasor, 1.0),
                (Branch::First, self.a1.iter().map(|v| v.abs()).sum::<f64>()),
                (Branch::Second, self.a2.iter().map(|v| v.abs()).sum::<f64>()),
            ] {
                let r = self.amplitude_response(branch, w);
                if r.abs() > tol * scale.max(1.0) {
                    return fail(format!("{branch:?} response {r:e} at harmonic {l}"));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn sample_period(&self) -> f64 {
        self.t
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn harmonics(&self) -> usize {
        self.m_harmonics
    }

    pub fn a0(&self) -> &[f64] {
        &self.a0
    }

    pub fn a1(&self) -> &[f64] {
        &self.a1
    }

    pub fn a2(&self) -> &[f64] {
        &self.a2
    }

    pub fn coefficients(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Phasor => &self.a0,
            Branch::First => &self.a1,
            Branch::Second => &self.a2,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn design_meta(&self) -> &serde_json::Value {
        &self.design_meta
    }

    pub fn with_design_meta(mut self, meta: serde_json::Value) -> Self {
        self.design_meta = meta;
        self
    }

    /// Whether this bank was built for `cfg`'s order, sampling period,
    /// nominal frequency and harmonic count.
    pub fn matches(&self, cfg: &SystemConfig) -> bool {
        self.n == cfg.order
            && self.m_harmonics == cfg.harmonics
            && (self.t - cfg.sample_period).abs() <= 1e-12 * cfg.sample_period
            && (self.f0 - cfg.f0).abs() <= 1e-12 * cfg.f0
    }

    /// `A_i(w)` at normalized frequency `w = ωT`.
    pub fn amplitude_response(&self, branch: Branch, w: f64) -> f64 {
        match branch {
            Branch::Phasor => response::even(&self.a0, w),
            Branch::First => response::odd(&self.a1, w),
            Branch::Second => response::even(&self.a2, w),
        }
    }

    /// Response continued to real exponentials at normalized damping `s = σT`.
    pub fn hyperbolic_response(&self, branch: Branch, s: f64) -> Result<f64> {
        if !s.is_finite() || (s * (self.n / 2) as f64).abs() > COSH_LIMIT {
            return Err(Error::DampingOutOfRange { value: s });
        }
        Ok(match branch {
            Branch::Phasor => response::even_hyperbolic(&self.a0, s),
            Branch::First => response::odd_hyperbolic(&self.a1, s),
            Branch::Second => response::even_hyperbolic(&self.a2, s),
        })
    }

    /// Output on the rotating chirp `e^{j c m^2 / 2}`, `c = αT²`. The odd
    /// branch annihilates every even input.
    pub fn chirp_response(&self, branch: Branch, c: f64) -> Complex64 {
        match branch {
            Branch::Phasor => response::even_chirp(&self.a0, c),
            Branch::First => Complex64::new(0.0, 0.0),
            Branch::Second => response::even_chirp(&self.a2, c),
        }
    }

    /// Output on the real Gaussian `e^{-c m^2 / 2}`, `c = γT²`.
    pub fn gaussian_response(&self, branch: Branch, c: f64) -> f64 {
        match branch {
            Branch::Phasor => response::even_gaussian(&self.a0, c),
            Branch::First => 0.0,
            Branch::Second => response::even_gaussian(&self.a2, c),
        }
    }

    /// Expanded impulse response, ordered `m = -N/2 ..= N/2`.
    pub fn taps(&self, branch: Branch) -> Vec<f64> {
        let h = self.n / 2;
        let mut taps = vec![0.0; self.n + 1];
        match branch {
            Branch::Phasor | Branch::Second => {
                let c = self.coefficients(branch);
                taps[h] = c[0];
                for m in 1..=h {
                    taps[h + m] = 0.5 * c[m];
                    taps[h - m] = 0.5 * c[m];
                }
            }
            Branch::First => {
                for m in 1..=h {
                    taps[h + m] = 0.5 * self.a1[m - 1];
                    taps[h - m] = -0.5 * self.a1[m - 1];
                }
            }
        }
        taps
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: Self = serde_json::from_str(text)?;
        bank.check_shape()?;
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Filters a (shifted) window with default division guard.
pub fn apply_filter_bank(z: &WindowVector, bank: &FilterBank) -> Result<RawEstimates> {
    apply_filter_bank_with_guard(z, bank, DEFAULT_Z_GUARD)
}

pub fn apply_filter_bank_with_guard(z: &WindowVector, bank: &FilterBank, guard: f64) -> Result<RawEstimates> {
    let h = bank.n / 2;
    if z.len() != bank.n + 1 {
        return Err(Error::WindowLength { expected: bank.n + 1, got: z.len() });
    }
    let v = z.values();
    let mid = v[h];
    let mut zh = mid * bank.a0[0];
    let mut z1 = Complex64::new(0.0, 0.0);
    let mut z2 = mid * bank.a2[0];
    for m in 1..=h {
        let fwd = v[h + m];
        let bwd = v[h - m];
        let sum = (fwd + bwd) * 0.5;
        let diff = (fwd - bwd) * 0.5;
        zh += sum * bank.a0[m];
        z1 += diff * bank.a1[m - 1];
        z2 += sum * bank.a2[m];
    }

    let limit = guard * z.rms();
    if zh.norm() <= limit {
        return Ok(RawEstimates {
            z: zh,
            z1,
            z2,
            omega: f64::NAN,
            alpha: f64::NAN,
            sigma: f64::NAN,
            gamma: f64::NAN,
            valid: false,
        });
    }
    let r1 = z1 / zh;
    let r2 = z2 / zh;
    Ok(RawEstimates {
        z: zh,
        z1,
        z2,
        omega: r1.im,
        sigma: -r1.re,
        alpha: r2.im - 2.0 * r1.re * r1.im,
        gamma: -r2.re + r1.re * r1.re - r1.im * r1.im,
        valid: true,
    })
}
