//! Baseband phasor model: system constants, prior polynomials, parameter
//! shifting and the three-phase front end.
//!
//! Windows are centred on the reporting index and stored in ascending order
//! of the offset `m = -N/2 ..= N/2`, so position `i` holds offset
//! `i - N/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling, window and reporting constants shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Nominal frequency in Hz.
    pub f0: f64,
    /// Sampling period in seconds.
    pub sample_period: f64,
    /// Filter order `N`; the window holds `N + 1` samples.
    pub order: usize,
    /// Number of harmonics `M` whose images are rejected.
    pub harmonics: usize,
    /// Reporting rate in frames per second.
    pub reporting_rate: f64,
    /// Maximum number of adaptation iterations per report.
    pub k_max: usize,
    /// Samples between consecutive reports.
    pub report_stride: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            f0: 60.0,
            sample_period: 1.0 / 1920.0,
            order: 64,
            harmonics: 11,
            reporting_rate: 60.0,
            k_max: 5,
            report_stride: 32,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.f0.is_finite() && self.f0 > 0.0) {
            return fail(format!("nominal frequency must be positive, got {}", self.f0));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return fail(format!("sampling period must be positive, got {}", self.sample_period));
        }
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return fail(format!("filter order must be even and >= 2, got {}", self.order));
        }
        let nyquist = 0.5 / self.sample_period;
        if self.harmonics as f64 * self.f0 >= nyquist {
            return fail(format!(
                "{} harmonics of {} Hz exceed the Nyquist frequency {nyquist} Hz",
                self.harmonics, self.f0
            ));
        }
        if self.harmonics + 1 > self.half_order() + 1 {
            return fail(format!(
                "{} harmonic constraints do not fit in {} coefficients",
                self.harmonics + 1,
                self.half_order() + 1
            ));
        }
        if !(self.reporting_rate.is_finite() && self.reporting_rate > 0.0) {
            return fail(format!("reporting rate must be positive, got {}", self.reporting_rate));
        }
        if self.report_stride == 0 {
            return fail("report stride must be at least one sample".into());
        }
        Ok(())
    }

    /// `N / 2`.
    pub fn half_order(&self) -> usize {
        self.order / 2
    }

    pub fn window_len(&self) -> usize {
        self.order + 1
    }

    /// Nominal angular frequency in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// Time between consecutive reports in seconds.
    pub fn report_interval(&self) -> f64 {
        self.report_stride as f64 * self.sample_period
    }

    /// Window offsets `-N/2 ..= N/2` as reals.
    pub fn offsets(&self) -> impl Iterator<Item = f64> {
        let h = self.half_order() as i64;
        (-h..=h).map(|m| m as f64)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.report_stride = stride;
        self
    }
}

/// Prior frequency, ROCOF, damping and ROCOD used to shift a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// rad/s
    pub omega: f64,
    /// rad/s^2
    pub alpha: f64,
    /// 1/s
    pub sigma: f64,
    /// 1/s^2
    pub gamma: f64,
}

impl PriorParams {
    pub fn new(omega: f64, alpha: f64, sigma: f64, gamma: f64) -> Self {
        Self { omega, alpha, sigma, gamma }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite() && self.alpha.is_finite() && self.sigma.is_finite() && self.gamma.is_finite()
    }
}

/// `N + 1` complex samples centred on a reporting index.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    values: Vec<Complex64>,
}

impl WindowVector {
    pub fn new(values: Vec<Complex64>, cfg: &SystemConfig) -> Result<Self> {
        if values.len() != cfg.window_len() {
            return Err(Error::WindowLength { expected: cfg.window_len(), got: values.len() });
        }
        Ok(Self { values })
    }

    /// Builds a window by evaluating `f(m)` at every offset.
    pub fn from_fn(cfg: &SystemConfig, mut f: impl FnMut(f64) -> Complex64) -> Self {
        Self { values: cfg.offsets().map(&mut f).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn half(&self) -> usize {
        self.values.len() / 2
    }

    /// Sample at signed offset `m`.
    pub fn at(&self, m: isize) -> Complex64 {
        self.values[(m + self.half() as isize) as usize]
    }

    pub fn center(&self) -> Complex64 {
        self.values[self.half()]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn rms(&self) -> f64 {
        let power: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (power / self.values.len() as f64).sqrt()
    }
}

/// Contiguous sequence of baseband samples starting at `start_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<Complex64>,
    pub start_index: i64,
}

impl SampleStream {
    pub fn new(samples: Vec<Complex64>, start_index: i64) -> Self {
        Self { samples, start_index }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Window centred on absolute sample index `n`, if it lies fully inside
    /// the stream.
    pub fn window(&self, n: i64, cfg: &SystemConfig) -> Option<WindowVector> {
        let h = cfg.half_order() as i64;
        let lo = n - h - self.start_index;
        let hi = n + h - self.start_index;
        if lo < 0 || hi >= self.samples.len() as i64 {
            return None;
        }
        Some(WindowVector { values: self.samples[lo as usize..=hi as usize].to_vec() })
    }

    /// Absolute indices at which a report can be produced: multiples of
    /// `stride` whose window fits in the stream.
    pub fn report_indices(&self, cfg: &SystemConfig) -> Vec<i64> {
        let h = cfg.half_order() as i64;
        let stride = cfg.report_stride as i64;
        let first = self.start_index + h;
        let last = self.start_index + self.samples.len() as i64 - 1 - h;
        if last < first {
            return Vec::new();
        }
        let start = first.div_euclid(stride) * stride;
        let start = if start < first { start + stride } else { start };
        (0..)
            .map(|j| start + j * stride)
            .take_while(|&n| n <= last)
            .collect()
    }
}

/// Log-amplitude and phase prior polynomials over the window, returned as
/// `(b_pr, phi_pr)`.
pub fn eval_prior_polynomials(p: &PriorParams, cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
    let t = cfg.sample_period;
    let mut b = Vec::with_capacity(cfg.window_len());
    let mut phi = Vec::with_capacity(cfg.window_len());
    for m in cfg.offsets() {
        b.push(-p.sigma * t * m - 0.5 * p.gamma * t * t * m * m);
        phi.push(p.omega * t * m + 0.5 * p.alpha * t * t * m * m);
    }
    (b, phi)
}

fn prior_factors(p: &PriorParams, cfg: &SystemConfig, sign: f64) -> impl Iterator<Item = Complex64> {
    let (b, phi) = eval_prior_polynomials(p, cfg);
    b.into_iter()
        .zip(phi)
        .map(move |(b, phi)| Complex64::from_polar((sign * b).exp(), sign * phi))
}

/// Removes the prior amplitude/phase model from the window.
pub fn parameter_shift(y: &WindowVector, p: &PriorParams, cfg: &SystemConfig) -> WindowVector {
    let values = y
        .values
        .iter()
        .zip(prior_factors(p, cfg, -1.0))
        .map(|(y, d)| y * d)
        .collect();
    WindowVector { values }
}

/// Exact inverse of [`parameter_shift`].
pub fn unshift_samples(z: &WindowVector, p: &PriorParams, cfg: &SystemConfig) -> WindowVector {
    let values = z
        .values
        .iter()
        .zip(prior_factors(p, cfg, 1.0))
        .map(|(z, d)| z * d)
        .collect();
    WindowVector { values }
}

/// Space-vector combination of three phase samples at index `n`, rotated
/// into the nominal frame: `(2/3)(ya + a yb + a^2 yc) e^{-j w0 T n}`.
pub fn abc_to_dq(ya: f64, yb: f64, yc: f64, n: i64, cfg: &SystemConfig) -> Complex64 {
    let a = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let space = (Complex64::new(ya, 0.0) + a * yb + a * a * yc) * (2.0 / 3.0);
    space * Complex64::from_polar(1.0, -cfg.omega0() * cfg.sample_period * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn default_config_is_valid() {
        cfg().validate().unwrap();
        assert_eq!(cfg().window_len(), 65);
        assert!((cfg().report_interval() - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn odd_order_rejected() {
        let c = SystemConfig { order: 63, ..cfg() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn harmonics_above_nyquist_rejected() {
        let c = SystemConfig { harmonics: 16, ..cfg() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_priors_give_zero_polynomials() {
        let (b, phi) = eval_prior_polynomials(&PriorParams::default(), &cfg());
        assert!(b.iter().chain(&phi).all(|&v| v == 0.0));
    }

    #[test]
    fn prior_polynomial_substitution() {
        let c = cfg();
        let (_, phi) = eval_prior_polynomials(&PriorParams::new(2.0 * PI * 5.0, 0.0, 0.0, 0.0), &c);
        assert!((phi[32 + 32] - PI / 6.0).abs() < 1e-12);
        let (b, _) = eval_prior_polynomials(&PriorParams::new(0.0, 0.0, 1.0, 0.0), &c);
        assert!((b[0] - 32.0 / 1920.0).abs() < 1e-15);
        assert_eq!(b[32], 0.0);
    }

    #[test]
    fn shift_cancels_phase_ramp() {
        let c = cfg();
        let ws = 2.0 * PI * 5.0;
        let y = WindowVector::from_fn(&c, |m| Complex64::from_polar(1.0, ws * c.sample_period * m));
        let z = parameter_shift(&y, &PriorParams::new(ws, 0.0, 0.0, 0.0), &c);
        for v in z.values() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_leaves_center_sample_untouched() {
        let c = cfg();
        let y = WindowVector::from_fn(&c, |m| Complex64::new(0.3 + m, -1.7 * m));
        let z = parameter_shift(&y, &PriorParams::new(3.0, -40.0, 2.5, 70.0), &c);
        assert_eq!(z.center(), y.center());
    }

    #[test]
    fn report_indices_are_stride_aligned() {
        let c = cfg();
        let s = SampleStream::new(vec![Complex64::new(1.0, 0.0); 200], 0);
        assert_eq!(s.report_indices(&c), vec![32, 64, 96, 128, 160]);
        assert!(s.window(32, &c).is_some());
        assert!(s.window(168, &c).is_none());
    }

    #[test]
    fn balanced_nominal_set_maps_to_unit_dc() {
        let c = cfg();
        let w = c.omega0() * c.sample_period;
        for n in 0..200 {
            let th = w * n as f64;
            let y = abc_to_dq(th.cos(), (th - 2.0 * PI / 3.0).cos(), (th + 2.0 * PI / 3.0).cos(), n, &c);
            assert!((y - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}
