//! Per-report self-adaptive iteration: shift by the prior model, filter,
//! unshift, select the parameters to adapt, update the priors and, when the
//! frequency prior moves, re-place the filter zeros on the off-nominal
//! harmonics.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{even_constraint_rows, odd_constraint_rows, solve_equality_min_norm, WeightMatrix};
use crate::dfb::{apply_filter_bank_with_guard, FilterBank, Provenance, RawEstimates, DEFAULT_Z_GUARD};
use crate::error::{Error, Result};
use crate::signal_model::{parameter_shift, PriorParams, SampleStream, SystemConfig, WindowVector};

/// Lower (dead-zone) and upper (rejection) magnitude thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn admits(&self, x: f64) -> bool {
        let a = x.abs();
        a >= self.min && a <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacThresholds {
    /// rad/s
    pub omega: Band,
    /// 1/s
    pub sigma: Band,
    /// rad/s^2
    pub alpha: Band,
    /// 1/s^2
    pub gamma: Band,
}

impl Default for SacThresholds {
    fn default() -> Self {
        Self {
            omega: Band::new(TAU * 1e-3, TAU * 15.0),
            sigma: Band::new(6e-3, 4.0),
            alpha: Band::new(TAU * 0.1, TAU * 16.0),
            gamma: Band::new(0.6, 110.0),
        }
    }
}

impl SacThresholds {
    pub fn band(&self, p: Param) -> Band {
        match p {
            Param::Omega => self.omega,
            Param::Alpha => self.alpha,
            Param::Sigma => self.sigma,
            Param::Gamma => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let b = self.band(p);
            if !(b.min > 0.0 && b.min < b.max && b.max.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{p} thresholds need 0 < min < max, got ({}, {})",
                    b.min, b.max
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Omega,
    Alpha,
    Sigma,
    Gamma,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Omega, Param::Alpha, Param::Sigma, Param::Gamma];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn of(self, p: &PriorParams) -> f64 {
        match self {
            Param::Omega => p.omega,
            Param::Alpha => p.alpha,
            Param::Sigma => p.sigma,
            Param::Gamma => p.gamma,
        }
    }

    fn slot(self, p: &mut PriorParams) -> &mut f64 {
        match self {
            Param::Omega => &mut p.omega,
            Param::Alpha => &mut p.alpha,
            Param::Sigma => &mut p.sigma,
            Param::Gamma => &mut p.gamma,
        }
    }

    fn raw(self, r: &RawEstimates) -> f64 {
        match self {
            Param::Omega => r.omega,
            Param::Alpha => r.alpha,
            Param::Sigma => r.sigma,
            Param::Gamma => r.gamma,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Param::Omega => "omega",
            Param::Alpha => "alpha",
            Param::Sigma => "sigma",
            Param::Gamma => "gamma",
        })
    }
}

/// Subset of the four model parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Param>", into = "Vec<Param>")]
pub struct ParamSet(u8);

impl ParamSet {
    pub const EMPTY: ParamSet = ParamSet(0);
    pub const FULL: ParamSet = ParamSet(0b1111);

    pub fn insert(&mut self, p: Param) {
        self.0 |= p.bit();
    }

    pub fn contains(&self, p: Param) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = Param> + '_ {
        Param::ALL.into_iter().filter(|p| self.contains(*p))
    }
}

impl FromIterator<Param> for ParamSet {
    fn from_iter<I: IntoIterator<Item = Param>>(iter: I) -> Self {
        let mut s = ParamSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

impl From<Vec<Param>> for ParamSet {
    fn from(v: Vec<Param>) -> Self {
        v.into_iter().collect()
    }
}

impl From<ParamSet> for Vec<Param> {
    fn from(s: ParamSet) -> Self {
        s.iter().collect()
    }
}

/// Where the adapted filters put their harmonic zeros, as a function of
/// the baseband frequency estimate `w`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicPlacement {
    /// `l (ω0 + w)`, `l = 1..M`: harmonic images of the shifted window.
    #[default]
    Shifted,
    /// `l ω0 + (l + 1) w`, `l = 1..M`: images in the unshifted dq frame.
    Baseband,
}

impl HarmonicPlacement {
    /// Normalized zero frequencies (rad/sample).
    pub fn zeros(self, freq_est: f64, cfg: &SystemConfig) -> Vec<f64> {
        let w0 = cfg.omega0();
        (1..=cfg.harmonics)
            .map(|l| {
                let l = l as f64;
                let w = match self {
                    HarmonicPlacement::Shifted => l * (w0 + freq_est),
                    HarmonicPlacement::Baseband => l * w0 + (l + 1.0) * freq_est,
                };
                w * cfg.sample_period
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacOptions {
    pub thresholds: SacThresholds,
    pub placement: HarmonicPlacement,
    /// Relative `|Z_hat|` floor below which an iteration is abandoned.
    pub z_guard: f64,
    /// Disables filter adaptation; priors still adapt.
    pub adapt_filters: bool,
    /// Keeps the per-iteration priors in each frame.
    pub record_trace: bool,
}

impl Default for SacOptions {
    fn default() -> Self {
        Self {
            thresholds: SacThresholds::default(),
            placement: HarmonicPlacement::default(),
            z_guard: DEFAULT_Z_GUARD,
            adapt_filters: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFault {
    /// `|Z_hat|` fell below the division guard.
    GuardTripped,
    /// The harmonic-zero system was singular; the previous bank was kept.
    AdaptationFailed,
}

/// One reported estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFrame {
    pub report_index: i64,
    pub time_s: f64,
    pub f0_hz: f64,
    pub phasor: Complex64,
    /// Baseband frequency deviation, rad/s.
    pub freq: f64,
    /// rad/s^2
    pub rocof: f64,
    /// 1/s
    pub damping: f64,
    /// 1/s^2
    pub rocod: f64,
    pub iterations: usize,
    pub adapted_filters: bool,
    /// Parameters whose last unshifted value was replaced by the prior.
    pub rejected: ParamSet,
    pub fault: Option<FrameFault>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_trace: Vec<PriorParams>,
}

impl EstimateFrame {
    pub fn amplitude(&self) -> f64 {
        self.phasor.norm()
    }

    pub fn phase(&self) -> f64 {
        self.phasor.arg()
    }

    pub fn freq_hz(&self) -> f64 {
        self.f0_hz + self.freq / TAU
    }

    pub fn rocof_hz_s(&self) -> f64 {
        self.rocof / TAU
    }

    pub fn params(&self) -> PriorParams {
        PriorParams::new(self.freq, self.rocof, self.damping, self.rocod)
    }
}

/// Estimates of one iteration after unshifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unshifted {
    pub phasor: Complex64,
    pub params: PriorParams,
    pub rejected: ParamSet,
}

/// First-window priors are nominal; later ones extrapolate the previous
/// report linearly over one reporting interval, clamped to the upper
/// thresholds.
pub fn init_priors(prev: Option<&EstimateFrame>, cfg: &SystemConfig, th: &SacThresholds) -> PriorParams {
    let Some(prev) = prev else {
        return PriorParams::default();
    };
    let dt = cfg.report_interval();
    let clamp = |x: f64, b: Band| x.clamp(-b.max, b.max);
    PriorParams {
        omega: clamp(prev.freq + dt * prev.rocof, th.omega),
        alpha: clamp(prev.rocof, th.alpha),
        sigma: clamp(prev.damping + dt * prev.rocod, th.sigma),
        gamma: clamp(prev.rocod, th.gamma),
    }
}

/// Adds the priors back, keeping the prior for any parameter whose sum
/// exceeds its upper threshold. An invalid filtering result reports the
/// priors unchanged with every parameter rejected.
pub fn unshift_estimates(raw: &RawEstimates, p: &PriorParams, th: &SacThresholds) -> Unshifted {
    if !raw.valid {
        return Unshifted { phasor: raw.z, params: *p, rejected: ParamSet::FULL };
    }
    let mut params = *p;
    let mut rejected = ParamSet::EMPTY;
    for q in Param::ALL {
        let sum = q.raw(raw) + q.of(p);
        if sum.abs() <= th.band(q).max {
            *q.slot(&mut params) = sum;
        } else {
            rejected.insert(q);
        }
    }
    Unshifted { phasor: raw.z, params, rejected }
}

/// Parameters whose shifted estimate lies between its two thresholds.
pub fn adaptation_set(raw: &RawEstimates, th: &SacThresholds) -> ParamSet {
    if !raw.valid {
        return ParamSet::EMPTY;
    }
    Param::ALL.into_iter().filter(|q| th.band(*q).admits(q.raw(raw))).collect()
}

/// Replaces the members of `set` by their unshifted estimates.
pub fn update_priors(p: &PriorParams, est: &PriorParams, set: ParamSet) -> PriorParams {
    let mut next = *p;
    for q in set.iter() {
        *q.slot(&mut next) = q.of(est);
    }
    next
}

/// Closest bank to `prototype` (in the weighted filter norm) with unit DC
/// gain and zeros at the off-nominal harmonic images for `freq_est`.
pub fn adapt_filters(prototype: &FilterBank, freq_est: f64, cfg: &SystemConfig) -> Result<FilterBank> {
    adapt_filters_with(prototype, freq_est, cfg, HarmonicPlacement::default())
}

pub fn adapt_filters_with(
    prototype: &FilterBank,
    freq_est: f64,
    cfg: &SystemConfig,
    placement: HarmonicPlacement,
) -> Result<FilterBank> {
    if !prototype.matches(cfg) {
        return Err(Error::InvalidConfig("prototype bank does not match the configuration".into()));
    }
    if freq_est == 0.0 && placement == HarmonicPlacement::Shifted {
        return Ok(prototype.clone());
    }
    let h = cfg.half_order();
    let ws = placement.zeros(freq_est, cfg);
    let even = even_constraint_rows(h, &ws);
    let odd = odd_constraint_rows(h, &ws);
    let mut c0 = vec![0.0; even.nrows()];
    c0[0] = 1.0;
    let z_even = vec![0.0; even.nrows()];
    let z_odd = vec![0.0; odd.nrows()];

    let a0 = solve_equality_min_norm(&WeightMatrix::even(h), &even, &c0, prototype.a0())?;
    let a1 = solve_equality_min_norm(&WeightMatrix::odd(h), &odd, &z_odd, prototype.a1())?;
    let a2 = solve_equality_min_norm(&WeightMatrix::even(h), &even, &z_even, prototype.a2())?;
    FilterBank::new(cfg, a0, a1, a2, Provenance::Adapted)
}

/// Runtime state of one measurement channel.
#[derive(Debug, Clone)]
pub struct SacState {
    cfg: SystemConfig,
    options: SacOptions,
    prototype: FilterBank,
    bank: FilterBank,
    /// Frequency the current bank was adapted to, `None` for the prototype.
    bank_freq: Option<f64>,
    prev: Option<EstimateFrame>,
}

impl SacState {
    pub fn new(cfg: SystemConfig, prototype: FilterBank, options: SacOptions) -> Result<Self> {
        cfg.validate()?;
        options.thresholds.validate()?;
        if !prototype.matches(&cfg) {
            return Err(Error::InvalidConfig("prototype bank does not match the configuration".into()));
        }
        Ok(Self { cfg, options, bank: prototype.clone(), prototype, bank_freq: None, prev: None })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn options(&self) -> &SacOptions {
        &self.options
    }

    pub fn prototype(&self) -> &FilterBank {
        &self.prototype
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn bank_frequency(&self) -> Option<f64> {
        self.bank_freq
    }

    pub fn previous(&self) -> Option<&EstimateFrame> {
        self.prev.as_ref()
    }

    /// Forgets the previous report and restores the prototype bank.
    pub fn reset(&mut self) {
        self.prev = None;
        self.bank = self.prototype.clone();
        self.bank_freq = None;
    }

    fn filter(&self, y: &WindowVector, p: &PriorParams) -> Result<RawEstimates> {
        let z = parameter_shift(y, p, &self.cfg);
        apply_filter_bank_with_guard(&z, &self.bank, self.options.z_guard)
    }

    /// Runs the adaptive iteration on the window centred at `report_index`.
    pub fn process_report(&mut self, y: &WindowVector, report_index: i64) -> Result<EstimateFrame> {
        let expected = self.cfg.window_len();
        if y.len() != expected {
            return Err(Error::WindowLength { expected, got: y.len() });
        }
        let th = self.options.thresholds;
        let record = self.options.record_trace;
        let mut trace = Vec::new();

        let mut prior = init_priors(self.prev.as_ref(), &self.cfg, &th);
        if prior.omega.abs() < th.omega.min && self.bank_freq.is_some() {
            self.bank = self.prototype.clone();
            self.bank_freq = None;
        }
        if record {
            trace.push(prior);
        }

        let mut fault = None;
        let mut adapted = false;
        let mut k = 0;
        let mut raw = self.filter(y, &prior)?;
        let mut est = unshift_estimates(&raw, &prior, &th);
        if !raw.valid {
            fault = Some(FrameFault::GuardTripped);
        }
        let mut set = adaptation_set(&raw, &th);

        while !set.is_empty() && k < self.cfg.k_max {
            prior = update_priors(&prior, &est.params, set);
            k += 1;
            if record {
                trace.push(prior);
            }
            if set.contains(Param::Omega) && self.options.adapt_filters {
                match adapt_filters_with(&self.prototype, prior.omega, &self.cfg, self.options.placement) {
                    Ok(bank) => {
                        self.bank = bank;
                        self.bank_freq = Some(prior.omega);
                        adapted = true;
                    }
                    Err(_) => fault = Some(FrameFault::AdaptationFailed),
                }
            }
            raw = self.filter(y, &prior)?;
            est = unshift_estimates(&raw, &prior, &th);
            if !raw.valid {
                fault = Some(FrameFault::GuardTripped);
                break;
            }
            set = adaptation_set(&raw, &th);
        }

        let frame = EstimateFrame {
            report_index,
            time_s: report_index as f64 * self.cfg.sample_period,
            f0_hz: self.cfg.f0,
            phasor: est.phasor,
            freq: est.params.omega,
            rocof: est.params.alpha,
            damping: est.params.sigma,
            rocod: est.params.gamma,
            iterations: k,
            adapted_filters: adapted,
            rejected: est.rejected,
            fault,
            prior_trace: trace,
        };
        self.prev = Some(frame.clone());
        Ok(frame)
    }

    /// Processes every report instant of `stream` in order.
    pub fn run(&mut self, stream: &SampleStream) -> Result<Vec<EstimateFrame>> {
        let cfg = self.cfg;
        stream
            .report_indices(&cfg)
            .into_iter()
            .map(|n| {
                let y = stream.window(n, &cfg).expect("report index keeps the window inside the stream");
                self.process_report(&y, n)
            })
            .collect()
    }
}
