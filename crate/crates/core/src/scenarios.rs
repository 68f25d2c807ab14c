//! Synthetic baseband test signals with analytic ground truth.
//!
//! Every scenario is a phasor `X(t) = a(t) e^{j φ(t)}` in the frame rotating
//! at the nominal frequency, optionally carrying positive-sequence
//! harmonics of the absolute phase `θ(t) = ω0 t + φ(t)`, which appear at
//! `h θ(t) - ω0 t`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{SampleStream, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
    #[serde(rename = "STEP_AMP")]
    StepAmp,
    #[serde(rename = "STEP_PHASE")]
    StepPhase,
    #[serde(rename = "FAULT_SYNTH")]
    FaultSynth,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 9] = [
        ScenarioId::A1,
        ScenarioId::A2,
        ScenarioId::A3,
        ScenarioId::B1,
        ScenarioId::B2,
        ScenarioId::B3,
        ScenarioId::StepAmp,
        ScenarioId::StepPhase,
        ScenarioId::FaultSynth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::A1 => "A1",
            ScenarioId::A2 => "A2",
            ScenarioId::A3 => "A3",
            ScenarioId::B1 => "B1",
            ScenarioId::B2 => "B2",
            ScenarioId::B3 => "B3",
            ScenarioId::StepAmp => "STEP_AMP",
            ScenarioId::StepPhase => "STEP_PHASE",
            ScenarioId::FaultSynth => "FAULT_SYNTH",
        }
    }

    pub fn is_step(self) -> bool {
        matches!(self, ScenarioId::StepAmp | ScenarioId::StepPhase)
    }

    /// Stationary scenarios have time-invariant parameters after start-up.
    pub fn is_stationary(self) -> bool {
        matches!(self, ScenarioId::A1 | ScenarioId::A2 | ScenarioId::A3)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Scenario description. Unset parameters take per-scenario defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Steady frequency deviation in Hz (A1-A3, B2, B3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_offset_hz: Option<f64>,
    /// Harmonic amplitude relative to the fundamental (A2, A3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_level: Option<f64>,
    /// Single harmonic order for A2; all of `2..=M+1` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_order: Option<usize>,
    /// Amplitude and phase modulation factor (B2, B3) or fault amplitude dip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation_depth: Option<f64>,
    /// Modulation or fault oscillation frequency in Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation_freq_hz: Option<f64>,
    /// Ramp rate in Hz/s (B1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_rate_hz_s: Option<f64>,
    /// Ramp start and end absolute frequencies in Hz (B1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_from_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_to_hz: Option<f64>,
    /// Step size: pu for STEP_AMP, rad for STEP_PHASE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    /// Fault decay rate in 1/s and phase swing in rad (FAULT_SYNTH).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_phase_swing: Option<f64>,
    /// Onset of the ramp, step or fault in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        Self {
            id,
            freq_offset_hz: None,
            harmonic_level: None,
            harmonic_order: None,
            modulation_depth: None,
            modulation_freq_hz: None,
            ramp_rate_hz_s: None,
            ramp_from_hz: None,
            ramp_to_hz: None,
            step_size: None,
            fault_decay: None,
            fault_phase_swing: None,
            start_s: None,
            snr_db: None,
            seed: 0,
            duration_s: None,
        }
    }

    pub fn with_offset(mut self, hz: f64) -> Self {
        self.freq_offset_hz = Some(hz);
        self
    }

    pub fn with_noise(mut self, snr_db: Option<f64>, seed: u64) -> Self {
        self.snr_db = snr_db;
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, s: f64) -> Self {
        self.duration_s = Some(s);
        self
    }

    pub fn with_harmonic(mut self, order: usize) -> Self {
        self.harmonic_order = Some(order);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn offset_hz(&self) -> f64 {
        self.freq_offset_hz.unwrap_or(0.0)
    }

    pub fn harmonic_level(&self) -> f64 {
        self.harmonic_level.unwrap_or(match self.id {
            ScenarioId::A2 => 0.01,
            ScenarioId::A3 => 0.1,
            _ => 0.0,
        })
    }

    pub fn modulation_depth(&self) -> f64 {
        self.modulation_depth.unwrap_or(match self.id {
            ScenarioId::FaultSynth => 0.2,
            _ => 0.1,
        })
    }

    pub fn modulation_freq_hz(&self) -> f64 {
        self.modulation_freq_hz.unwrap_or(match self.id {
            ScenarioId::B3 => 5.0,
            ScenarioId::FaultSynth => 1.0,
            _ => 2.0,
        })
    }

    pub fn ramp_rate_hz_s(&self) -> f64 {
        self.ramp_rate_hz_s.unwrap_or(1.0)
    }

    pub fn ramp_from_hz(&self) -> f64 {
        self.ramp_from_hz.unwrap_or(45.0)
    }

    pub fn ramp_to_hz(&self) -> f64 {
        self.ramp_to_hz.unwrap_or(75.0)
    }

    pub fn step_size(&self) -> f64 {
        self.step_size.unwrap_or(match self.id {
            ScenarioId::StepPhase => PI / 18.0,
            _ => 0.1,
        })
    }

    pub fn fault_decay(&self) -> f64 {
        self.fault_decay.unwrap_or(1.0)
    }

    pub fn fault_phase_swing(&self) -> f64 {
        self.fault_phase_swing.unwrap_or(0.5)
    }

    pub fn start_s(&self) -> f64 {
        self.start_s.unwrap_or(match self.id {
            ScenarioId::B1 => 1.0,
            ScenarioId::StepAmp | ScenarioId::StepPhase | ScenarioId::FaultSynth => 1.5,
            _ => 0.0,
        })
    }

    /// Ramp end time for B1.
    pub fn ramp_end_s(&self) -> f64 {
        self.start_s() + (self.ramp_to_hz() - self.ramp_from_hz()) / self.ramp_rate_hz_s()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s.unwrap_or(match self.id {
            ScenarioId::B1 => self.ramp_end_s() + 0.5,
            ScenarioId::B2 | ScenarioId::B3 => 3.0,
            ScenarioId::StepAmp | ScenarioId::StepPhase => 2.0,
            ScenarioId::FaultSynth => 4.0,
            _ => 1.5,
        })
    }

    /// Harmonic orders injected by the scenario.
    pub fn harmonic_orders(&self, cfg: &SystemConfig) -> Vec<usize> {
        match (self.id, self.harmonic_order) {
            (ScenarioId::A2 | ScenarioId::A3, Some(h)) => vec![h],
            (ScenarioId::A2 | ScenarioId::A3, None) => (2..=cfg.harmonics + 1).collect(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let d = self.duration_s();
        if !(d.is_finite() && d > 0.0) {
            return bad(format!("duration must be positive, got {d}"));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return bad("snr_db is NaN".into());
            }
        }
        if self.id == ScenarioId::B1 && !(self.ramp_rate_hz_s() > 0.0 && self.ramp_to_hz() > self.ramp_from_hz()) {
            return bad("ramp needs a positive rate and increasing end points".into());
        }
        if let Some(h) = self.harmonic_order {
            if h < 2 {
                return bad(format!("harmonic order must be >= 2, got {h}"));
            }
        }
        let nyquist = 0.5 / cfg.sample_period;
        for h in self.harmonic_orders(cfg) {
            let f = h as f64 * (cfg.f0 + self.offset_hz().abs());
            if f - cfg.f0 >= nyquist {
                return bad(format!("harmonic {h} aliases at the sampling rate"));
            }
        }
        Ok(())
    }
}

/// Instantaneous true values at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    /// pu
    pub amplitude: f64,
    /// rad, relative to the nominal rotating frame
    pub phase: f64,
    /// Baseband frequency deviation, rad/s.
    pub freq: f64,
    /// rad/s^2
    pub rocof: f64,
    /// 1/s
    pub damping: f64,
    /// 1/s^2
    pub rocod: f64,
}

impl TruthPoint {
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Per-sample analytic truth, aligned with the sample stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthTrack {
    pub start_index: i64,
    pub points: Vec<TruthPoint>,
}

impl GroundTruthTrack {
    pub fn at(&self, n: i64) -> Option<&TruthPoint> {
        usize::try_from(n - self.start_index).ok().and_then(|i| self.points.get(i))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean squared fundamental amplitude.
    pub fn mean_power(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.amplitude * p.amplitude).sum::<f64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub spec: ScenarioSpec,
    pub stream: SampleStream,
    pub truth: GroundTruthTrack,
}

/// Amplitude `a` and phase `φ` with their first two time derivatives.
#[derive(Debug, Clone, Copy)]
struct Law {
    a: [f64; 3],
    phi: [f64; 3],
}

impl Law {
    fn truth(&self) -> TruthPoint {
        let [a, da, dda] = self.a;
        let [phi, dphi, ddphi] = self.phi;
        let r = da / a;
        TruthPoint {
            amplitude: a,
            phase: phi,
            freq: dphi,
            rocof: ddphi,
            damping: -r,
            rocod: -(dda / a - r * r),
        }
    }
}

fn constant(a: f64, phi: f64, w: f64, t: f64) -> Law {
    Law { a: [a, 0.0, 0.0], phi: [phi + w * t, w, 0.0] }
}

fn law_at(spec: &ScenarioSpec, f0: f64, t: f64) -> Law {
    let offset = TAU * spec.offset_hz();
    match spec.id {
        ScenarioId::A1 | ScenarioId::A2 | ScenarioId::A3 => constant(1.0, 0.0, offset, t),
        ScenarioId::B1 => {
            let t0 = spec.start_s();
            let t1 = spec.ramp_end_s();
            let rate = TAU * spec.ramp_rate_hz_s();
            let dev0 = TAU * (spec.ramp_from_hz() - f0);
            if t < t0 {
                Law { a: [1.0, 0.0, 0.0], phi: [dev0 * t, dev0, 0.0] }
            } else if t <= t1 {
                let tau = t - t0;
                Law {
                    a: [1.0, 0.0, 0.0],
                    phi: [dev0 * t + 0.5 * rate * tau * tau, dev0 + rate * tau, rate],
                }
            } else {
                let span = t1 - t0;
                let dev1 = dev0 + rate * span;
                let phi1 = dev0 * t1 + 0.5 * rate * span * span;
                Law { a: [1.0, 0.0, 0.0], phi: [phi1 + dev1 * (t - t1), dev1, 0.0] }
            }
        }
        ScenarioId::B2 | ScenarioId::B3 => {
            let k = spec.modulation_depth();
            let wm = TAU * spec.modulation_freq_hz();
            let (s, c) = (wm * t).sin_cos();
            // (1 + k cos wm t) e^{j k cos(wm t - π)}
            Law {
                a: [1.0 + k * c, -k * wm * s, -k * wm * wm * c],
                phi: [offset * t - k * c, offset + k * wm * s, k * wm * wm * c],
            }
        }
        ScenarioId::StepAmp => {
            let a = if t >= spec.start_s() { 1.0 + spec.step_size() } else { 1.0 };
            constant(a, 0.0, offset, t)
        }
        ScenarioId::StepPhase => {
            let phi = if t >= spec.start_s() { spec.step_size() } else { 0.0 };
            constant(1.0, phi, offset, t)
        }
        ScenarioId::FaultSynth => {
            let tau = t - spec.start_s();
            if tau < 0.0 {
                return constant(1.0, 0.0, offset, t);
            }
            let d = spec.modulation_depth();
            let s = spec.fault_decay();
            let w = TAU * spec.modulation_freq_hz();
            let beta = spec.fault_phase_swing();
            let e = (-s * tau).exp();
            let (sn, cs) = (w * tau).sin_cos();
            // g = e^{-s τ} cos(w τ), p = e^{-s τ} sin(w τ)
            let g = [e * cs, e * (-s * cs - w * sn), e * ((s * s - w * w) * cs + 2.0 * s * w * sn)];
            let p = [e * sn, e * (w * cs - s * sn), e * ((s * s - w * w) * sn - 2.0 * s * w * cs)];
            Law {
                a: [1.0 - d * g[0], -d * g[1], -d * g[2]],
                phi: [offset * t + beta * p[0], offset + beta * p[1], beta * p[2]],
            }
        }
    }
}

/// Generates samples `n = 0 .. duration/T` and the matching truth.
pub fn generate(spec: &ScenarioSpec, cfg: &SystemConfig) -> Result<GeneratedScenario> {
    spec.validate(cfg)?;
    let t_s = cfg.sample_period;
    let count = (spec.duration_s() / t_s).round() as usize + 1;
    let w0 = cfg.omega0();
    let orders = spec.harmonic_orders(cfg);
    let level = spec.harmonic_level();

    let mut samples = Vec::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    for n in 0..count {
        let t = n as f64 * t_s;
        let law = law_at(spec, cfg.f0, t);
        let truth = law.truth();
        let mut y = truth.phasor();
        if level != 0.0 {
            let theta = w0 * t + truth.phase;
            for &h in &orders {
                y += Complex64::from_polar(level, h as f64 * theta - w0 * t);
            }
        }
        samples.push(y);
        points.push(truth);
    }
    let mut out = GeneratedScenario {
        stream: SampleStream::new(samples, 0),
        truth: GroundTruthTrack { start_index: 0, points },
        spec: spec.clone(),
    };
    if let Some(snr) = out.spec.snr_db {
        let power = out.truth.mean_power();
        add_noise(&mut out.stream, power, snr, out.spec.seed);
    }
    Ok(out)
}

/// Adds circular complex white Gaussian noise at `snr_db` relative to a
/// fundamental of mean power `signal_power`. Infinite SNR leaves the
/// stream untouched.
pub fn add_noise(stream: &mut SampleStream, signal_power: f64, snr_db: f64, seed: u64) {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return;
    }
    let noise_power = signal_power * 10f64.powf(-snr_db / 10.0);
    let scale = (0.5 * noise_power).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in &mut stream.samples {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *y += Complex64::new(re * scale, im * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_a1_is_constant() {
        let cfg = SystemConfig::default();
        let g = generate(&ScenarioSpec::new(ScenarioId::A1).with_duration(0.1), &cfg).unwrap();
        assert!(g.stream.samples.iter().all(|y| *y == Complex64::new(1.0, 0.0)));
        assert!(g.truth.points.iter().all(|p| p.freq == 0.0 && p.rocof == 0.0 && p.damping == 0.0));
    }

    #[test]
    fn ramp_passes_nominal_at_sixteen_seconds() {
        let law = law_at(&ScenarioSpec::new(ScenarioId::B1), 60.0, 16.0).truth();
        assert!(law.freq.abs() < 1e-9);
        assert!((law.rocof - TAU).abs() < 1e-12);
    }

    #[test]
    fn ids_parse_case_insensitively() {
        assert_eq!("step_amp".parse::<ScenarioId>().unwrap(), ScenarioId::StepAmp);
        assert!(matches!("C1".parse::<ScenarioId>(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn fault_starts_with_amplitude_dip() {
        let spec = ScenarioSpec::new(ScenarioId::FaultSynth);
        let before = law_at(&spec, 60.0, 1.499).truth();
        let after = law_at(&spec, 60.0, 1.5).truth();
        assert_eq!(before.amplitude, 1.0);
        assert!((after.amplitude - 0.8).abs() < 1e-12);
        assert!((after.freq - 0.5 * TAU).abs() < 1e-12);
    }
}
