mod common;

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use sac_core::design::WeightMatrix;
use sac_core::dfb::{Branch, RawEstimates};
use sac_core::sac::{adapt_filters, adapt_filters_with, unshift_estimates, HarmonicPlacement, Param};
use sac_core::{
    design_prototype, generate, DesignSpec, FilterBank, PriorParams, SacOptions, SacState, SacThresholds, ScenarioId,
    ScenarioSpec, SystemConfig,
};

use common::{cos_rows, kkt_equality, rel_diff, sin_rows};

fn prototype() -> &'static FilterBank {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    BANK.get_or_init(|| design_prototype(&SystemConfig::default(), &DesignSpec::default()).unwrap().0)
}

#[test]
fn adapted_bank_rejects_off_nominal_harmonic_images() {
    let cfg = SystemConfig::default();
    let f = TAU * 5.0;
    let b = adapt_filters(prototype(), f, &cfg).unwrap();
    let t = cfg.sample_period;
    assert!((b.amplitude_response(Branch::Phasor, 0.0) - 1.0).abs() < 1e-12);
    for l in 1..=cfg.harmonics {
        let w = l as f64 * (cfg.omega0() + f) * t;
        for br in [Branch::Phasor, Branch::First, Branch::Second] {
            assert!(b.amplitude_response(br, w).abs() <= 1e-10, "{br:?} image {l}");
        }
    }
}

#[test]
fn baseband_placement_matches_kkt() {
    let cfg = SystemConfig::default();
    let h = cfg.half_order();
    let t = cfg.sample_period;
    for f in [-TAU * 12.0, -TAU * 0.3, TAU * 4.0, TAU * 14.5] {
        let b = adapt_filters_with(prototype(), f, &cfg, HarmonicPlacement::Baseband).unwrap();
        let mut ws = vec![0.0];
        ws.extend((1..=cfg.harmonics).map(|l| (l as f64 * cfg.omega0() + (l + 1) as f64 * f) * t));
        let mut d = vec![0.0; ws.len()];
        d[0] = 1.0;
        let a0 = kkt_equality(WeightMatrix::even(h).diag(), &cos_rows(h, &ws), &d, prototype().a0()).unwrap();
        let a1 = kkt_equality(WeightMatrix::odd(h).diag(), &sin_rows(h, &ws[1..]), &d[1..], prototype().a1()).unwrap();
        assert!(rel_diff(b.a0(), &a0) < 1e-8);
        assert!(rel_diff(b.a1(), &a1) < 1e-8);
    }
}

#[test]
fn nominal_signal_is_a_fixed_point() {
    let cfg = SystemConfig::default();
    let g = generate(&ScenarioSpec::new(ScenarioId::A1).with_duration(0.5), &cfg).unwrap();
    let mut st = SacState::new(cfg, prototype().clone(), SacOptions::default()).unwrap();
    for f in st.run(&g.stream).unwrap() {
        assert_eq!(f.iterations, 0);
        assert!(!f.adapted_filters);
        assert!((f.phasor - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(f.freq.abs() < 1e-9 && f.rocof.abs() < 1e-6);
    }
}

#[test]
fn runs_are_deterministic_and_reset_restores_state() {
    let cfg = SystemConfig::default();
    let g = generate(&ScenarioSpec::new(ScenarioId::B3).with_noise(Some(60.0), 4).with_duration(0.6), &cfg).unwrap();
    let mut st = SacState::new(cfg, prototype().clone(), SacOptions::default()).unwrap();
    let a = st.run(&g.stream).unwrap();
    st.reset();
    let b = st.run(&g.stream).unwrap();
    let mut fresh = SacState::new(cfg, prototype().clone(), SacOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, fresh.run(&g.stream).unwrap());
}

#[test]
fn offset_tone_converges_over_reports() {
    let cfg = SystemConfig::default();
    let g = generate(&ScenarioSpec::new(ScenarioId::A1).with_offset(-7.3), &cfg).unwrap();
    let mut st = SacState::new(cfg, prototype().clone(), SacOptions::default()).unwrap();
    let frames = st.run(&g.stream).unwrap();
    let last = frames.last().unwrap();
    assert!((last.freq_hz() - 52.7).abs() < 1e-4);
    assert!(st.bank_frequency().is_some_and(|w| (w / TAU + 7.3).abs() < 1e-3));
    let truth = g.truth.at(last.report_index).unwrap();
    assert!((last.phasor - truth.phasor()).norm() < 1e-4);
}

#[test]
fn guard_trip_reports_priors() {
    let cfg = SystemConfig::default();
    let g = generate(&ScenarioSpec::new(ScenarioId::A1).with_duration(0.2), &cfg).unwrap();
    let mut stream = g.stream.clone();
    for y in &mut stream.samples {
        *y = Complex64::new(0.0, 0.0);
    }
    let mut st = SacState::new(cfg, prototype().clone(), SacOptions::default()).unwrap();
    let frames = st.run(&stream).unwrap();
    assert!(frames.iter().all(|f| f.fault.is_some() && f.params() == PriorParams::default()));
}

fn raw(omega: f64, alpha: f64, sigma: f64, gamma: f64) -> RawEstimates {
    RawEstimates {
        z: Complex64::new(1.0, 0.0),
        z1: Complex64::new(0.0, 0.0),
        z2: Complex64::new(0.0, 0.0),
        omega,
        alpha,
        sigma,
        gamma,
        valid: true,
    }
}

proptest! {
    #[test]
    fn unshifted_values_respect_upper_thresholds(
        r in (-300.0..300.0f64, -300.0..300.0f64, -10.0..10.0f64, -300.0..300.0f64),
        p in (-94.0..94.0f64, -100.0..100.0f64, -4.0..4.0f64, -110.0..110.0f64),
    ) {
        let th = SacThresholds::default();
        let prior = PriorParams::new(p.0, p.1, p.2, p.3);
        let est = raw(r.0, r.1, r.2, r.3);
        let u = unshift_estimates(&est, &prior, &th);
        for q in Param::ALL {
            let v = q.of(&u.params);
            prop_assert!(v.abs() <= th.band(q).max);
            let sum = q.of(&prior) + q.of(&PriorParams::new(r.0, r.1, r.2, r.3));
            if u.rejected.contains(q) {
                prop_assert_eq!(v, q.of(&prior));
            } else {
                prop_assert!((v - sum).abs() < 1e-12 * (1.0 + sum.abs()));
            }
        }
    }
}
