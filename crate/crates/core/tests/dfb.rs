use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use sac_core::dfb::{apply_filter_bank, Branch, FilterBank};
use sac_core::{design_prototype, DesignSpec, SystemConfig, WindowVector};

fn bank() -> (SystemConfig, FilterBank) {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    let cfg = SystemConfig::default();
    let b = BANK.get_or_init(|| design_prototype(&cfg, &DesignSpec::default()).unwrap().0);
    (cfg, b.clone())
}

fn direct(taps: &[f64], x: impl Fn(f64) -> Complex64) -> Complex64 {
    let h = (taps.len() - 1) / 2;
    taps.iter().enumerate().map(|(i, c)| x(i as f64 - h as f64) * *c).sum()
}

#[test]
fn responses_match_direct_summation() {
    let (_, b) = bank();
    for w in [0.0, 0.01, 0.1, 0.19634954, 0.7, 2.5] {
        let e = |m: f64| Complex64::from_polar(1.0, w * m);
        let r0 = direct(&b.taps(Branch::Phasor), e);
        let r1 = direct(&b.taps(Branch::First), e);
        let r2 = direct(&b.taps(Branch::Second), e);
        assert!((r0 - b.amplitude_response(Branch::Phasor, w)).norm() < 1e-9);
        assert!((r1 - Complex64::new(0.0, b.amplitude_response(Branch::First, w))).norm() < 1e-9);
        assert!((r2 - b.amplitude_response(Branch::Second, w)).norm() < 1e-9);
    }
    for s in [0.0, 1e-3, 2e-3] {
        let e = |m: f64| Complex64::new((s * m).exp(), 0.0);
        let h0 = b.hyperbolic_response(Branch::Phasor, s).unwrap();
        let h1 = b.hyperbolic_response(Branch::First, s).unwrap();
        assert!((direct(&b.taps(Branch::Phasor), e).re - h0).abs() < 1e-9 * h0.abs().max(1.0));
        let ref1 = direct(&b.taps(Branch::First), e).re;
        assert!((ref1 - h1).abs() < 1e-9 * ref1.abs().max(1.0));
    }
    for c in [1e-5, -3e-4, 1e-3] {
        let chirp = |m: f64| Complex64::from_polar(1.0, 0.5 * c * m * m);
        let gauss = |m: f64| Complex64::new((-0.5 * c * m * m).exp(), 0.0);
        assert!((direct(&b.taps(Branch::Phasor), chirp) - b.chirp_response(Branch::Phasor, c)).norm() < 1e-9);
        assert!((direct(&b.taps(Branch::Second), chirp) - b.chirp_response(Branch::Second, c)).norm() < 1e-6);
        assert!((direct(&b.taps(Branch::Phasor), gauss).re - b.gaussian_response(Branch::Phasor, c)).abs() < 1e-9);
    }
}

#[test]
fn dtft_of_taps_is_real_or_imaginary() {
    let (_, b) = bank();
    for w in (0..50).map(|i| i as f64 * 0.06) {
        let e = |m: f64| Complex64::from_polar(1.0, w * m);
        assert!(direct(&b.taps(Branch::Phasor), e).im.abs() < 1e-12);
        assert!(direct(&b.taps(Branch::First), e).re.abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn filtering_matches_tap_convolution(v in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 65)) {
        let (cfg, b) = bank();
        let vals: Vec<Complex64> = v.iter().map(|(r, i)| Complex64::new(*r, *i)).collect();
        let w = WindowVector::new(vals.clone(), &cfg).unwrap();
        let raw = apply_filter_bank(&w, &b).unwrap();
        let conv = |br: Branch| -> Complex64 { b.taps(br).iter().zip(&vals).map(|(t, x)| x * *t).sum() };
        let tol = 1e-9 * (1.0 + b.a2().iter().map(|c| c.abs()).sum::<f64>());
        prop_assert!((raw.z - conv(Branch::Phasor)).norm() < 1e-12);
        prop_assert!((raw.z1 - conv(Branch::First)).norm() < 1e-9);
        prop_assert!((raw.z2 - conv(Branch::Second)).norm() < tol);
    }

    #[test]
    fn phasor_estimate_is_exact_on_nominal_tone(amp in 0.1..3.0f64, ph in -3.0..3.0f64) {
        let (cfg, b) = bank();
        let x = Complex64::from_polar(amp, ph);
        let w = WindowVector::from_fn(&cfg, |_| x);
        let raw = apply_filter_bank(&w, &b).unwrap();
        prop_assert!((raw.z - x).norm() < 1e-12 * amp);
        prop_assert!(raw.omega.abs() < 1e-9 && raw.sigma.abs() < 1e-9);
    }
}

#[test]
fn nominal_harmonic_images_are_rejected() {
    let (cfg, b) = bank();
    let w0 = TAU * cfg.f0 * cfg.sample_period;
    for l in 1..=cfg.harmonics {
        let w = WindowVector::from_fn(&cfg, |m| Complex64::new(1.0, 0.0) + Complex64::from_polar(0.1, l as f64 * w0 * m));
        let raw = apply_filter_bank(&w, &b).unwrap();
        assert!((raw.z - 1.0).norm() < 1e-10, "harmonic image {l}");
    }
}
