mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sac_core::design::contraction::{certificate, Family};
use sac_core::design::{design_prototype, solve_equality_min_norm, solve_qp_active_set, WeightMatrix};
use sac_core::{DesignSpec, Error, SystemConfig};

use common::{kkt_equality, rel_diff, weighted};

#[test]
fn equality_projection_matches_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..30 {
        let p: Vec<f64> = (0..40).map(|_| rng.random_range(0.1..3.0)).collect();
        let g = DMatrix::from_fn(10, 40, |_, _| rng.random_range(-1.0..1.0));
        let d: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_equality_min_norm(&WeightMatrix::new(p.clone()), &g, &d, &c).unwrap();
        let reference = kkt_equality(&p, &g, &d, &c).unwrap();
        assert!(rel_diff(&x, &reference) < 1e-10);
        let res = &g * DVector::from_column_slice(&x) - DVector::from_column_slice(&d);
        assert!(res.amax() < 1e-12);
    }
}

#[test]
fn dependent_row_is_reported() {
    let mut g = DMatrix::from_fn(3, 6, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0);
    let r0 = g.row(0).clone_owned();
    let r1 = g.row(1).clone_owned();
    g.set_row(2, &(r0 * 2.0 - r1));
    let err = solve_equality_min_norm(&WeightMatrix::new(vec![1.0; 6]), &g, &[1.0, 0.0, 0.5], &[0.0; 6]).unwrap_err();
    assert!(matches!(err, Error::RedundantConstraint { row: 2 }));
}

struct Problem {
    p: Vec<f64>,
    g: DMatrix<f64>,
    gv: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, me: usize, mi: usize) -> Problem {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = DMatrix::from_fn(me, n, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(mi, n, |_, _| rng.random_range(-1.0..1.0));
    let x0v = DVector::from_column_slice(&x0);
    Problem {
        p: (0..n).map(|_| rng.random_range(0.2..2.0)).collect(),
        gv: (&g * &x0v).iter().copied().collect(),
        b: (&a * &x0v).iter().map(|v| v + rng.random_range(0.0..0.3)).collect(),
        c: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        g,
        a,
    }
}

#[test]
fn qp_solution_satisfies_kkt_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let q = random_problem(&mut rng, 12, 3, 20);
        let s = solve_qp_active_set(&WeightMatrix::new(q.p.clone()), &q.g, &q.gv, &q.a, &q.b, &q.c).unwrap();
        let x = DVector::from_column_slice(&s.x);
        let slack = DVector::from_column_slice(&q.b) - &q.a * &x;
        assert!(slack.min() > -1e-9);
        assert!((&q.g * &x - DVector::from_column_slice(&q.gv)).amax() < 1e-10);
        // Stationarity: 2P(x - c) + G' nu + A' mu = 0 with mu >= 0 and mu_i slack_i = 0.
        let mu = DVector::from_column_slice(&s.ineq_multipliers);
        let nu = DVector::from_column_slice(&s.eq_multipliers);
        assert!(mu.min() >= -1e-10);
        for i in 0..mu.len() {
            assert!((mu[i] * slack[i]).abs() < 1e-9);
        }
        let grad = DVector::from_iterator(12, (0..12).map(|i| 2.0 * q.p[i] * (s.x[i] - q.c[i])));
        let r = grad + q.g.transpose() * nu + q.a.transpose() * mu;
        assert!(r.amax() < 1e-8, "stationarity residual {}", r.amax());
    }
}

#[test]
fn qp_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let q = random_problem(&mut rng, 6, 1, 8);
        let s = solve_qp_active_set(&WeightMatrix::new(q.p.clone()), &q.g, &q.gv, &q.a, &q.b, &q.c).unwrap();
        let f_opt = weighted(&q.p, &s.x, &q.c);
        let gn = q.g.row(0).norm_squared();
        let mut tried = 0;
        while tried < 200 {
            let mut y = DVector::from_iterator(6, s.x.iter().map(|v| v + rng.random_range(-0.5..0.5)));
            // Project onto the equality hyperplane.
            let viol = (q.g.row(0) * &y)[0] - q.gv[0];
            y -= q.g.row(0).transpose() * (viol / gn);
            if (&q.a * &y).iter().zip(&q.b).any(|(l, r)| *l > *r) {
                continue;
            }
            tried += 1;
            assert!(weighted(&q.p, y.as_slice(), &q.c) >= f_opt - 1e-12);
        }
    }
}

#[test]
fn loosening_contraction_never_raises_norms() {
    let cfg = SystemConfig::default();
    let tight = DesignSpec::default();
    let loose = DesignSpec { l_omega: 0.5, l_sigma: 0.5, l_alpha: 0.95, l_gamma: 0.95, ..tight };
    let (_, rt) = design_prototype(&cfg, &tight).unwrap();
    let (_, rl) = design_prototype(&cfg, &loose).unwrap();
    assert_eq!(rt.norms.a0, rl.norms.a0);
    assert!(rl.norms.a1 <= rt.norms.a1 * (1.0 + 1e-9));
    assert!(rl.norms.a2 <= rt.norms.a2 * (1.0 + 1e-9));
}

#[test]
fn certificate_respects_factors_for_other_orders() {
    for (order, harmonics) in [(32, 5), (48, 7)] {
        let cfg = SystemConfig { order, harmonics, ..SystemConfig::default() };
        let spec = DesignSpec::default();
        let (bank, report) = design_prototype(&cfg, &spec).unwrap();
        let cert = certificate(&bank, spec.ranges(), 2001);
        for f in Family::ALL {
            assert!(cert.family(f).ratio <= spec.factor(f) + 1e-6, "{f:?} at order {order}");
        }
        assert!((report.dc_gain - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = WeightMatrix::new((0..8).map(|_| rng.random_range(0.5..2.0)).collect());
        let g = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_equality_min_norm(&p, &g, &d, &c).unwrap();
        let x2 = solve_equality_min_norm(&p, &g, &d, &x).unwrap();
        prop_assert!(rel_diff(&x2, &x) < 1e-12);
    }
}
