mod common;

use proptest::prelude::*;

use expander_lab::duhamel::{synthesize, ModeBasis};
use expander_lab::geometry::{cone_profile, ConeSpec};
use expander_lab::io::fmt_f64;
use expander_lab::modes_mz::{mz_check, mz_synthesize, Branch};
use expander_lab::numeric::{log_add_exp, solve_tridiagonal};

use common::{bump, fixture};

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn float_text_round_trips(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn log_add_exp_matches_direct_sum(a in -300.0f64..300.0, b in -300.0f64..300.0) {
        let direct = (a.exp() + b.exp()).ln();
        let v = log_add_exp(a, b);
        prop_assert!((v - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        prop_assert_eq!(v, log_add_exp(b, a));
        prop_assert_eq!(log_add_exp(a, f64::NEG_INFINITY), a);
    }

    #[test]
    fn log_add_exp_survives_overflow(a in 700.0f64..1e6, d in 0.0f64..50.0) {
        let v = log_add_exp(a, a - d);
        prop_assert!(v.is_finite() && v >= a && v <= a + std::f64::consts::LN_2 + 1e-9);
    }

    #[test]
    fn tridiagonal_solution_satisfies_the_system(
        rows in prop::collection::vec((-1.0f64..1.0, 2.5f64..4.0, -1.0f64..1.0, -10.0f64..10.0), 1..40),
        flip in any::<bool>(),
    ) {
        let sub: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let diag: Vec<f64> = rows.iter().map(|r| if flip { -r.1 } else { r.1 }).collect();
        let sup: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let rhs: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        let n = diag.len();
        for i in 0..n {
            let mut lhs = diag[i] * x[i];
            if i > 0 { lhs += sub[i] * x[i - 1]; }
            if i + 1 < n { lhs += sup[i] * x[i + 1]; }
            prop_assert!((lhs - rhs[i]).abs() < 1e-10, "row {}: {} vs {}", i, lhs, rhs[i]);
        }
    }

    #[test]
    fn cone_profiles_are_self_similar(n in 2usize..6, slope in 0.0f64..3.0, r_min in 0.1f64..2.0, span in 1.0f64..10.0) {
        let c = cone_profile(&ConeSpec::new(n, slope).unwrap(), r_min, r_min + span, 0.05).unwrap();
        for j in 0..c.len() {
            prop_assert!(c.x_dot_n[j].abs() < 1e-12 * (1.0 + c.radius(j)));
            prop_assert!((c.p[j] - slope * c.q[j]).abs() < 1e-12 * (1.0 + c.q[j]));
        }
    }

    #[test]
    fn cone_rejects_bad_slopes(slope in -1e6f64..-1e-12, n in 2usize..8) {
        prop_assert!(ConeSpec::new(n, slope).is_err());
        prop_assert!(ConeSpec::new(n, f64::NAN).is_err());
        prop_assert!(ConeSpec::new(1, slope.abs()).is_err());
    }

    #[test]
    fn synthesized_mz_data_meets_the_conclusion(seed in 0u64..10_000, eps in 0.001f64..0.02) {
        let t = mz_synthesize(seed, eps, -6.0).unwrap();
        let v = mz_check(&t);
        prop_assert!(v.hypotheses_ok, "violations at {:?}", v.violations);
        prop_assert_eq!(v.y_bound_ok, Some(true));
        prop_assert!(v.branch != Branch::None);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn mode_coefficients_invert_synthesis(c in prop::collection::vec(-1.0f64..1.0, 12)) {
        let f = fixture();
        let basis = ModeBasis::new(&f.spec);
        let back = basis.coefficients(&synthesize(&c, &f.spec)).unwrap();
        for (a, b) in back.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn linearized_operator_is_weighted_symmetric(
        c1 in -5.0f64..5.0, w1 in 0.3f64..3.0, c2 in -5.0f64..5.0, w2 in 0.3f64..3.0,
    ) {
        let f = fixture();
        let mid = 0.5 * f.neck.curve.total_length();
        let u = bump(&f.energy, mid + c1, w1);
        let v = bump(&f.energy, mid + c2, w2);
        let a = f.energy.inner(&u, &f.energy.apply_linear(&v));
        let b = f.energy.inner(&f.energy.apply_linear(&u), &v);
        let scale = f.energy.norm(&u) * f.energy.norm(&f.energy.apply_linear(&v)) + 1e-300;
        prop_assert!((a - b).abs() <= 1e-10 * scale, "{} vs {}", a, b);
    }
}
