use std::f64::consts::PI;

use ghslab::charsolve::CharSolver;
use ghslab::expcli::parse_config_str;
use ghslab::initdata::{make_benchmark_datum, parse_coeffs, BenchmarkCase, ModelParams};
use ghslab::norms::ols;
use ghslab::output::fmt_f64;
use ghslab::pdecheck::Spectral;
use proptest::prelude::*;

proptest! {
    #[test]
    fn floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn coefficient_lists_round_trip(vs in prop::collection::vec(-1e6f64..1e6, 0..12)) {
        let text = vs.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", ");
        prop_assert_eq!(parse_coeffs(&text).unwrap(), vs);
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC*") {
        let _ = parse_config_str(&text);
    }

    #[test]
    fn config_issues_point_inside_the_text(
        lines in prop::collection::vec("(\\[[a-z]{0,8}\\]?|[a-z_]{1,10} ?= ?[-0-9a-z.,e ]{0,12}|#.*)", 0..12)
    ) {
        let text = lines.join("\n");
        if let Err(issues) = parse_config_str(&text) {
            prop_assert!(!issues.is_empty());
            for i in issues {
                prop_assert!(i.line <= lines.len());
                if i.line > 0 {
                    prop_assert!(i.column >= 1 && i.column <= lines[i.line - 1].chars().count() + 1);
                }
            }
        }
    }

    #[test]
    fn ols_recovers_lines(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 * 0.37).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let f = ols(&xs, &ys);
        prop_assert!((f.slope - a).abs() < 1e-10);
        prop_assert!((f.intercept - b).abs() < 1e-9);
    }

    #[test]
    fn antiderivative_inverts_derivative(
        amps in prop::collection::vec(-1.0f64..1.0, 1..8),
        phase in 0.0f64..1.0,
        anchor in -1.0f64..1.0,
    ) {
        let n = 64;
        let s = Spectral::new(n).unwrap();
        let x: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
        let v: Vec<f64> = x
            .iter()
            .map(|y| {
                amps.iter()
                    .enumerate()
                    .map(|(k, a)| a * (2.0 * PI * (k + 1) as f64 * (y + phase)).cos())
                    .sum()
            })
            .collect();
        let u = s.recover_u(&v, anchor).unwrap();
        let mean = u.iter().sum::<f64>() / n as f64;
        prop_assert!((mean - anchor).abs() < 1e-13);
        let back = s.derivative(&u);
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-11);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Mass, mean-zero and the rho identity hold at any stage before eta*.
    #[test]
    fn frame_invariants_on_random_stages(
        amp in 0.5f64..2.0,
        lam in -5.0f64..-0.3,
        kappa in 0.2f64..3.0,
        frac in 0.0f64..0.999,
    ) {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMin, amp).unwrap();
        let params = ModelParams::new(lam, kappa, 2.0).unwrap();
        let s = CharSolver::new(&d, &params).unwrap();
        let es = s.eta_star().unwrap();
        let f = s.fields_only(&s.stage_from_eta(frac * es)).unwrap();
        prop_assert!((f.mass() - 1.0).abs() < 1e-10);
        prop_assert!(f.ux_mean().abs() < 1e-10);
        for i in 0..f.x.len() {
            let want = f.rho0[i] * f.gamma_x[i].powf(2.0 * lam);
            prop_assert!((f.rho_on_char[i] - want).abs() <= 1e-10 * want.abs().max(1.0));
            prop_assert!(f.gamma_x[i] > 0.0);
        }
    }
}
