use ghslab::quad::{adaptive, QuadOptions};
use ghslab::specfun::{
    gamma, hyp2f1, hyp2f1_continued, hyp2f1_series, lemma_b2_lhs, HypergeometricArgs,
};
use proptest::prelude::*;

/// 2F1(1/2, b; 3/2; -X^2) = (1/X) * integral_0^X (1 + s^2)^{-b} ds.
fn euler_oracle(b: f64, z: f64) -> f64 {
    let x = (-z).sqrt();
    let opts = QuadOptions {
        rel_tol: 1e-14,
        ..QuadOptions::default()
    };
    let r = adaptive(|s: f64| (1.0 + s * s).powf(-b), 0.0, x, &[], &opts).unwrap();
    assert!(r.converged);
    r.value / x
}

#[test]
fn gamma_matches_statrs_on_range() {
    let mut x = -19.95;
    while x < 50.0 {
        let ours = gamma(x).unwrap();
        let theirs = statrs::function::gamma::gamma(x);
        assert!(
            ((ours - theirs) / theirs).abs() < 1e-12,
            "x = {x}: {ours} vs {theirs}"
        );
        x += 0.173;
    }
}

#[test]
fn gamma_recurrence() {
    for &x in &[0.3, 1.7, 5.25, -2.4, 12.9] {
        let lhs = gamma(x + 1.0).unwrap();
        let rhs = x * gamma(x).unwrap();
        assert!(((lhs - rhs) / rhs).abs() < 1e-13);
    }
}

#[test]
fn arctan_identity_on_grid() {
    for k in 1..=9 {
        let t = k as f64 / 10.0;
        let v = hyp2f1_series(HypergeometricArgs::new(0.5, 1.0, 1.5, -t * t)).unwrap();
        assert!((v - t.atan() / t).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn series_matches_euler_integral_at_minus_point_nine() {
    let v = hyp2f1_series(HypergeometricArgs::new(0.5, 0.3, 1.5, -0.9)).unwrap();
    let o = euler_oracle(0.3, -0.9);
    assert!(((v - o) / o).abs() < 1e-13, "{v} vs {o}");
}

#[test]
fn continuation_matches_euler_integral() {
    for &z in &[-1.5, -4.0, -30.0, -1e3] {
        let v = hyp2f1_continued(HypergeometricArgs::new(0.5, 0.3, 1.5, z)).unwrap();
        let o = euler_oracle(0.3, z);
        assert!(((v - o) / o).abs() < 1e-12, "z = {z}: {v} vs {o}");
    }
}

#[test]
fn dispatcher_agrees_with_both_branches() {
    for &z in &[-0.3, -0.8, -2.0, -10.0, -1e5] {
        let v = hyp2f1(HypergeometricArgs::new(0.5, 0.3, 1.5, z)).unwrap();
        let o = euler_oracle(0.3, z);
        assert!(((v - o) / o).abs() < 1e-12, "z = {z}");
    }
}

/// Each branch is extrapolated linearly to z = -1 from its own side; the two
/// limits must agree. Comparing raw values at -1 +/- 1e-4 would instead measure
/// F'(-1) * 2e-4, which is about 2e-5 here.
#[test]
fn seam_is_continuous() {
    let d = 1e-4;
    let s = |z: f64| hyp2f1_series(HypergeometricArgs::new(0.5, 0.3, 1.5, z)).unwrap();
    let c = |z: f64| hyp2f1_continued(HypergeometricArgs::new(0.5, 0.3, 1.5, z)).unwrap();
    let inside = 2.0 * s(-1.0 + d) - s(-1.0 + 2.0 * d);
    let outside = 2.0 * c(-1.0 - d) - c(-1.0 - 2.0 * d);
    assert!(((inside - outside) / inside).abs() < 1e-6);
}

#[test]
fn lemma_b2_closed_form_on_grid() {
    for i in 0..10 {
        let beta = -0.95 + 0.19 * i as f64;
        for j in 0..10 {
            let b = -1.3 + 0.31 * j as f64;
            let lhs = lemma_b2_lhs(beta, 0.0, 2.0, 1.0, b).unwrap();
            let rhs = (2.0 + beta * beta).powf(-b);
            assert!(((lhs - rhs) / rhs).abs() < 1e-6, "beta = {beta}, b = {b}");
        }
    }
}

#[test]
fn lemma_b2_spec_examples() {
    let v = lemma_b2_lhs(0.5, 0.0, 2.0, 1.0, 0.25).unwrap();
    assert!(((v - 2.25f64.powf(-0.25)) / v).abs() < 1e-6);
    let v = lemma_b2_lhs(0.5, 0.0, 2.0, 1.0, 1.5).unwrap();
    assert!(((v - 2.25f64.powf(-1.5)) / v).abs() < 1e-6);
}

proptest! {
    #[test]
    fn series_is_symmetric_in_a_b(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        c in 0.2f64..4.0,
        z in -0.95f64..0.8,
    ) {
        let l = hyp2f1_series(HypergeometricArgs::new(a, b, c, z)).unwrap();
        let r = hyp2f1_series(HypergeometricArgs::new(b, a, c, z)).unwrap();
        prop_assert!((l - r).abs() <= 1e-13 * l.abs().max(1.0));
    }

    #[test]
    fn series_at_zero_is_exactly_one(a in -5.0f64..5.0, b in -5.0f64..5.0, c in 0.1f64..5.0) {
        prop_assert_eq!(hyp2f1_series(HypergeometricArgs::new(a, b, c, 0.0)).unwrap(), 1.0);
    }
}
