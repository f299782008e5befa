//! Gamma function, Pochhammer symbol and the Gauss hypergeometric function
//! on the real line, including the analytic continuation to z < -1.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Hard cap on the number of series terms before giving up.
pub const SERIES_TERM_CAP: usize = 10_000;

/// Relative size of the next term at which the series is considered summed.
pub const SERIES_REL_TOL: f64 = 1e-14;

/// Central-difference step used by [`lemma_b2_lhs`].
pub const LEMMA_LHS_STEP: f64 = 1e-5;

/// Parameters of a real Gauss hypergeometric evaluation 2F1(a, b; c; z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeometricArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl HypergeometricArgs {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Self {
        Self { a, b, c, z }
    }
}

fn is_integer(x: f64) -> bool {
    x.is_finite() && x == x.round()
}

fn is_nonpositive_integer(x: f64) -> bool {
    is_integer(x) && x <= 0.0
}

/// sin(pi x) with the argument reduced exactly, so that zeros at the integers
/// are reproduced to full relative accuracy.
fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64).rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

/// Gamma function for real arguments (Lanczos approximation, reflection for x < 1/2).
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Precondition("gamma of NaN".into()));
    }
    if is_nonpositive_integer(x) {
        return Err(Error::GammaPole(x));
    }
    if x < 0.5 {
        let s = sin_pi(x);
        return Ok(PI / (s * gamma(1.0 - x)?));
    }
    if is_integer(x) && x <= 171.0 {
        // exact factorial where representable
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return Ok(acc);
    }
    let y = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        sum += c / (y + i as f64);
    }
    let t = y + LANCZOS_G + 0.5;
    // split the power to delay overflow
    let half = t.powf(0.5 * (y + 0.5));
    Ok((2.0 * PI).sqrt() * half * (half * (-t).exp()) * sum)
}

/// Rising factorial (x)_k = x (x+1) ... (x+k-1), with (x)_0 = 1.
pub fn pochhammer(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (x + i as f64))
}

fn sum_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut comp = 0.0_f64;
    for k in 0..SERIES_TERM_CAP {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        if term == 0.0 {
            return Ok(sum);
        }
        // Kahan-compensated accumulation
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term.abs() <= SERIES_REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        terms: SERIES_TERM_CAP,
        z,
    })
}

/// Gauss hypergeometric series for |z| < 1.
///
/// For z < -1/2 the series is summed in the Pfaff variable z/(z-1), which lies
/// in (1/3, 1/2); near z = +1 the direct series is used and reports
/// non-convergence once the term cap is exhausted.
pub fn hyp2f1_series(args: HypergeometricArgs) -> Result<f64> {
    let HypergeometricArgs { a, b, c, z } = args;
    if is_nonpositive_integer(c) {
        return Err(Error::Precondition(format!(
            "c = {c} is a non-positive integer"
        )));
    }
    if !(z.abs() < 1.0) {
        return Err(Error::Precondition(format!("series needs |z| < 1, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z < -0.5 {
        let w = z / (z - 1.0);
        return Ok((1.0 - z).powf(-a) * sum_series(a, c - b, c, w)?);
    }
    sum_series(a, b, c, z)
}

/// Analytic continuation of 2F1 to z < -1 through two series in 1/z.
pub fn hyp2f1_continued(args: HypergeometricArgs) -> Result<f64> {
    let HypergeometricArgs { a, b, c, z } = args;
    if !(z < -1.0) {
        return Err(Error::Precondition(format!(
            "continuation needs z < -1, got {z}"
        )));
    }
    for (name, v) in [("a", a), ("b", b), ("c", c), ("a-b", a - b)] {
        if is_integer(v) {
            return Err(Error::ContinuationHypothesis(format!(
                "{name} = {v} is an integer"
            )));
        }
    }
    let w = 1.0 / z;
    let gc = gamma(c)?;
    let first = gc * gamma(a - b)? / (gamma(a)? * gamma(c - b)?)
        * (-z).powf(-b)
        * hyp2f1_series(HypergeometricArgs::new(b, 1.0 + b - c, 1.0 + b - a, w))?;
    let second = gc * gamma(b - a)? / (gamma(b)? * gamma(c - a)?)
        * (-z).powf(-a)
        * hyp2f1_series(HypergeometricArgs::new(a, 1.0 + a - c, 1.0 + a - b, w))?;
    Ok(first + second)
}

/// 2F1 on z < 1, dispatching between the series, its Pfaff form and the
/// continuation.
pub fn hyp2f1(args: HypergeometricArgs) -> Result<f64> {
    let z = args.z;
    if z.abs() < 1.0 {
        return hyp2f1_series(args);
    }
    if z >= 1.0 {
        return Err(Error::Precondition(format!("z = {z} on or past the branch point")));
    }
    let continuable = [args.a, args.b, args.c, args.a - args.b]
        .iter()
        .all(|v| !is_integer(*v));
    if z >= -4.0 || !continuable {
        let w = z / (z - 1.0);
        return Ok((1.0 - z).powf(-args.a) * sum_series(args.a, args.c - args.b, args.c, w)?);
    }
    hyp2f1_continued(args)
}

/// Centered finite-difference derivative in beta of
/// eps^{-b} (beta - beta0) 2F1(1/2, b; 3/2; -c0 (beta - beta0)^2 / eps).
///
/// The closed form of this derivative is (eps + c0 (beta - beta0)^2)^{-b}.
pub fn lemma_b2_lhs(beta: f64, beta0: f64, eps: f64, c0: f64, b: f64) -> Result<f64> {
    if !(c0 > 0.0) || eps < c0 {
        return Err(Error::Precondition(format!(
            "need eps >= c0 > 0, got eps = {eps}, c0 = {c0}"
        )));
    }
    if (beta - beta0).abs() > 1.0 {
        return Err(Error::Precondition(format!(
            "|beta - beta0| = {} exceeds 1",
            (beta - beta0).abs()
        )));
    }
    if !(b < 2.0) || b == 0.5 {
        return Err(Error::Precondition(format!("b = {b} outside (-inf, 2) minus {{1/2}}")));
    }
    let f = |beta: f64| -> Result<f64> {
        let d = beta - beta0;
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok(d * hyp2f1(HypergeometricArgs::new(0.5, b, 1.5, -c0 * d * d / eps))?)
    };
    let h = LEMMA_LHS_STEP;
    Ok((f(beta + h)? - f(beta - h)?) / (2.0 * h) / eps.powf(b))
}
