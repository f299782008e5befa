//! Periodic initial data as truncated trigonometric series, and the
//! classification of a datum into global-existence and blowup regimes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Grid used for root isolation of rho0.
pub const ROOT_GRID: usize = 2048;
/// Target accuracy of isolated roots.
pub const ROOT_TOL: f64 = 1e-12;
/// Grid on which c(x) != 0 is asserted when lambda*kappa < 0.
pub const SIGMA_GRID: usize = 10_000;
/// |h''| below this counts as a vanishing first-order condition at an extremum.
pub const FLAT_TOL: f64 = 1e-10;
/// |h'''| (or |g''|) must exceed this for the extremum to be non-degenerate.
pub const CURVATURE_TOL: f64 = 1e-6;
/// A sampled |rho0| minimum below this without a sign change is a tangential zero.
pub const TANGENTIAL_TOL: f64 = 1e-8;

/// f(x) = sum_k cos[k] cos(2 pi k x) + sin[k] sin(2 pi k x); sin[0] is ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigSeries {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Parse a comma-separated list of reals such as `"0, 1.5, -2e-3"`.
///
/// An empty or all-blank string is an empty list.
pub fn parse_coeffs(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .enumerate()
        .map(|(i, tok)| {
            let t = tok.trim();
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Config(format!("entry {} ({t:?}) is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::Config(format!("entry {} is not finite", i + 1)));
            }
            Ok(v)
        })
        .collect()
}

impl TrigSeries {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.iter().chain(&sin).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite series coefficient".into()));
        }
        Ok(Self { cos, sin })
    }

    pub fn zero() -> Self {
        Self {
            cos: vec![0.0],
            sin: vec![0.0],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            cos: vec![c],
            sin: vec![0.0],
        }
    }

    /// Highest mode present.
    pub fn max_mode(&self) -> usize {
        self.cos.len().max(self.sin.len()).saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().all(|&c| c == 0.0) && self.sin.iter().skip(1).all(|&s| s == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.deriv(x, 0)
    }

    /// k-th derivative at x, from exact differentiation of each mode.
    pub fn deriv(&self, x: f64, k: u32) -> f64 {
        let mut acc = if k == 0 {
            self.cos.first().copied().unwrap_or(0.0)
        } else {
            0.0
        };
        for m in 1..=self.max_mode() {
            let a = self.cos.get(m).copied().unwrap_or(0.0);
            let b = self.sin.get(m).copied().unwrap_or(0.0);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let w = 2.0 * PI * m as f64;
            // reduce the phase exactly before the trig call
            let phase = 2.0 * PI * (m as f64 * x).rem_euclid(1.0);
            let (s, c) = phase.sin_cos();
            let v = match k % 4 {
                0 => a * c + b * s,
                1 => -a * s + b * c,
                2 => -a * c - b * s,
                _ => a * s - b * c,
            };
            acc += w.powi(k as i32) * v;
        }
        acc
    }

    /// The term-by-term derivative as a new series.
    pub fn derivative(&self) -> Self {
        let n = self.max_mode() + 1;
        let mut cos = vec![0.0; n];
        let mut sin = vec![0.0; n];
        for m in 1..n {
            let w = 2.0 * PI * m as f64;
            let a = self.cos.get(m).copied().unwrap_or(0.0);
            let b = self.sin.get(m).copied().unwrap_or(0.0);
            cos[m] = w * b;
            sin[m] = -w * a;
        }
        Self { cos, sin }
    }
}

/// Smooth periodic pair (u0, rho0) on the unit circle.
///
/// The constant mode of u0 is a gauge: only u0' enters the dynamics of
/// (u_x, rho), and the solvers fix the mean of u to zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialDatum {
    pub u0: TrigSeries,
    pub rho0: TrigSeries,
}

impl InitialDatum {
    pub fn new(u0: TrigSeries, rho0: TrigSeries) -> Result<Self> {
        let d = Self { u0, rho0 };
        d.check()?;
        Ok(d)
    }

    /// Periodicity of u0, u0' and rho0 and zero mean of u0'.
    pub fn check(&self) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        if !close(self.u0.eval(0.0), self.u0.eval(1.0))
            || !close(self.ux0(0.0), self.ux0(1.0))
            || !close(self.rho0(0.0), self.rho0(1.0))
        {
            return Err(Error::Precondition("datum is not periodic".into()));
        }
        // mean of a derivative series is zero by construction; assert numerically
        let n = 256;
        let mean: f64 = (0..n).map(|j| self.ux0(j as f64 / n as f64)).sum::<f64>() / n as f64;
        if mean.abs() > 1e-12 * (1.0 + self.u0.max_mode() as f64) {
            return Err(Error::MeanViolation { mean });
        }
        Ok(())
    }

    pub fn u0(&self, x: f64) -> f64 {
        self.u0.eval(x) - self.u0.cos.first().copied().unwrap_or(0.0)
    }

    /// Derivative u0^{(k)}.
    pub fn du(&self, x: f64, k: u32) -> f64 {
        self.u0.deriv(x, k)
    }

    pub fn ux0(&self, x: f64) -> f64 {
        self.u0.deriv(x, 1)
    }

    pub fn rho0(&self, x: f64) -> f64 {
        self.rho0.eval(x)
    }

    pub fn drho(&self, x: f64, k: u32) -> f64 {
        self.rho0.deriv(x, k)
    }

    pub fn max_mode(&self) -> usize {
        self.u0.max_mode().max(self.rho0.max_mode())
    }
}

/// (lambda, kappa, p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub kappa: f64,
    pub p: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, kappa: f64, p: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda == 0.0 {
            return Err(Error::Precondition(format!("lambda must be nonzero, got {lambda}")));
        }
        if !kappa.is_finite() {
            return Err(Error::Precondition("kappa must be finite".into()));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Precondition(format!("p must lie in [1, inf), got {p}")));
        }
        Ok(Self { lambda, kappa, p })
    }

    pub fn with_p(self, p: f64) -> Result<Self> {
        Self::new(self.lambda, self.kappa, p)
    }
}

/// The benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchmarkCase {
    #[serde(rename = "LK_NEG_SINGLE_MIN")]
    LkNegSingleMin,
    #[serde(rename = "LK_NEG_SINGLE_MAX")]
    LkNegSingleMax,
    #[serde(rename = "LK_POS_SINGLE_ROOT")]
    LkPosSingleRoot,
    #[serde(rename = "GLOBAL_NONVANISHING_RHO")]
    GlobalNonvanishingRho,
}

impl BenchmarkCase {
    pub const ALL: [BenchmarkCase; 4] = [
        BenchmarkCase::LkNegSingleMin,
        BenchmarkCase::LkNegSingleMax,
        BenchmarkCase::LkPosSingleRoot,
        BenchmarkCase::GlobalNonvanishingRho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkCase::LkNegSingleMin => "LK_NEG_SINGLE_MIN",
            BenchmarkCase::LkNegSingleMax => "LK_NEG_SINGLE_MAX",
            BenchmarkCase::LkPosSingleRoot => "LK_POS_SINGLE_ROOT",
            BenchmarkCase::GlobalNonvanishingRho => "GLOBAL_NONVANISHING_RHO",
        }
    }
}

impl fmt::Display for BenchmarkCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown datum family {s:?}")))
    }
}

/// Build a benchmark datum and verify the hypotheses of its case.
///
/// * `LK_NEG_SINGLE_MAX`: u0' = A sin(2 pi x), rho0 = cos^3(2 pi x). rho0 vanishes
///   at 1/4 and 3/4, where u0' = A and -A; u0'' = 0 and u0''' < 0 at 1/4.
///   The zeros are triple so that near them Q is J^2 up to O(d^6).
/// * `LK_NEG_SINGLE_MIN`: the mirror u0' = -A sin(2 pi x).
/// * `LK_POS_SINGLE_ROOT`: u0' = A sin(2 pi x), rho0 = A/2. g+ has a single
///   nondegenerate maximum at 1/4 and g- a single minimum at 3/4.
/// * `GLOBAL_NONVANISHING_RHO`: u0' = A sin(2 pi x), rho0 = 2 + cos(2 pi x).
pub fn make_benchmark_datum(case: BenchmarkCase, amplitude: f64) -> Result<InitialDatum> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::Construction(format!("amplitude must be positive, got {amplitude}")));
    }
    let a = amplitude;
    let w = 2.0 * PI;
    let sine_u = |sign: f64| TrigSeries::new(vec![0.0, -sign * a / w], vec![0.0, 0.0]);
    let cube = TrigSeries::new(vec![0.0, 0.75, 0.0, 0.25], vec![0.0; 4])?;
    let datum = match case {
        BenchmarkCase::LkNegSingleMax => InitialDatum::new(sine_u(1.0)?, cube)?,
        BenchmarkCase::LkNegSingleMin => InitialDatum::new(sine_u(-1.0)?, cube)?,
        BenchmarkCase::LkPosSingleRoot => {
            InitialDatum::new(sine_u(1.0)?, TrigSeries::constant(0.5 * a))?
        }
        BenchmarkCase::GlobalNonvanishingRho => {
            InitialDatum::new(sine_u(1.0)?, TrigSeries::new(vec![2.0, 1.0], vec![0.0, 0.0])?)?
        }
    };
    verify_benchmark(case, &datum)?;
    Ok(datum)
}

fn verify_benchmark(case: BenchmarkCase, d: &InitialDatum) -> Result<()> {
    let fail = |what: &str| Err(Error::Construction(format!("{case}: {what}")));
    match case {
        BenchmarkCase::LkNegSingleMax | BenchmarkCase::LkNegSingleMin => {
            let zeros = rho_zeros(d)?;
            if zeros.len() != 2 {
                return fail("rho0 should vanish at exactly two points");
            }
            let pick = |f: &dyn Fn(f64) -> f64| {
                zeros
                    .iter()
                    .map(|z| z.x)
                    .max_by(|a, b| f(*a).total_cmp(&f(*b)))
                    .unwrap()
            };
            let (x, want_max) = if case == BenchmarkCase::LkNegSingleMax {
                (pick(&|x| d.ux0(x)), true)
            } else {
                (pick(&|x| -d.ux0(x)), false)
            };
            if d.ux0(x) == 0.0 {
                return fail("u0' vanishes at the selected zero of rho0");
            }
            if d.du(x, 2).abs() >= FLAT_TOL {
                return fail("u0'' does not vanish at the extremum");
            }
            let third = d.du(x, 3);
            let ok = if want_max { third < -CURVATURE_TOL } else { third > CURVATURE_TOL };
            if !ok {
                return fail("u0''' has the wrong sign at the extremum");
            }
        }
        BenchmarkCase::LkPosSingleRoot => {
            // g+ = u0' + s|rho0| with s > 0 has the same critical points as u0'
            // because rho0 is a nonzero constant
            if d.rho0.max_mode() != 0 || d.rho0(0.0) == 0.0 {
                return fail("rho0 should be a nonzero constant");
            }
            let x = 0.25;
            if d.du(x, 2).abs() >= FLAT_TOL || !(d.du(x, 3) < -CURVATURE_TOL) {
                return fail("g+ does not have a nondegenerate maximum at 1/4");
            }
        }
        BenchmarkCase::GlobalNonvanishingRho => {
            let min = (0..ROOT_GRID)
                .map(|j| d.rho0(j as f64 / ROOT_GRID as f64))
                .fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return fail("rho0 vanishes");
            }
        }
    }
    Ok(())
}

/// c(x) = lambda (lambda u0'(x)^2 - kappa rho0(x)^2).
pub fn c_of_x(datum: &InitialDatum, params: &ModelParams, x: f64) -> f64 {
    c_from_values(params, datum.ux0(x), datum.rho0(x))
}

pub fn c_from_values(params: &ModelParams, ux: f64, rho: f64) -> f64 {
    params.lambda * (params.lambda * ux * ux - params.kappa * rho * rho)
}

/// sign of lambda*kappa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignCase {
    #[serde(rename = "LK_NEG")]
    LkNeg,
    #[serde(rename = "LK_POS")]
    LkPos,
}

/// An isolated zero of rho0 with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoZero {
    pub x: f64,
    pub multiplicity: u32,
}

/// Which function h the blowup is governed by: the gap 1 - lambda*eta*h(x)
/// closes first at the recorded locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchKind {
    /// h = u0' (lambda*kappa < 0, or rho0 identically zero)
    UxPrime,
    /// h = g+ = u0' + sqrt(kappa/lambda)|rho0|
    GPlus,
    /// h = g- = u0' - sqrt(kappa/lambda)|rho0|
    GMinus,
}

/// Extremum of h that sets eta*.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveBranch {
    pub kind: BranchKind,
    pub value: f64,
    pub locations: Vec<f64>,
    /// h'' at each location (zero when the lemma hypotheses fail)
    pub curvature: Vec<f64>,
    /// h is smooth with h' = 0, h'' != 0 at every location
    pub lemma_applicable: bool,
}

/// Power-law or logarithmic growth law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", content = "value")]
pub enum Exponent {
    Power(f64),
    Log,
}

/// L^infinity blowup type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinfBlowup {
    #[serde(rename = "ONE_SIDED_DISCRETE")]
    OneSidedDiscrete,
    #[serde(rename = "TWO_SIDED_EVERYWHERE")]
    TwoSidedEverywhere,
    #[serde(rename = "GLOBAL")]
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Ux,
    Rho,
}

/// Prediction for one norm at one p.
///
/// `diverges` is `None` where the theorems are silent. For `Rho` the exponent
/// refers to ||rho||_p^p, for `Ux` to ||u_x||_p, both as powers of the gap
/// (1 - lambda*eta*extremum).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormForecast {
    pub quantity: Quantity,
    pub p: f64,
    pub diverges: Option<bool>,
    pub exponent: Option<Exponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityForecast {
    pub ux: NormForecast,
    pub rho: NormForecast,
    pub linf_blowup_type: Option<LinfBlowup>,
}

/// Blowup time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BlowupTime {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseProfile {
    pub sign_case: SignCase,
    /// rho0 is identically zero (the generalized inviscid Proudman-Johnson reduction)
    pub rho_identically_zero: bool,
    pub zeros_of_rho0: Vec<RhoZero>,
    /// (x, c(x)) on a uniform grid
    pub c_values: Vec<(f64, f64)>,
    /// zeros of c (the set Omega); empty means Sigma is the whole circle
    pub omega: Vec<f64>,
    pub m0: Option<f64>,
    pub big_m0: Option<f64>,
    pub n: Option<f64>,
    pub big_n: Option<f64>,
    /// None when Q never vanishes
    pub eta_star: Option<f64>,
    pub active: Option<ActiveBranch>,
    pub t_star: BlowupTime,
    pub forecast: RegularityForecast,
    /// lambda*kappa > 0 with a nonempty Omega: handled as an extension
    pub extension: bool,
}

impl CaseProfile {
    pub fn eta_star_location(&self) -> Vec<f64> {
        self.active
            .as_ref()
            .map(|a| a.locations.clone())
            .unwrap_or_default()
    }

    /// The extremum whose gap 1 - lambda*eta*value closes at eta*.
    pub fn extremum(&self) -> Option<f64> {
        self.active.as_ref().map(|a| a.value)
    }
}

/// sqrt(kappa/lambda) for lambda*kappa > 0.
pub fn g_scale(params: &ModelParams) -> f64 {
    (params.kappa / params.lambda).sqrt()
}

pub fn g_plus(datum: &InitialDatum, params: &ModelParams, x: f64) -> f64 {
    datum.ux0(x) + g_scale(params) * datum.rho0(x).abs()
}

pub fn g_minus(datum: &InitialDatum, params: &ModelParams, x: f64) -> f64 {
    datum.ux0(x) - g_scale(params) * datum.rho0(x).abs()
}

/// k-th derivative of h for the given branch, valid away from zeros of rho0.
pub fn branch_deriv(
    datum: &InitialDatum,
    params: &ModelParams,
    kind: BranchKind,
    x: f64,
    k: u32,
) -> f64 {
    let ux = datum.du(x, k + 1);
    match kind {
        BranchKind::UxPrime => ux,
        BranchKind::GPlus | BranchKind::GMinus => {
            let sgn = if datum.rho0(x) >= 0.0 { 1.0 } else { -1.0 };
            let s = if kind == BranchKind::GPlus { 1.0 } else { -1.0 };
            ux + s * g_scale(params) * sgn * datum.drho(x, k)
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > ROOT_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Newton on f with bisection safeguard inside [a, b]; f(a), f(b) of opposite sign.
pub(crate) fn safe_newton<F: Fn(f64) -> (f64, f64)>(f: F, mut a: f64, mut b: f64) -> f64 {
    let (fa, _) = f(a);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx > 0.0) == (fa > 0.0) {
            a = x;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) || b - a <= 4e-16 {
            return next;
        }
        x = next;
    }
    x
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Zeros of rho0 with multiplicities; tangential (even-order) zeros are rejected.
pub fn rho_zeros(datum: &InitialDatum) -> Result<Vec<RhoZero>> {
    if datum.rho0.is_zero() {
        return Ok(Vec::new());
    }
    let n = ROOT_GRID;
    let xs: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| datum.rho0(x)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut zeros = Vec::new();
    for j in 0..n {
        let (a, fa) = (xs[j], vals[j]);
        let (b, fb) = if j + 1 < n { (xs[j + 1], vals[j + 1]) } else { (1.0, vals[0]) };
        // an exact zero on the grid counts only if its neighbours differ in sign
        let crosses_at_node = fa == 0.0 && {
            let prev = vals[(j + n - 1) % n];
            (prev > 0.0) != (fb > 0.0) && prev != 0.0 && fb != 0.0
        };
        if crosses_at_node || fa != 0.0 && fb != 0.0 && (fa > 0.0) != (fb > 0.0) {
            let x0 = if fa == 0.0 { a } else { bisect(|x| datum.rho0(x), a, b) };
            zeros.push(refine_zero(datum, x0, scale)?);
        }
    }
    // tangential zeros: local minima of |rho0| without a sign change
    for j in 0..n {
        let prev = vals[(j + n - 1) % n].abs();
        let cur = vals[j].abs();
        let next = vals[(j + 1) % n].abs();
        if cur <= prev && cur <= next && cur < 1e-3 * scale {
            let lo = xs[j] - 1.0 / n as f64;
            let hi = xs[j] + 1.0 / n as f64;
            let fl = datum.drho(lo, 1);
            let fh = datum.drho(hi, 1);
            if (fl > 0.0) == (fh > 0.0) {
                continue;
            }
            let x = wrap(bisect(|x| datum.drho(x, 1), lo, hi));
            let near_known = zeros
                .iter()
                .any(|z: &RhoZero| periodic_distance(z.x, x) < 2.0 / n as f64);
            if !near_known && datum.rho0(x).abs() < TANGENTIAL_TOL * scale.max(1.0) {
                return Err(Error::DegenerateData(format!(
                    "rho0 has a tangential zero near x = {x}"
                )));
            }
        }
    }
    zeros.sort_by(|a, b| a.x.total_cmp(&b.x));
    zeros.dedup_by(|a, b| periodic_distance(a.x, b.x) < 1e-9);
    Ok(zeros)
}

pub fn periodic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Determine the multiplicity of a bracketed zero and polish it with Newton on
/// the lowest derivative that has a simple zero there.
fn refine_zero(datum: &InitialDatum, x0: f64, scale: f64) -> Result<RhoZero> {
    let w = 2.0 * PI * datum.rho0.max_mode().max(1) as f64;
    let mut mult = 1;
    while mult < 8 {
        let d = datum.drho(x0, mult).abs() / (scale * w.powi(mult as i32));
        if d > 1e-4 {
            break;
        }
        mult += 1;
    }
    // a bracketed sign change has odd order; an even count means the
    // bisected point sat too far from the root for the derivative test
    if mult % 2 == 0 {
        mult += 1;
    }
    let k = mult - 1;
    let h = 1e-3 / w;
    let (a, b) = (x0 - h, x0 + h);
    let fa = datum.drho(a, k);
    let fb = datum.drho(b, k);
    let x = if (fa > 0.0) != (fb > 0.0) {
        safe_newton(|x| (datum.drho(x, k), datum.drho(x, k + 1)), a, b)
    } else {
        x0
    };
    Ok(RhoZero {
        x: wrap(x),
        multiplicity: mult,
    })
}

/// Global maximum of f on the circle, all locations within a relative tie
/// tolerance, each polished by safeguarded Newton on f'.
fn circle_argmax(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    d2f: &dyn Fn(f64) -> f64,
) -> (f64, Vec<f64>) {
    let n = 4 * ROOT_GRID;
    let xs: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut cands = Vec::new();
    for j in 0..n {
        let p = vals[(j + n - 1) % n];
        let q = vals[(j + 1) % n];
        if vals[j] >= p && vals[j] >= q {
            let lo = xs[j] - 1.0 / n as f64;
            let hi = xs[j] + 1.0 / n as f64;
            let x = if (df(lo) > 0.0) && (df(hi) < 0.0) {
                wrap(safe_newton(|x| (df(x), d2f(x)), lo, hi))
            } else {
                xs[j]
            };
            cands.push((f(x), x));
        }
    }
    let best = cands.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c.0));
    let tie = 1e-12 * best.abs().max(1.0);
    let mut locs: Vec<f64> = cands
        .iter()
        .filter(|c| c.0 >= best - tie)
        .map(|c| c.1)
        .collect();
    locs.sort_by(f64::total_cmp);
    locs.dedup_by(|a, b| periodic_distance(*a, *b) < 1e-9);
    (best, locs)
}

/// Classify a datum; fills every profile field including t*.
pub fn classify(datum: &InitialDatum, params: &ModelParams) -> Result<CaseProfile> {
    datum.check()?;
    let mut profile = classify_static(datum, params)?;
    profile.t_star = match (&profile.eta_star, profile.forecast.linf_blowup_type) {
        (None, _) => BlowupTime::Infinite,
        (Some(_), _) => crate::charsolve::blowup_time(datum, params, &profile)?,
    };
    Ok(profile)
}

/// Classification without the clock; t* is left as `Infinite`.
pub fn classify_static(datum: &InitialDatum, params: &ModelParams) -> Result<CaseProfile> {
    let lam = params.lambda;
    let lk = lam * params.kappa;
    if params.kappa == 0.0 {
        return Err(Error::UnsupportedCase(
            "kappa = 0 is outside the periodic theory".into(),
        ));
    }
    let sign_case = if lk < 0.0 { SignCase::LkNeg } else { SignCase::LkPos };
    let rho_zero = datum.rho0.is_zero();
    let zeros = rho_zeros(datum)?;

    let ngrid = 1024;
    let c_values: Vec<(f64, f64)> = (0..ngrid)
        .map(|j| {
            let x = j as f64 / ngrid as f64;
            (x, c_of_x(datum, params, x))
        })
        .collect();

    let mut omega = Vec::new();
    if sign_case == SignCase::LkNeg {
        // Sigma must be everything: c = lam^2 u0'^2 + |lam kappa| rho0^2
        for j in 0..SIGMA_GRID {
            let x = j as f64 / SIGMA_GRID as f64;
            if c_of_x(datum, params, x) == 0.0 {
                omega.push(x);
            }
        }
        for z in &zeros {
            if datum.ux0(z.x) == 0.0 {
                omega.push(z.x);
            }
        }
        if !omega.is_empty() && !rho_zero {
            return Err(Error::DegenerateData(format!(
                "c vanishes at x = {} although lambda*kappa < 0",
                omega[0]
            )));
        }
    } else {
        for j in 0..SIGMA_GRID {
            let a = j as f64 / SIGMA_GRID as f64;
            let b = (j + 1) as f64 / SIGMA_GRID as f64;
            let ca = c_of_x(datum, params, a);
            let cb = c_of_x(datum, params, b);
            if ca == 0.0 {
                omega.push(a);
            } else if (ca > 0.0) != (cb > 0.0) && cb != 0.0 {
                omega.push(bisect(|x| c_of_x(datum, params, x), a, b));
            }
        }
    }

    let mut profile = CaseProfile {
        sign_case,
        rho_identically_zero: rho_zero,
        zeros_of_rho0: zeros.clone(),
        c_values,
        omega: omega.clone(),
        m0: None,
        big_m0: None,
        n: None,
        big_n: None,
        eta_star: None,
        active: None,
        t_star: BlowupTime::Infinite,
        forecast: RegularityForecast {
            ux: NormForecast {
                quantity: Quantity::Ux,
                p: params.p,
                diverges: None,
                exponent: None,
            },
            rho: NormForecast {
                quantity: Quantity::Rho,
                p: params.p,
                diverges: None,
                exponent: None,
            },
            linf_blowup_type: None,
        },
        extension: false,
    };

    if rho_zero {
        // Q = J^2 for every x; the extremum runs over the whole circle
        let ux = |x: f64| datum.ux0(x);
        let (mx, mx_locs) = circle_argmax(&ux, &|x| datum.du(x, 2), &|x| datum.du(x, 3));
        let (mn_neg, mn_locs) =
            circle_argmax(&|x| -datum.ux0(x), &|x| -datum.du(x, 2), &|x| -datum.du(x, 3));
        profile.big_m0 = Some(mx);
        profile.m0 = Some(-mn_neg);
        let (value, locs) = if lam > 0.0 { (mx, mx_locs) } else { (-mn_neg, mn_locs) };
        if lam * value > 0.0 {
            profile.eta_star = Some(1.0 / (lam * value));
            profile.active = Some(make_branch(datum, params, BranchKind::UxPrime, value, locs)?);
        }
        return Ok(profile);
    }

    match sign_case {
        SignCase::LkNeg => {
            if !zeros.is_empty() {
                let vals: Vec<f64> = zeros.iter().map(|z| datum.ux0(z.x)).collect();
                let m0 = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let big_m0 = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                profile.m0 = Some(m0);
                profile.big_m0 = Some(big_m0);
                let target = if lam > 0.0 { big_m0 } else { m0 };
                if lam * target > 0.0 {
                    let tie = 1e-12 * target.abs();
                    let locs: Vec<f64> = zeros
                        .iter()
                        .filter(|z| (datum.ux0(z.x) - target).abs() <= tie)
                        .map(|z| z.x)
                        .collect();
                    profile.eta_star = Some(1.0 / (lam * target));
                    profile.active =
                        Some(make_branch(datum, params, BranchKind::UxPrime, target, locs)?);
                }
            }
        }
        SignCase::LkPos => {
            let gp = |x: f64| g_plus(datum, params, x);
            let gm = |x: f64| g_minus(datum, params, x);
            let dgp = |x: f64| branch_deriv(datum, params, BranchKind::GPlus, x, 1);
            let d2gp = |x: f64| branch_deriv(datum, params, BranchKind::GPlus, x, 2);
            let dgm = |x: f64| -branch_deriv(datum, params, BranchKind::GMinus, x, 1);
            let d2gm = |x: f64| -branch_deriv(datum, params, BranchKind::GMinus, x, 2);
            let (big_n, n_locs) = circle_argmax(&gp, &dgp, &d2gp);
            let (neg_n, m_locs) = circle_argmax(&|x| -gm(x), &dgm, &d2gm);
            let n = -neg_n;
            profile.n = Some(n);
            profile.big_n = Some(big_n);
            profile.extension = !omega.is_empty();
            let (kind, target, locs) = if lam > 0.0 {
                (BranchKind::GPlus, big_n, n_locs)
            } else {
                (BranchKind::GMinus, n, m_locs)
            };
            if lam * target > 0.0 {
                for &x in &locs {
                    let nearest = zeros
                        .iter()
                        .map(|z| periodic_distance(z.x, x))
                        .fold(f64::INFINITY, f64::min);
                    if nearest < 1e-6 {
                        return Err(Error::UnsupportedCase(format!(
                            "extremum of g at x = {x} coincides with a zero of rho0 (double root)"
                        )));
                    }
                }
                profile.eta_star = Some(1.0 / (lam * target));
                profile.active = Some(make_branch(datum, params, kind, target, locs)?);
            }
        }
    }

    profile.forecast = forecast(&profile, params);
    Ok(profile)
}

fn make_branch(
    datum: &InitialDatum,
    params: &ModelParams,
    kind: BranchKind,
    value: f64,
    locations: Vec<f64>,
) -> Result<ActiveBranch> {
    let mut curvature = Vec::with_capacity(locations.len());
    let mut applicable = true;
    for &x in &locations {
        let h1 = branch_deriv(datum, params, kind, x, 1);
        let h2 = branch_deriv(datum, params, kind, x, 2);
        let scale = 1.0 + value.abs();
        if h1.abs() >= FLAT_TOL * scale * 1e3 {
            applicable = false;
        } else if h2.abs() <= CURVATURE_TOL {
            return Err(Error::DegenerateData(format!(
                "extremum at x = {x} is degenerate: h'' = {h2:e}"
            )));
        }
        curvature.push(h2);
    }
    Ok(ActiveBranch {
        kind,
        value,
        locations,
        curvature,
        lemma_applicable: applicable,
    })
}

fn forecast(profile: &CaseProfile, params: &ModelParams) -> RegularityForecast {
    let lam = params.lambda;
    let linf = if profile.rho_identically_zero {
        None
    } else {
        Some(linf_type(profile, params))
    };
    let global = linf == Some(LinfBlowup::Global);
    let mk = |q: Quantity| {
        if global {
            NormForecast {
                quantity: q,
                p: params.p,
                diverges: Some(false),
                exponent: None,
            }
        } else {
            forecast_norm(profile.sign_case, lam, params.p, q)
        }
    };
    RegularityForecast {
        ux: mk(Quantity::Ux),
        rho: mk(Quantity::Rho),
        linf_blowup_type: linf,
    }
}

fn linf_type(profile: &CaseProfile, params: &ModelParams) -> LinfBlowup {
    let lam = params.lambda;
    match profile.sign_case {
        SignCase::LkNeg => {
            if profile.eta_star.is_none() || (lam > 0.0 && lam <= 1.0) {
                LinfBlowup::Global
            } else if lam > -2.0 && lam < 0.0 {
                LinfBlowup::OneSidedDiscrete
            } else {
                LinfBlowup::TwoSidedEverywhere
            }
        }
        SignCase::LkPos => {
            if lam > -1.0 && lam < 0.0 {
                LinfBlowup::OneSidedDiscrete
            } else {
                LinfBlowup::TwoSidedEverywhere
            }
        }
    }
}

fn exponent_of_pair(a1: f64, a2: f64) -> Exponent {
    // the bound is |gap^{-a1} - C gap^{-a2}|; the larger power dominates
    let a = a1.max(a2);
    if a == 0.0 {
        Exponent::Log
    } else {
        Exponent::Power(-a)
    }
}

/// Divergence flag and growth law for one norm, from the lambda-partitions of
/// the L^p theorems and the estimates in their proofs.
pub fn forecast_norm(sign: SignCase, lam: f64, p: f64, quantity: Quantity) -> NormForecast {
    let (diverges, exponent) = match (sign, quantity) {
        (SignCase::LkNeg, Quantity::Ux) => lkneg_ux(lam, p),
        (SignCase::LkNeg, Quantity::Rho) => (None, None),
        (SignCase::LkPos, Quantity::Ux) => lkpos_ux(lam, p),
        (SignCase::LkPos, Quantity::Rho) => lkpos_rho(lam, p),
    };
    NormForecast {
        quantity,
        p,
        diverges,
        exponent: if diverges == Some(true) { exponent } else { None },
    }
}

fn lkneg_ux(lam: f64, p: f64) -> (Option<bool>, Option<Exponent>) {
    let a1 = 0.5 + 1.0 / (lam * p);
    let a2 = 0.5 + 1.0 / lam;
    if lam > 0.0 && lam <= 1.0 {
        return (Some(false), None);
    }
    if lam < 0.0 && lam > -2.0 / (2.0 * p - 1.0) {
        return (Some(false), None);
    }
    let covered = p > 1.0 && (lam <= -2.0 / p || lam > 1.0);
    // the logarithmic display at lambda = -2/p extends to p = 1
    let log_point = lam == -2.0 / p;
    if !covered && !log_point {
        return (None, None);
    }
    let exp = if log_point {
        Some(Exponent::Log)
    } else if lam < -2.0 {
        Some(exponent_of_pair(a1, a2))
    } else if lam < 0.0 {
        Some(Exponent::Power(-a1))
    } else if lam < 2.0 {
        let q = p;
        let ok = q > 1.0 && q < 5.0 / 3.0 && (3.0 * q - 1.0) / (2.0 * q) < lam && lam < 2.0 / q;
        ok.then(|| Exponent::Power(-(lam + 1.0 / (2.0 * q) - 1.5)))
    } else if lam == 2.0 {
        None
    } else {
        Some(exponent_of_pair(a1, a2))
    };
    (Some(true), exp)
}

fn lkpos_ux(lam: f64, p: f64) -> (Option<bool>, Option<Exponent>) {
    let a1 = 0.5 + 1.0 / (2.0 * lam * p);
    let a2 = 0.5 + 1.0 / (2.0 * lam);
    if lam < 0.0 && lam > -1.0 / (2.0 * p - 1.0) {
        return (Some(false), None);
    }
    let covered = p > 1.0 && (lam <= -1.0 / p || lam > 0.0);
    let log_point = lam == -1.0 / p;
    if !covered && !log_point {
        return (None, None);
    }
    let exp = if log_point {
        Some(Exponent::Log)
    } else if lam < -1.0 {
        Some(exponent_of_pair(a1, a2))
    } else if lam == -1.0 {
        Some(if a1 == 0.0 { Exponent::Log } else { Exponent::Power(-a1) })
    } else if lam < 0.0 {
        Some(Exponent::Power(-a1))
    } else if lam < 1.0 {
        let q = p;
        let ok = q > 1.0 && q < 3.0 && (q - 1.0) / (2.0 * q) < lam && lam < 1.0 / q;
        ok.then(|| Exponent::Power(-(lam + 1.0 / (2.0 * q) - 0.5)))
    } else if lam == 1.0 {
        None
    } else {
        Some(exponent_of_pair(a1, a2))
    };
    (Some(true), exp)
}

fn lkpos_rho(lam: f64, p: f64) -> (Option<bool>, Option<Exponent>) {
    let edge = -1.0 / (2.0 * p - 1.0);
    if lam < 0.0 {
        if lam > edge {
            (Some(false), None)
        } else if lam == edge {
            (Some(true), Some(Exponent::Log))
        } else {
            (Some(true), Some(Exponent::Power(0.5 - 1.0 / (2.0 * lam) - p)))
        }
    } else if lam < 1.0 {
        (Some(true), Some(Exponent::Power(-lam * p)))
    } else if lam == 1.0 {
        (Some(true), None)
    } else {
        (Some(true), Some(Exponent::Power(0.5 - 1.0 / (2.0 * lam) - p)))
    }
}

/// Forecast entry for one quantity at the profile's parameters.
pub fn predict_norm_exponent(
    profile: &CaseProfile,
    params: &ModelParams,
    quantity: Quantity,
) -> NormForecast {
    if profile.forecast.linf_blowup_type == Some(LinfBlowup::Global) || profile.eta_star.is_none()
    {
        return NormForecast {
            quantity,
            p: params.p,
            diverges: Some(false),
            exponent: None,
        };
    }
    if profile.rho_identically_zero {
        return NormForecast {
            quantity,
            p: params.p,
            diverges: None,
            exponent: None,
        };
    }
    forecast_norm(profile.sign_case, params.lambda, params.p, quantity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: f64, k: f64) -> ModelParams {
        ModelParams::new(l, k, 2.0).unwrap()
    }

    #[test]
    fn series_derivatives_match_closed_form() {
        let s = TrigSeries::new(vec![0.5, 0.0, 0.3], vec![0.0, 1.0]).unwrap();
        let x = 0.37;
        let w = 2.0 * PI;
        assert!((s.eval(x) - (0.5 + (w * x).sin() + 0.3 * (2.0 * w * x).cos())).abs() < 1e-15);
        let d3 = -w.powi(3) * (w * x).cos() + 0.3 * (2.0 * w).powi(3) * (2.0 * w * x).sin();
        assert!((s.deriv(x, 3) - d3).abs() < 1e-10);
        let ds = s.derivative();
        assert!((ds.eval(x) - s.deriv(x, 1)).abs() < 1e-12);
    }

    #[test]
    fn parse_coeff_lists() {
        assert_eq!(parse_coeffs(" 1, -2.5 ,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert_eq!(parse_coeffs("  ").unwrap(), Vec::<f64>::new());
        assert!(parse_coeffs("1,,2").is_err());
        assert!(parse_coeffs("1, inf").is_err());
    }

    #[test]
    fn params_reject_zero_lambda() {
        assert!(ModelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn c_of_x_examples() {
        let p = ModelParams::new(-0.5, 0.5, 1.0).unwrap();
        assert_eq!(c_from_values(&p, 1.0, 1.0), 0.5);
        assert_eq!(c_from_values(&p, 0.0, 0.0), 0.0);
    }

    #[test]
    fn benchmarks_construct() {
        for case in BenchmarkCase::ALL {
            make_benchmark_datum(case, 1.0).unwrap();
        }
        assert!(make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 0.0).is_err());
        let g = make_benchmark_datum(BenchmarkCase::GlobalNonvanishingRho, 1.0).unwrap();
        assert!((g.rho0(0.0) - 3.0).abs() < 1e-15 && (g.rho0(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triple_zeros_are_found_exactly() {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 1.0).unwrap();
        let z = rho_zeros(&d).unwrap();
        assert_eq!(z.len(), 2);
        assert!((z[0].x - 0.25).abs() < 1e-13 && z[0].multiplicity == 3);
        assert!((z[1].x - 0.75).abs() < 1e-13);
    }

    #[test]
    fn tangential_zero_rejected() {
        let d = InitialDatum::new(
            TrigSeries::new(vec![0.0, 0.1], vec![]).unwrap(),
            TrigSeries::new(vec![1.0, 1.0], vec![]).unwrap(),
        )
        .unwrap();
        assert!(matches!(rho_zeros(&d), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn classify_lambda_three_kappa_negative() {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 1.0).unwrap();
        let p = params(3.0, -1.0);
        let prof = classify_static(&d, &p).unwrap();
        assert_eq!(prof.sign_case, SignCase::LkNeg);
        assert!((prof.big_m0.unwrap() - 1.0).abs() < 1e-14);
        assert!((prof.eta_star.unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(
            prof.forecast.linf_blowup_type,
            Some(LinfBlowup::TwoSidedEverywhere)
        );
    }

    #[test]
    fn classify_negative_lambda_uses_minimum() {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 1.0).unwrap();
        let prof = classify_static(&d, &params(-2.0, 1.0)).unwrap();
        assert!((prof.m0.unwrap() + 1.0).abs() < 1e-14);
        assert!((prof.eta_star.unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(prof.active.unwrap().locations.len(), 1);
    }

    #[test]
    fn hs_global_case() {
        let d = make_benchmark_datum(BenchmarkCase::GlobalNonvanishingRho, 1.0).unwrap();
        let prof = classify_static(&d, &params(-0.5, 0.5)).unwrap();
        assert_eq!(prof.forecast.linf_blowup_type, Some(LinfBlowup::Global));
        assert!(prof.eta_star.is_none());
        assert_eq!(prof.forecast.ux.diverges, Some(false));
    }

    #[test]
    fn lkpos_extrema() {
        let d = make_benchmark_datum(BenchmarkCase::LkPosSingleRoot, 1.0).unwrap();
        let p = params(2.0, 1.0);
        let prof = classify_static(&d, &p).unwrap();
        let s = g_scale(&p) * 0.5;
        assert!((prof.big_n.unwrap() - (1.0 + s)).abs() < 1e-13);
        assert!((prof.n.unwrap() - (-1.0 - s)).abs() < 1e-13);
        let a = prof.active.unwrap();
        assert_eq!(a.kind, BranchKind::GPlus);
        assert!((a.locations[0] - 0.25).abs() < 1e-12);
        assert!(a.lemma_applicable);
    }

    #[test]
    fn forecast_examples() {
        let f = forecast_norm(SignCase::LkNeg, -4.0, 2.0, Quantity::Ux);
        assert_eq!(f.diverges, Some(true));
        assert_eq!(f.exponent, Some(Exponent::Power(-0.375)));
        let f = forecast_norm(SignCase::LkNeg, -0.25, 1.0, Quantity::Ux);
        assert_eq!(f.diverges, Some(false));
        let f = forecast_norm(SignCase::LkPos, 2.0, 1.0, Quantity::Rho);
        assert_eq!(f.exponent, Some(Exponent::Power(-0.75)));
        let f = forecast_norm(SignCase::LkPos, -1.0, 1.0, Quantity::Ux);
        assert_eq!(f.exponent, Some(Exponent::Log));
        let f = forecast_norm(SignCase::LkNeg, -1.0, 2.0, Quantity::Ux);
        assert_eq!(f.exponent, Some(Exponent::Log));
        // the band between the two partitions has no prediction
        let f = forecast_norm(SignCase::LkNeg, -0.8, 2.0, Quantity::Ux);
        assert_eq!(f.diverges, None);
    }
}
