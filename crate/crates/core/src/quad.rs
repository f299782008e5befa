//! Gauss–Legendre rules and an adaptive bisection integrator for integrands
//! with algebraic near-singularities at known points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre P_n(x) and P_{n-1}(x) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Legendre P_0..=P_n at x.
fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0; n + 1];
    if n >= 1 {
        p[1] = x;
    }
    for k in 2..=n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, pm1) = legendre_pair(n, x);
                let dp = nf * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (p, pm1) = legendre_pair(n, x);
            let dp = nf * (x * p - pm1) / (x * x - 1.0);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached 16-point rule, the workhorse panel rule.
    pub fn g16() -> &'static GaussRule {
        static RULE: OnceLock<GaussRule> = OnceLock::new();
        RULE.get_or_init(|| GaussRule::new(16))
    }

    /// Cached 10-point rule used by the adaptive integrator.
    pub fn g10() -> &'static GaussRule {
        static RULE: OnceLock<GaussRule> = OnceLock::new();
        RULE.get_or_init(|| GaussRule::new(10))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of f over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Matrix S with S[i][j] = integral from -1 to node i of the j-th
    /// Lagrange basis polynomial, so that S f gives cumulative integrals
    /// of the interpolant at the nodes.
    pub fn cumulative_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        // l_j(s) = w_j sum_k (k + 1/2) P_k(x_j) P_k(s), exact for Gauss nodes
        let pj: Vec<Vec<f64>> = self.nodes.iter().map(|&x| legendre_all(n, x)).collect();
        let mut s = vec![vec![0.0; n]; n];
        for i in 0..n {
            let xi = self.nodes[i];
            let p = &pj[i];
            // integral of P_k from -1 to xi
            let mut ip = vec![0.0; n];
            ip[0] = xi + 1.0;
            for k in 1..n {
                ip[k] = (p[k + 1] - p[k - 1]) / (2.0 * k as f64 + 1.0);
            }
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += (k as f64 + 0.5) * pj[j][k] * ip[k];
                }
                s[i][j] = self.weights[j] * acc;
            }
        }
        s
    }
}

/// Tolerances and limits for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_panels: 20_000,
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn evaluate_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let rule = GaussRule::g10();
    let m = 0.5 * (a + b);
    let whole = rule.integrate(f, a, b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let value = left + right;
    if !value.is_finite() || !whole.is_finite() {
        return Err(Error::Quadrature {
            reason: format!("non-finite integrand on [{a}, {b}]"),
            value,
            error: f64::INFINITY,
        });
    }
    Ok(Panel {
        a,
        b,
        value,
        error: (value - whole).abs(),
    })
}

/// Adaptive integration of f over [a, b] with forced panel boundaries at
/// `breakpoints` (points outside (a, b) are ignored).
///
/// Each panel compares a 10-point rule against the same rule on its two
/// halves and the panel with the largest discrepancy is bisected first.
/// Running out of panels is not an error: the result carries
/// `converged = false` and the current error estimate.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a < b) {
        if a == b {
            return Ok(QuadResult {
                value: 0.0,
                error: 0.0,
                panels: 0,
                converged: true,
            });
        }
        return Err(Error::Precondition(format!("interval [{a}, {b}] is reversed")));
    }
    let mut cuts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        heap.push(evaluate_panel(&f, w[0], w[1])?);
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(QuadResult {
                value,
                error,
                panels: heap.len(),
                converged: true,
            });
        }
        if heap.len() >= opts.max_panels {
            return Ok(QuadResult {
                value,
                error,
                panels: heap.len(),
                converged: false,
            });
        }
        let worst = heap.pop().expect("heap is never empty here");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // panel cannot be split further in floating point
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            continue;
        }
        heap.push(evaluate_panel(&f, worst.a, m)?);
        heap.push(evaluate_panel(&f, m, worst.b)?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let r = GaussRule::new(7);
        let v = r.integrate(|x| x.powi(13) + x.powi(12), -1.0, 1.0);
        assert!((v - 2.0 / 13.0).abs() < 1e-15);
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cumulative_matrix_reproduces_antiderivative() {
        let r = GaussRule::g16();
        let s = r.cumulative_matrix();
        let f: Vec<f64> = r.nodes.iter().map(|x| x.exp()).collect();
        for (i, row) in s.iter().enumerate() {
            let v: f64 = row.iter().zip(&f).map(|(a, b)| a * b).sum();
            let exact = r.nodes[i].exp() - (-1f64).exp();
            assert!((v - exact).abs() < 1e-14, "{i}: {v} vs {exact}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, &[], &QuadOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_uses_breakpoints_for_interior_peak() {
        let eps = 1e-10;
        let f = |x: f64| 1.0 / (eps + (x - 0.3).powi(2));
        let r = adaptive(f, 0.0, 1.0, &[0.3], &QuadOptions::default()).unwrap();
        let exact = ((0.7 / eps.sqrt()).atan() + (0.3 / eps.sqrt()).atan()) / eps.sqrt();
        assert!(((r.value - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let opts = QuadOptions {
            max_panels: 3,
            ..QuadOptions::default()
        };
        let r = adaptive(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[], &opts).unwrap();
        assert!(!r.converged);
    }
}
