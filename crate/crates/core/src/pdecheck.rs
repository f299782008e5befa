//! Direct solvers used as independent checks.
//!
//! * A periodic pseudo-spectral method of lines for v = u_x and rho:
//!   v_t = -u v_x + lambda v^2 + kappa rho^2 + I(t),  rho_t = -u rho_x + 2 lambda rho v,
//!   with u the mean-zero antiderivative of v.
//! * A three-point-boundary solver on a clustered grid for the same pair with
//!   u(1) = u_x(0) = u_x(1) = 0, rho(1) = 0, and a monitor for the Riccati
//!   inequality satisfied by H(t) = int u_x = -u(0, t).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::charsolve::CharSolver;
use crate::error::{Error, Result};
use crate::initdata::{InitialDatum, ModelParams};
use crate::output::CsvTable;

/// Advective CFL number.
pub const CFL: f64 = 0.4;
/// Bound on dt * max|u_x| (the reaction terms are quadratic in u_x).
pub const REACTION_LIMIT: f64 = 0.02;
/// Relative spectral amplitude at the dealiasing cutoff that counts as loss of resolution.
pub const PERIODIC_TAIL_LIMIT: f64 = 1e-6;
/// Chebyshev tail energy fraction that ends a three-point run.
pub const THREEPOINT_TAIL_LIMIT: f64 = 1e-3;
/// max|u_x| that ends a three-point run.
pub const THREEPOINT_UX_LIMIT: f64 = 1e6;
/// Nodes of the three-point grid.
pub const THREEPOINT_NODES: usize = 257;
/// Slack allowed in the Riccati inequality.
pub const RICCATI_SLACK: f64 = 1e-3;

/// I(t) = -kappa int rho^2 - (1 + lambda) int u_x^2 on a uniform periodic grid.
pub fn nonlocal_i(ux: &[f64], rho: &[f64], params: &ModelParams) -> f64 {
    let n = ux.len() as f64;
    let r2: f64 = rho.iter().map(|r| r * r).sum::<f64>() / n;
    let v2: f64 = ux.iter().map(|v| v * v).sum::<f64>() / n;
    -params.kappa * r2 - (1.0 + params.lambda) * v2
}

/// State of the periodic solver on N equispaced points of [0, 1).
#[derive(Debug, Clone, Serialize)]
pub struct EulerianState {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub rho: Vec<f64>,
}

impl EulerianState {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn ux_mean(&self) -> f64 {
        self.ux.iter().sum::<f64>() / self.len() as f64
    }
}

/// FFT plans and wavenumbers for one grid size.
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// signed wavenumber of each FFT slot, 0 at the Nyquist slot
    k: Vec<f64>,
    cutoff: usize,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Precondition(format!("grid size {n} must be even and >= 8")));
        }
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64
                } else if j == n / 2 {
                    0.0
                } else {
                    j as f64 - n as f64
                }
            })
            .collect();
        Ok(Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k,
            cutoff: n / 3,
        })
    }

    pub fn forward(&self, v: &[f64]) -> Vec<Complex<f64>> {
        let mut c: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fwd.process(&mut c);
        c
    }

    pub fn inverse(&self, mut c: Vec<Complex<f64>>) -> Vec<f64> {
        self.inv.process(&mut c);
        let s = 1.0 / self.n as f64;
        c.iter().map(|z| z.re * s).collect()
    }

    fn kept(&self, j: usize) -> bool {
        (self.k[j].abs() as usize) <= self.cutoff && !(j == self.n / 2)
    }

    /// Spectral derivative with the 2/3 filter applied.
    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        let mut c = self.forward(v);
        for (j, z) in c.iter_mut().enumerate() {
            *z = if self.kept(j) {
                *z * Complex::new(0.0, 2.0 * PI * self.k[j])
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        self.inverse(c)
    }

    /// 2/3-rule projection.
    pub fn filter(&self, v: &[f64]) -> Vec<f64> {
        let mut c = self.forward(v);
        for (j, z) in c.iter_mut().enumerate() {
            if !self.kept(j) {
                *z = Complex::new(0.0, 0.0);
            }
        }
        self.inverse(c)
    }

    /// Largest coefficient in the top twelfth of the retained band relative to the largest overall.
    pub fn tail(&self, v: &[f64]) -> f64 {
        let c = self.forward(v);
        let top = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if top == 0.0 {
            return 0.0;
        }
        let band = self.cutoff - self.cutoff / 4;
        let tail = (0..self.n)
            .filter(|&j| {
                let a = self.k[j].abs() as usize;
                a >= band && self.kept(j)
            })
            .map(|j| c[j].norm())
            .fold(0.0, f64::max);
        tail / top
    }

    /// Trigonometric interpolant of v at arbitrary y.
    pub fn interpolate(&self, coeffs: &[Complex<f64>], y: f64) -> f64 {
        let mut acc = 0.0;
        for (j, z) in coeffs.iter().enumerate() {
            if j == self.n / 2 {
                continue;
            }
            let (s, c) = (2.0 * PI * self.k[j] * y).sin_cos();
            acc += z.re * c - z.im * s;
        }
        acc / self.n as f64
    }

    /// Periodic antiderivative of ux whose mean is `anchor`.
    pub fn recover_u(&self, ux: &[f64], anchor: f64) -> Result<Vec<f64>> {
        let scale = ux.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mean = ux.iter().sum::<f64>() / self.n as f64;
        if mean.abs() > 1e-8 * scale {
            return Err(Error::MeanViolation { mean });
        }
        let mut c = self.forward(ux);
        for (j, z) in c.iter_mut().enumerate() {
            *z = if j == 0 {
                Complex::new(anchor * self.n as f64, 0.0)
            } else if j == self.n / 2 {
                Complex::new(0.0, 0.0)
            } else {
                *z / Complex::new(0.0, 2.0 * PI * self.k[j])
            };
        }
        Ok(self.inverse(c))
    }
}

/// Periodic direct solver in the mean-zero gauge for u.
#[derive(Debug)]
pub struct PeriodicSolver {
    pub params: ModelParams,
    pub spec: Spectral,
}

impl PeriodicSolver {
    pub fn new(n: usize, params: ModelParams) -> Result<Self> {
        Ok(Self {
            params,
            spec: Spectral::new(n)?,
        })
    }

    pub fn initial_state(&self, datum: &InitialDatum) -> Result<EulerianState> {
        let n = self.spec.n;
        let x: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
        let ux: Vec<f64> = x.iter().map(|&y| datum.ux0(y)).collect();
        let rho: Vec<f64> = x.iter().map(|&y| datum.rho0(y)).collect();
        self.assemble(0.0, x, ux, rho)
    }

    fn assemble(&self, t: f64, x: Vec<f64>, ux: Vec<f64>, rho: Vec<f64>) -> Result<EulerianState> {
        let u = self.spec.recover_u(&ux, 0.0)?;
        Ok(EulerianState { t, x, u, ux, rho })
    }

    fn rhs(&self, ux: &[f64], rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let lam = self.params.lambda;
        let kap = self.params.kappa;
        let u = self.spec.recover_u(ux, 0.0)?;
        let vx = self.spec.derivative(ux);
        let rx = self.spec.derivative(rho);
        let i_t = nonlocal_i(ux, rho, &self.params);
        let n = ux.len();
        let vt: Vec<f64> = (0..n)
            .map(|j| -u[j] * vx[j] + lam * ux[j] * ux[j] + kap * rho[j] * rho[j] + i_t)
            .collect();
        let rt: Vec<f64> = (0..n)
            .map(|j| -u[j] * rx[j] + 2.0 * lam * rho[j] * ux[j])
            .collect();
        Ok((self.spec.filter(&vt), self.spec.filter(&rt)))
    }

    /// Largest stable step at this state.
    pub fn max_dt(&self, s: &EulerianState) -> f64 {
        let dx = 1.0 / s.len() as f64;
        let umax = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vmax = s.ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (CFL * dx / umax.max(1e-300)).min(REACTION_LIMIT / vmax.max(1e-300))
    }

    /// One classical RK4 step.
    pub fn step(&self, s: &EulerianState, dt: f64) -> Result<EulerianState> {
        let bound = self.max_dt(s);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        let n = s.len();
        let axpy = |a: &[f64], h: f64, k: &[f64]| -> Vec<f64> {
            a.iter().zip(k).map(|(x, y)| x + h * y).collect()
        };
        let (k1v, k1r) = self.rhs(&s.ux, &s.rho)?;
        let (k2v, k2r) = self.rhs(&axpy(&s.ux, 0.5 * dt, &k1v), &axpy(&s.rho, 0.5 * dt, &k1r))?;
        let (k3v, k3r) = self.rhs(&axpy(&s.ux, 0.5 * dt, &k2v), &axpy(&s.rho, 0.5 * dt, &k2r))?;
        let (k4v, k4r) = self.rhs(&axpy(&s.ux, dt, &k3v), &axpy(&s.rho, dt, &k3r))?;
        let comb = |a: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| a[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                .collect()
        };
        let ux = comb(&s.ux, &k1v, &k2v, &k3v, &k4v);
        let rho = comb(&s.rho, &k1r, &k2r, &k3r, &k4r);
        let tail = self.spec.tail(&ux).max(self.spec.tail(&rho));
        let t = s.t + dt;
        if tail > PERIODIC_TAIL_LIMIT {
            let max_ux = ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::ResolutionLoss { t, tail, max_ux });
        }
        self.assemble(t, s.x.clone(), ux, rho)
    }

    /// Advance to `t_end` with steps no larger than `fraction` of the stable step.
    pub fn advance(&self, s: &EulerianState, t_end: f64, fraction: f64) -> Result<EulerianState> {
        let mut cur = s.clone();
        while cur.t < t_end {
            let dt = (fraction * self.max_dt(&cur)).min(t_end - cur.t);
            cur = self.step(&cur, dt)?;
            if t_end - cur.t < 1e-14 * t_end.max(1.0) {
                cur.t = t_end;
            }
        }
        Ok(cur)
    }
}

/// Relative L^2 discrepancies between the two solvers at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossRow {
    pub t: f64,
    pub ux_rel_l2: f64,
    pub rho_rel_l2: f64,
}

/// Compare u_x and rho of the periodic solver with the characteristic solution
/// at the given times, measuring the L^2(dy) error through the change of
/// variables y = gamma(x, t).
pub fn crosscheck(
    char_solver: &CharSolver,
    n: usize,
    times: &[f64],
    step_fraction: f64,
) -> Result<Vec<CrossRow>> {
    let ps = PeriodicSolver::new(n, char_solver.params)?;
    let mut state = ps.initial_state(&char_solver.datum)?;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        state = ps.advance(&state, t, step_fraction)?;
        let frame = char_solver.frame_at_time(t)?;
        let cv = ps.spec.forward(&state.ux);
        let cr = ps.spec.forward(&state.rho);
        let (mut eu, mut nu, mut er, mut nr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..frame.x.len() {
            let y = frame.gamma[i];
            let wg = frame.weights[i] * frame.gamma_x[i];
            let du = ps.spec.interpolate(&cv, y) - frame.ux_on_char[i];
            let dr = ps.spec.interpolate(&cr, y) - frame.rho_on_char[i];
            eu += wg * du * du;
            nu += wg * frame.ux_on_char[i].powi(2);
            er += wg * dr * dr;
            nr += wg * frame.rho_on_char[i].powi(2);
        }
        rows.push(CrossRow {
            t,
            ux_rel_l2: (eu / nu).sqrt(),
            rho_rel_l2: if nr > 0.0 { (er / nr).sqrt() } else { er.sqrt() },
        });
    }
    Ok(rows)
}

pub fn crosscheck_csv(rows: &[CrossRow]) -> String {
    let mut t = CsvTable::new(&["t", "ux_rel_l2", "rho_rel_l2"]);
    for r in rows {
        t.push_f64(&[r.t, r.ux_rel_l2, r.rho_rel_l2]);
    }
    t.render()
}

// ---------------------------------------------------------------------------
// three-point boundary problem

/// Weights of the derivatives 0..=m at z from values at xs (Fornberg's algorithm).
fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Clustered grid with banded differentiation and cumulative integration.
#[derive(Clone)]
pub struct ThreePointGrid {
    pub x: Vec<f64>,
    /// 5-point first-derivative stencils: (first index, weights)
    d1: Vec<(usize, [f64; 5])>,
    /// cumulative integral from 0 to x_i (dense lower triangle)
    cum: Vec<Vec<f64>>,
    dct: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ThreePointGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThreePointGrid").field("nodes", &self.x.len()).finish()
    }
}

impl ThreePointGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 9 {
            return Err(Error::Precondition(format!("three-point grid needs >= 9 nodes, got {n}")));
        }
        let x: Vec<f64> = (0..n)
            .map(|j| 0.5 * (1.0 - (PI * j as f64 / (n - 1) as f64).cos()))
            .collect();
        let d1 = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(2).min(n - 5);
                let w = fornberg(x[i], &x[lo..lo + 5], 1);
                let mut arr = [0.0; 5];
                for (a, row) in arr.iter_mut().zip(&w) {
                    *a = row[1];
                }
                (lo, arr)
            })
            .collect();
        // integrate the cubic through 4 nodes over each interval
        let mut cum = vec![vec![0.0; n]; n];
        for i in 1..n {
            let lo = (i.saturating_sub(2)).min(n - 4);
            let nodes = &x[lo..lo + 4];
            let (a, b) = (x[i - 1], x[i]);
            let g = crate::quad::GaussRule::new(3);
            let mut row = cum[i - 1].clone();
            for (k, _) in nodes.iter().enumerate() {
                let lk = |s: f64| {
                    nodes
                        .iter()
                        .enumerate()
                        .filter(|&(m, _)| m != k)
                        .map(|(_, &xm)| (s - xm) / (nodes[k] - xm))
                        .product::<f64>()
                };
                row[lo + k] += g.integrate(lk, a, b);
            }
            cum[i] = row;
        }
        let dct = FftPlanner::new().plan_fft_forward(2 * (n - 1));
        Ok(Self { x, d1, cum, dct })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        self.d1
            .iter()
            .map(|(lo, w)| w.iter().zip(&v[*lo..*lo + 5]).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn cumulative(&self, v: &[f64]) -> Vec<f64> {
        self.cum
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Chebyshev coefficients of the interpolant through the nodes.
    pub fn chebyshev(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let m = n - 1;
        // x_j increases with j while the Chebyshev points cos(pi j/m) decrease
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(2 * m);
        for j in 0..=m {
            buf.push(Complex::new(v[j], 0.0));
        }
        for j in (1..m).rev() {
            buf.push(Complex::new(v[j], 0.0));
        }
        self.dct.process(&mut buf);
        (0..n)
            .map(|k| {
                let s = if k == 0 || k == m { 1.0 } else { 2.0 };
                // node j sits at t = -cos(pi j/m), so T_k picks up (-1)^k
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * s * buf[k].re / (2.0 * m as f64)
            })
            .collect()
    }

    /// Energy fraction of the top third of Chebyshev modes.
    pub fn tail_fraction(&self, v: &[f64]) -> f64 {
        let c = self.chebyshev(v);
        let total: f64 = c.iter().map(|a| a * a).sum();
        if total == 0.0 {
            return 0.0;
        }
        let start = 2 * c.len() / 3;
        c[start..].iter().map(|a| a * a).sum::<f64>() / total
    }

    /// Clenshaw–Curtis integral over [0, 1].
    pub fn integral(&self, v: &[f64]) -> f64 {
        let c = self.chebyshev(v);
        c.iter()
            .enumerate()
            .filter(|(k, _)| k % 2 == 0)
            .map(|(k, a)| a / (1.0 - (k * k) as f64))
            .sum::<f64>()
    }
}

/// State of the three-point problem; v = u_x.
#[derive(Debug, Clone, Serialize)]
pub struct ThreePointState {
    pub t: f64,
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub rho: Vec<f64>,
    /// int u_x by Clenshaw–Curtis quadrature
    pub h: f64,
}

/// Method-of-lines solver for the three-point problem.
///
/// u = -int_x^1 u_x enforces u(1) = 0. The evolution of u_x is the periodic
/// one with I(t) replaced by the affine correction that keeps
/// u_x(0) = u_x(1) = 0, and rho(1) = 0 is preserved because u(1) = 0.
#[derive(Debug)]
pub struct ThreePointSolver {
    pub params: ModelParams,
    pub grid: ThreePointGrid,
}

impl ThreePointSolver {
    pub fn new(params: ModelParams, nodes: usize) -> Result<Self> {
        Ok(Self {
            params,
            grid: ThreePointGrid::new(nodes)?,
        })
    }

    pub fn recover_u(&self, ux: &[f64]) -> Vec<f64> {
        let c = self.grid.cumulative(ux);
        let last = c[c.len() - 1];
        c.iter().map(|v| v - last).collect()
    }

    /// State from u_x and rho samples; checks the boundary conditions.
    pub fn state(&self, t: f64, ux: Vec<f64>, rho: Vec<f64>) -> Result<ThreePointState> {
        let n = self.grid.len();
        let scale = ux.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let residual = ux[0].abs().max(ux[n - 1].abs()).max(rho[n - 1].abs()) / scale;
        if residual > 1e-8 {
            return Err(Error::BoundaryResidual { residual });
        }
        let u = self.recover_u(&ux);
        let h = self.grid.integral(&ux);
        Ok(ThreePointState { t, u, ux, rho, h })
    }

    pub fn initial_state<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(
        &self,
        ux0: F,
        rho0: G,
    ) -> Result<ThreePointState> {
        let ux = self.grid.x.iter().map(|&x| ux0(x)).collect();
        let rho = self.grid.x.iter().map(|&x| rho0(x)).collect();
        self.state(0.0, ux, rho)
    }

    fn rhs(&self, ux: &[f64], rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lam = self.params.lambda;
        let kap = self.params.kappa;
        let n = ux.len();
        let u = self.recover_u(ux);
        let vx = self.grid.derivative(ux);
        let rx = self.grid.derivative(rho);
        let r: Vec<f64> = (0..n)
            .map(|j| -u[j] * vx[j] + lam * ux[j] * ux[j] + kap * rho[j] * rho[j])
            .collect();
        let (r0, r1) = (r[0], r[n - 1]);
        let vt = (0..n)
            .map(|j| r[j] - r0 - self.grid.x[j] * (r1 - r0))
            .collect();
        let rt = (0..n)
            .map(|j| -u[j] * rx[j] + 2.0 * lam * rho[j] * ux[j])
            .collect();
        (vt, rt)
    }

    pub fn max_dt(&self, s: &ThreePointState) -> f64 {
        let dx = self.grid.x[1] - self.grid.x[0];
        let umax = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vmax = s.ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (CFL * dx / umax.max(1e-300)).min(REACTION_LIMIT / vmax.max(1e-300))
    }

    pub fn step(&self, s: &ThreePointState, dt: f64) -> Result<ThreePointState> {
        let bound = self.max_dt(s);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        let n = s.ux.len();
        let axpy = |a: &[f64], h: f64, k: &[f64]| -> Vec<f64> {
            a.iter().zip(k).map(|(x, y)| x + h * y).collect()
        };
        let (k1v, k1r) = self.rhs(&s.ux, &s.rho);
        let (k2v, k2r) = self.rhs(&axpy(&s.ux, 0.5 * dt, &k1v), &axpy(&s.rho, 0.5 * dt, &k1r));
        let (k3v, k3r) = self.rhs(&axpy(&s.ux, 0.5 * dt, &k2v), &axpy(&s.rho, 0.5 * dt, &k2r));
        let (k4v, k4r) = self.rhs(&axpy(&s.ux, dt, &k3v), &axpy(&s.rho, dt, &k3r));
        let comb = |a: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| a[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                .collect()
        };
        let ux = comb(&s.ux, &k1v, &k2v, &k3v, &k4v);
        let rho = comb(&s.rho, &k1r, &k2r, &k3r, &k4r);
        self.state(s.t + dt, ux, rho)
    }
}

/// One row of a three-point trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    /// int u_x by quadrature
    pub h: f64,
    /// u(0, t)
    pub u0: f64,
    pub max_ux: f64,
    /// 1/H(0) - (1 + lambda) t
    pub bound_rhs: f64,
    pub tail_fraction: f64,
}

/// Why a three-point run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    /// Chebyshev tail above its limit
    TailFraction,
    /// max|u_x| above its limit
    GradientLimit,
    /// reached the requested end time
    EndTime,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub rows: Vec<TrajectoryRow>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["t", "H", "u0", "max_ux", "bound_rhs", "tail_fraction"]);
        for r in &self.rows {
            t.push_f64(&[r.t, r.h, r.u0, r.max_ux, r.bound_rhs, r.tail_fraction]);
        }
        t.render()
    }
}

/// Integrate until resolution loss or `t_max`.
pub fn run_threepoint(
    solver: &ThreePointSolver,
    init: ThreePointState,
    t_max: f64,
) -> Result<Trajectory> {
    let lam = solver.params.lambda;
    let h0 = init.h;
    let row = |s: &ThreePointState| TrajectoryRow {
        t: s.t,
        h: s.h,
        u0: s.u[0],
        max_ux: s.ux.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        bound_rhs: 1.0 / h0 - (1.0 + lam) * s.t,
        tail_fraction: solver.grid.tail_fraction(&s.ux),
    };
    let mut s = init;
    let mut rows = vec![row(&s)];
    let termination = loop {
        let last = rows[rows.len() - 1];
        if last.tail_fraction > THREEPOINT_TAIL_LIMIT {
            break Termination::TailFraction;
        }
        if last.max_ux > THREEPOINT_UX_LIMIT {
            break Termination::GradientLimit;
        }
        if s.t >= t_max {
            break Termination::EndTime;
        }
        let dt = solver.max_dt(&s).min(t_max - s.t);
        s = solver.step(&s, dt)?;
        rows.push(row(&s));
    };
    Ok(Trajectory {
        params: solver.params,
        rows,
        termination,
    })
}

/// The three-point benchmark datum: u_x = sign (pi/2) sin(pi x) - 4 sin(2 pi x),
/// rho = sin^2(pi x)/2, so H(0) = sign. Both signs keep H u_xx(0) < 0.
pub fn threepoint_benchmark(
    solver: &ThreePointSolver,
    sign: f64,
) -> Result<ThreePointState> {
    solver.initial_state(
        |x| sign * 0.5 * PI * (PI * x).sin() - 4.0 * (2.0 * PI * x).sin(),
        |x| 0.5 * (PI * x).sin().powi(2),
    )
}

/// Outcome of the Riccati monitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiReport {
    pub h0: f64,
    /// 1/((1 + lambda) H(0))
    pub bound_t: f64,
    /// worst signed violation of the inequality on 1/H (positive = violated)
    pub max_violation: f64,
    pub violation_t: f64,
    /// worst of (1 + lambda) H^2 - H' relative to (1 + lambda) H^2 (sign-adjusted)
    pub max_derivative_violation: f64,
    /// max |H_quadrature + u(0, t)| relative to max(1, |H|)
    pub max_h_mismatch: f64,
    pub t_obs: f64,
    pub final_abs_u0: f64,
    pub termination: Termination,
    pub holds: bool,
}

/// Check the Riccati inequality along a trajectory.
///
/// For lambda > -1, kappa >= 0 and H(0) > 0: 1/H(t) <= 1/H(0) - (1 + lambda) t.
/// For lambda < -1, kappa <= 0 and H(0) < 0 the inequality is reversed.
pub fn riccati_monitor(traj: &Trajectory) -> Result<RiccatiReport> {
    let lam = traj.params.lambda;
    let kap = traj.params.kappa;
    let upper = if lam > -1.0 && kap >= 0.0 {
        true
    } else if lam < -1.0 && kap <= 0.0 {
        false
    } else {
        return Err(Error::Hypothesis(format!(
            "(lambda, kappa) = ({lam}, {kap}) is outside both admissible ranges"
        )));
    };
    let rows = &traj.rows;
    let h0 = rows[0].h;
    if upper && !(h0 > 0.0) || !upper && !(h0 < 0.0) {
        return Err(Error::Hypothesis(format!("H(0) = {h0} has the wrong sign")));
    }
    let sgn = if upper { 1.0 } else { -1.0 };
    let mut max_violation = f64::NEG_INFINITY;
    let mut violation_t = 0.0;
    let mut max_h_mismatch = 0.0f64;
    for r in rows {
        let v = sgn * (1.0 / r.h - r.bound_rhs);
        if v > max_violation {
            max_violation = v;
            violation_t = r.t;
        }
        max_h_mismatch = max_h_mismatch.max((r.h + r.u0).abs() / r.h.abs().max(1.0));
    }
    let mut max_dv = f64::NEG_INFINITY;
    for w in rows.windows(3) {
        let dh = (w[2].h - w[0].h) / (w[2].t - w[0].t);
        let rhs = (1.0 + lam) * w[1].h * w[1].h;
        max_dv = max_dv.max(sgn * (rhs - dh) / rhs.abs().max(1e-300));
    }
    let last = rows[rows.len() - 1];
    Ok(RiccatiReport {
        h0,
        bound_t: 1.0 / ((1.0 + lam) * h0),
        max_violation,
        violation_t,
        max_derivative_violation: max_dv,
        max_h_mismatch,
        t_obs: last.t,
        final_abs_u0: last.u0.abs(),
        termination: traj.termination,
        holds: max_violation <= RICCATI_SLACK,
    })
}
