//! Exact solution along characteristics.
//!
//! With Q = c eta^2 - 2 lambda u0' eta + 1, J = 1 - lambda eta u0' and
//! P0bar = int Q^{-1/(2 lambda)}, the Jacobian is gamma_x = Q^{-1/(2 lambda)} / P0bar,
//! rho o gamma = rho0 / (P0bar^{2 lambda} Q), and
//!
//! u_x o gamma = P0bar^{-2 lambda} (W - Wbar),  W = (u0' J + eta kappa rho0^2) / Q,
//!
//! with Wbar = int gamma_x W. This is the usual bracket
//! (J/Q - K/P0bar) / (lambda eta) with the 1/(lambda eta) divided out
//! analytically, so no small-eta cancellation occurs.
//!
//! Stages near eta* are addressed by the exact gap s = 1 - eta/eta*. The factor
//! that closes, 1 - lambda eta h(x), is evaluated as s + eta lambda (hbar - h(x))
//! with hbar - h(x) from a Taylor expansion about the extremum, which keeps Q
//! relatively accurate down to s ~ 1e-13.

use std::sync::OnceLock;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::initdata::{
    branch_deriv, classify_static, g_minus, g_plus, BlowupTime, BranchKind,
    CaseProfile, InitialDatum, ModelParams, SignCase,
};
use crate::output::fmt_f64;
use crate::quad::{adaptive, GaussRule, QuadOptions};

/// Uniform base panels of the characteristic grid.
pub const BASE_PANELS: usize = 32;
/// Levels of geometric refinement toward each eta* location.
pub const REFINE_DEPTH: usize = 30;
/// Levels of the graded eta mesh, eta_k = eta* (1 - 2^{-k}).
pub const CLOCK_LEVELS: usize = 40;
/// Gauss points per clock interval.
const CLOCK_GAUSS: usize = 10;
/// Step of the uniform clock mesh when Q never vanishes.
const GLOBAL_CLOCK_STEP: f64 = 0.25;
/// Relative tolerance for P0bar.
pub const P0BAR_REL_TOL: f64 = 1e-14;
/// Decision thresholds for the endpoint exponent sigma of the clock integrand.
pub const SIGMA_DIVERGENT: f64 = -1.0 + 1e-3;
pub const SIGMA_CONVERGENT: f64 = -1.0 + 1e-2;

/// Composite 16-point Gauss–Legendre grid on [0, 1), graded toward the
/// locations where Q first vanishes.
#[derive(Debug, Clone, Serialize)]
pub struct CharGrid {
    pub x_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub refinement_zones: Vec<(f64, f64)>,
    #[serde(skip)]
    panels: Vec<(f64, f64)>,
}

impl CharGrid {
    pub fn new(locations: &[f64]) -> Self {
        Self::with_depth(locations, BASE_PANELS, REFINE_DEPTH)
    }

    pub fn with_depth(locations: &[f64], base: usize, depth: usize) -> Self {
        let mut cuts: Vec<f64> = (0..=base).map(|j| j as f64 / base as f64).collect();
        let mut zones = Vec::new();
        for &x0 in locations {
            cuts.push(x0);
            let w = 1.0 / base as f64;
            zones.push(((x0 - w).rem_euclid(1.0), (x0 + w).rem_euclid(1.0)));
            for k in 0..=depth {
                let h = w * 0.5f64.powi(k as i32);
                for y in [x0 - h, x0 + h] {
                    cuts.push(y.rem_euclid(1.0));
                }
            }
        }
        cuts.retain(|c| (0.0..=1.0).contains(c));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let rule = GaussRule::g16();
        let mut x_nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panels = Vec::new();
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            panels.push((a, b));
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                x_nodes.push(c + h * x);
                weights.push(h * w);
            }
        }
        Self {
            x_nodes,
            weights,
            refinement_zones: zones,
            panels,
        }
    }

    pub fn len(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Cumulative integral from 0 to each node of the piecewise interpolant.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        static SMAT: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
        let s = SMAT.get_or_init(|| GaussRule::g16().cumulative_matrix());
        let n = 16;
        let mut out = vec![0.0; values.len()];
        let mut base = 0.0;
        for (p, &(a, b)) in self.panels.iter().enumerate() {
            let h = 0.5 * (b - a);
            let f = &values[p * n..(p + 1) * n];
            for i in 0..n {
                let v: f64 = s[i].iter().zip(f).map(|(sij, fj)| sij * fj).sum();
                out[p * n + i] = base + h * v;
            }
            let total: f64 = f
                .iter()
                .zip(&self.weights[p * n..(p + 1) * n])
                .map(|(v, w)| v * w)
                .sum();
            base += total;
        }
        out
    }
}

/// A point on the eta axis; `gap` = 1 - eta/eta* is carried exactly when
/// eta* exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stage {
    pub eta: f64,
    pub gap: Option<f64>,
}

/// Solution snapshot on the characteristic grid.
#[derive(Debug, Clone, Serialize)]
pub struct CharFrame {
    pub eta: f64,
    pub gap: Option<f64>,
    pub t: f64,
    pub lambda: f64,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_x: Vec<f64>,
    pub ux_on_char: Vec<f64>,
    pub rho_on_char: Vec<f64>,
    pub q: Vec<f64>,
    pub j: Vec<f64>,
    /// (u0' J + eta kappa rho0^2)/Q
    pub w: Vec<f64>,
    pub rho0: Vec<f64>,
    pub p0bar: f64,
    pub p0bar_err: f64,
}

impl CharFrame {
    /// int gamma_x dx on the grid.
    pub fn mass(&self) -> f64 {
        integrate_w(&self.weights, &self.gamma_x)
    }

    /// int (u_x o gamma) gamma_x dx.
    pub fn ux_mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.ux_on_char)
            .zip(&self.gamma_x)
            .map(|((w, u), g)| w * u * g)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,gamma,gamma_x,ux,rho,Q,J\n");
        for i in 0..self.x.len() {
            let row = [
                self.x[i],
                self.gamma[i],
                self.gamma_x[i],
                self.ux_on_char[i],
                self.rho_on_char[i],
                self.q[i],
                self.j[i],
            ];
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "eta": self.eta,
            "gap": self.gap,
            "t": self.t,
            "P0bar": self.p0bar,
            "P0bar_error_estimate": self.p0bar_err,
            "mass_defect": self.mass() - 1.0,
            "ux_mean": self.ux_mean(),
            "nodes": self.x.len(),
        })
    }
}

fn integrate_w(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// Q = J^2 - lambda kappa eta^2 rho0^2; J may close
    Sum,
    /// Q = f+ f-; one factor may close
    Product,
}

/// Per-location Taylor data for hbar - h(x).
#[derive(Debug, Clone)]
struct Taylor {
    center: f64,
    radius: f64,
    /// h^{(k)}(center)/k! for k >= 1
    coeffs: Vec<f64>,
}

impl Taylor {
    fn defect(&self, d: f64) -> f64 {
        // hbar - h(center + d) = -sum_k c_k d^k, Horner
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * d + c;
        }
        -(acc * d)
    }
}

/// Bundles a datum, its classification and the characteristic grid.
pub struct CharSolver {
    pub datum: InitialDatum,
    pub params: ModelParams,
    pub profile: CaseProfile,
    pub grid: CharGrid,
    mode: Mode,
    kind: Option<BranchKind>,
    hbar: f64,
    taylor: Vec<Taylor>,
    // per-node static data
    ux0: Vec<f64>,
    rho0: Vec<f64>,
    /// lambda (hbar - h(x)) for the closing factor
    defect: Vec<f64>,
    /// h(x) of the closing factor (J's u0' or g+/g-)
    h_node: Vec<f64>,
    /// value of the non-closing branch for the product mode
    other: Vec<f64>,
    clock: OnceLock<std::result::Result<EtaClock, Error>>,
    eta_max_global: f64,
}

impl std::fmt::Debug for CharSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CharSolver")
            .field("params", &self.params)
            .field("eta_star", &self.profile.eta_star)
            .field("nodes", &self.grid.len())
            .finish()
    }
}

impl CharSolver {
    /// Classify (without the clock) and build the grid.
    pub fn new(datum: &InitialDatum, params: &ModelParams) -> Result<Self> {
        let profile = classify_static(datum, params)?;
        Self::with_profile(datum, params, profile)
    }

    pub fn with_profile(
        datum: &InitialDatum,
        params: &ModelParams,
        profile: CaseProfile,
    ) -> Result<Self> {
        let locs = profile.eta_star_location();
        let grid = CharGrid::new(&locs);
        Self::with_grid(datum, params, profile, grid)
    }

    pub fn with_grid(
        datum: &InitialDatum,
        params: &ModelParams,
        profile: CaseProfile,
        grid: CharGrid,
    ) -> Result<Self> {
        let lam = params.lambda;
        let mode = if profile.sign_case == SignCase::LkNeg || profile.rho_identically_zero {
            Mode::Sum
        } else {
            Mode::Product
        };
        let kind = profile.active.as_ref().map(|a| a.kind);
        let hbar = profile.extremum().unwrap_or(0.0);
        let h_of = |x: f64| -> f64 {
            match (mode, kind) {
                (Mode::Sum, _) => datum.ux0(x),
                (Mode::Product, Some(BranchKind::GMinus)) => g_minus(datum, params, x),
                (Mode::Product, _) => g_plus(datum, params, x),
            }
        };
        let other_of = |x: f64| -> f64 {
            match kind {
                Some(BranchKind::GMinus) => g_plus(datum, params, x),
                _ => g_minus(datum, params, x),
            }
        };
        let mut taylor = Vec::new();
        if let Some(active) = &profile.active {
            let wmax = 2.0 * std::f64::consts::PI * (datum.max_mode().max(1) as f64 + 1.0);
            for &c in &active.locations {
                let mut coeffs = Vec::new();
                let mut fact = 1.0;
                for k in 1..=40u32 {
                    fact *= k as f64;
                    coeffs.push(branch_deriv(datum, params, active.kind, c, k) / fact);
                }
                taylor.push(Taylor {
                    center: c,
                    radius: (1.0 / wmax).min(0.05),
                    coeffs,
                });
            }
        }
        let n = grid.len();
        let mut ux0 = Vec::with_capacity(n);
        let mut rho0 = Vec::with_capacity(n);
        let mut defect = Vec::with_capacity(n);
        let mut h_node = Vec::with_capacity(n);
        let mut other = Vec::with_capacity(n);
        for &x in &grid.x_nodes {
            ux0.push(datum.ux0(x));
            rho0.push(datum.rho0(x));
            let h = h_of(x);
            h_node.push(h);
            other.push(if mode == Mode::Product { other_of(x) } else { 0.0 });
            defect.push(lam * defect_at(&taylor, hbar, h, x));
        }
        Ok(Self {
            datum: datum.clone(),
            params: *params,
            profile,
            grid,
            mode,
            kind,
            hbar,
            taylor,
            ux0,
            rho0,
            defect,
            h_node,
            other,
            clock: OnceLock::new(),
            eta_max_global: 10.0,
        })
    }

    /// Upper end of the clock when Q never vanishes.
    pub fn set_global_eta_max(&mut self, eta_max: f64) {
        self.eta_max_global = eta_max;
        self.clock = OnceLock::new();
    }

    pub fn eta_star(&self) -> Option<f64> {
        self.profile.eta_star
    }

    pub fn stage_from_eta(&self, eta: f64) -> Stage {
        Stage {
            eta,
            gap: self.eta_star().map(|es| 1.0 - eta / es),
        }
    }

    /// Stage at gap s = 1 - eta/eta*; requires eta*.
    pub fn stage_from_gap(&self, s: f64) -> Result<Stage> {
        let es = self
            .eta_star()
            .ok_or_else(|| Error::Precondition("no eta*: Q never vanishes".into()))?;
        Ok(Stage {
            eta: es * (1.0 - s),
            gap: Some(s),
        })
    }

    fn closing(&self, stage: &Stage, defect: f64, h: f64) -> f64 {
        match stage.gap {
            Some(s) if self.profile.active.is_some() => s + stage.eta * defect,
            _ => 1.0 - self.params.lambda * stage.eta * h,
        }
    }

    fn qj_parts(&self, stage: &Stage, ux: f64, rho: f64, defect: f64, h: f64, other: f64) -> (f64, f64) {
        let lam = self.params.lambda;
        let eta = stage.eta;
        match self.mode {
            Mode::Sum => {
                let j = if self.profile.active.is_some() {
                    self.closing(stage, defect, h)
                } else {
                    1.0 - lam * eta * ux
                };
                let q = j * j - lam * self.params.kappa * eta * eta * rho * rho;
                (q, j)
            }
            Mode::Product => {
                let fa = self.closing(stage, defect, h);
                let fo = 1.0 - lam * eta * other;
                (fa * fo, 0.5 * (fa + fo))
            }
        }
    }

    /// (Q, J) at an arbitrary x.
    pub fn q_and_j_stage(&self, x: f64, stage: &Stage) -> (f64, f64) {
        let ux = self.datum.ux0(x);
        let rho = self.datum.rho0(x);
        let (h, other) = match (self.mode, self.kind) {
            (Mode::Sum, _) => (ux, 0.0),
            (Mode::Product, Some(BranchKind::GMinus)) => (
                g_minus(&self.datum, &self.params, x),
                g_plus(&self.datum, &self.params, x),
            ),
            (Mode::Product, _) => (
                g_plus(&self.datum, &self.params, x),
                g_minus(&self.datum, &self.params, x),
            ),
        };
        let d = self.params.lambda * defect_at(&self.taylor, self.hbar, h, x);
        self.qj_parts(stage, ux, rho, d, h, other)
    }

    fn node_qj(&self, i: usize, stage: &Stage) -> (f64, f64) {
        self.qj_parts(
            stage,
            self.ux0[i],
            self.rho0[i],
            self.defect[i],
            self.h_node[i],
            self.other[i],
        )
    }

    /// P0bar = int Q^{-1/(2 lambda)} by adaptive quadrature; returns (value, error).
    pub fn p0bar_stage(&self, stage: &Stage) -> Result<(f64, f64)> {
        if stage.eta == 0.0 {
            return Ok((1.0, 0.0));
        }
        let e = -1.0 / (2.0 * self.params.lambda);
        let mut breaks: Vec<f64> = (1..BASE_PANELS).map(|j| j as f64 / BASE_PANELS as f64).collect();
        for t in &self.taylor {
            breaks.push(t.center);
            for k in 0..=REFINE_DEPTH {
                let h = 0.5f64.powi(k as i32) / BASE_PANELS as f64;
                breaks.push((t.center - h).rem_euclid(1.0));
                breaks.push((t.center + h).rem_euclid(1.0));
            }
        }
        let opts = QuadOptions {
            rel_tol: P0BAR_REL_TOL,
            abs_tol: 0.0,
            max_panels: 4000,
        };
        let r = adaptive(
            |x| {
                let (q, _) = self.q_and_j_stage(x, stage);
                q.powf(e)
            },
            0.0,
            1.0,
            &breaks,
            &opts,
        )?;
        if !(r.value > 0.0) {
            return Err(Error::Quadrature {
                reason: "P0bar is not positive".into(),
                value: r.value,
                error: r.error,
            });
        }
        Ok((r.value, r.error))
    }

    /// Evaluate all fields on the grid; gamma is anchored at `gamma0`.
    fn fields(&self, stage: &Stage, gamma0: Option<f64>) -> Result<CharFrame> {
        let lam = self.params.lambda;
        let kappa = self.params.kappa;
        let n = self.grid.len();
        let mut q = Vec::with_capacity(n);
        let mut j = Vec::with_capacity(n);
        for i in 0..n {
            let (qi, ji) = self.node_qj(i, stage);
            if !(qi > 0.0) {
                return Err(Error::BlowupProximity {
                    eta: stage.eta,
                    x: self.grid.x_nodes[i],
                    q: qi,
                });
            }
            q.push(qi);
            j.push(ji);
        }
        let (p0, p0err) = self.p0bar_stage(stage)?;
        let e = -1.0 / (2.0 * lam);
        let gamma_x: Vec<f64> = q.iter().map(|qi| qi.powf(e) / p0).collect();
        let w: Vec<f64> = (0..n)
            .map(|i| (self.ux0[i] * j[i] + stage.eta * kappa * self.rho0[i] * self.rho0[i]) / q[i])
            .collect();
        let wbar: f64 = (0..n).map(|i| self.grid.weights[i] * gamma_x[i] * w[i]).sum();
        let scale = p0.powf(-2.0 * lam);
        let ux: Vec<f64> = w.iter().map(|wi| scale * (wi - wbar)).collect();
        let rho: Vec<f64> = (0..n).map(|i| self.rho0[i] / (q[i] / scale)).collect();
        let g_cum = self.grid.cumulative(&gamma_x);
        let g0 = gamma0.unwrap_or(0.0);
        let gamma: Vec<f64> = g_cum.iter().map(|g| g0 + g).collect();
        Ok(CharFrame {
            eta: stage.eta,
            gap: stage.gap,
            t: f64::NAN,
            lambda: lam,
            x: self.grid.x_nodes.clone(),
            weights: self.grid.weights.clone(),
            gamma,
            gamma_x,
            ux_on_char: ux,
            rho_on_char: rho,
            q,
            j,
            w,
            rho0: self.rho0.clone(),
            p0bar: p0,
            p0bar_err: p0err,
        })
    }

    /// The eta <-> t map, built on first use.
    pub fn clock(&self) -> Result<&EtaClock> {
        let c = self.clock.get_or_init(|| EtaClock::build(self));
        c.as_ref().map_err(|e| e.clone())
    }

    /// Frame at eta (0 <= eta < eta*).
    pub fn frame_at(&self, eta: f64) -> Result<CharFrame> {
        self.frame_at_stage(&self.stage_from_eta(eta))
    }

    /// Frame at gap s = 1 - eta/eta*.
    pub fn frame_at_gap(&self, s: f64) -> Result<CharFrame> {
        self.frame_at_stage(&self.stage_from_gap(s)?)
    }

    pub fn frame_at_stage(&self, stage: &Stage) -> Result<CharFrame> {
        if stage.eta < 0.0 {
            return Err(Error::Precondition(format!("eta = {} is negative", stage.eta)));
        }
        if let Some(s) = stage.gap {
            if !(s > 0.0) {
                return Err(Error::Precondition(format!(
                    "eta = {} is not below eta*",
                    stage.eta
                )));
            }
        }
        let clock = self.clock()?;
        let (t, g0) = clock.t_and_anchor(self, stage)?;
        let mut f = self.fields(stage, Some(g0))?;
        f.t = t;
        Ok(f)
    }

    /// Frame at physical time t.
    pub fn frame_at_time(&self, t: f64) -> Result<CharFrame> {
        let stage = self.clock()?.stage_at_time(self, t)?;
        self.frame_at_stage(&stage)
    }

    /// Frame without clock or anchor (t = NaN, gamma(0) = 0); used where only
    /// quantities invariant under the anchor are needed.
    pub fn fields_only(&self, stage: &Stage) -> Result<CharFrame> {
        self.fields(stage, None)
    }

    /// Time derivative of the clock, dt/deta = P0bar^{2 lambda}.
    pub fn dt_deta(&self, stage: &Stage) -> Result<f64> {
        Ok(self.p0bar_stage(stage)?.0.powf(2.0 * self.params.lambda))
    }
}

fn defect_at(taylor: &[Taylor], hbar: f64, h: f64, x: f64) -> f64 {
    for t in taylor {
        let d = signed_offset(x, t.center);
        if d.abs() <= t.radius {
            return t.defect(d);
        }
    }
    hbar - h
}

/// x - c reduced to (-1/2, 1/2].
fn signed_offset(x: f64, c: f64) -> f64 {
    let mut d = (x - c).rem_euclid(1.0);
    if d > 0.5 {
        d -= 1.0;
    }
    d
}

/// Tabulated eta <-> t map and the anchor gamma(0, t).
#[derive(Debug, Clone)]
pub struct EtaClock {
    /// mesh stages
    pub mesh: Vec<Stage>,
    /// t at each mesh stage
    pub t_mesh: Vec<f64>,
    /// gamma(0, t) at each mesh stage
    pub anchor_mesh: Vec<f64>,
    /// endpoint exponent of dt/deta as a power of the gap
    pub sigma: Option<f64>,
    pub t_star: Option<BlowupTime>,
}

impl EtaClock {
    fn build(solver: &CharSolver) -> Result<Self> {
        let mesh: Vec<Stage> = match solver.eta_star() {
            Some(_) => (0..=CLOCK_LEVELS)
                .map(|k| solver.stage_from_gap(0.5f64.powi(k as i32)))
                .collect::<Result<_>>()?,
            None => {
                let n = (solver.eta_max_global / GLOBAL_CLOCK_STEP).ceil() as usize;
                (0..=n)
                    .map(|k| solver.stage_from_eta(k as f64 * GLOBAL_CLOCK_STEP))
                    .collect()
            }
        };
        let mut t_mesh = vec![0.0];
        let mut anchor_mesh = vec![0.0];
        for k in 1..mesh.len() {
            let (dt, da) = Self::segment(solver, &mesh[k - 1], &mesh[k])?;
            t_mesh.push(t_mesh[k - 1] + dt);
            anchor_mesh.push(anchor_mesh[k - 1] + da);
        }
        let mut clock = Self {
            mesh,
            t_mesh,
            anchor_mesh,
            sigma: None,
            t_star: None,
        };
        if solver.eta_star().is_some() {
            clock.decide_t_star(solver)?;
        } else {
            clock.t_star = Some(BlowupTime::Infinite);
        }
        Ok(clock)
    }

    /// Integrals of dt/deta and of u(gamma(0)) dt/deta between two stages.
    fn segment(solver: &CharSolver, a: &Stage, b: &Stage) -> Result<(f64, f64)> {
        let rule = gauss(CLOCK_GAUSS);
        let mut dt = 0.0;
        let mut da = 0.0;
        let h = 0.5 * (b.eta - a.eta);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let st = interpolate_stage(a, b, 0.5 * (1.0 + x));
            let f = solver.fields(&st, None)?;
            let rate = f.p0bar.powf(2.0 * solver.params.lambda);
            dt += w * rate;
            da += w * rate * anchor_velocity_of(&f);
        }
        Ok((dt * h, da * h))
    }

    fn decide_t_star(&mut self, solver: &CharSolver) -> Result<()> {
        // sample dt/deta over the last two decades of the gap
        let n = self.mesh.len();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for st in self.mesh.iter().skip(1) {
            let s = st.gap.unwrap();
            let smin = self.mesh[n - 1].gap.unwrap();
            if s <= 100.0 * smin {
                xs.push(s.ln());
                ys.push(solver.dt_deta(st)?.ln());
            }
        }
        let sigma = crate::norms::ols(&xs, &ys).slope;
        self.sigma = Some(sigma);
        let es = solver.eta_star().unwrap();
        self.t_star = Some(if sigma <= SIGMA_DIVERGENT {
            BlowupTime::Infinite
        } else if sigma >= SIGMA_CONVERGENT {
            // tail of int_0^{s_K} A s^sigma eta* ds beyond the last mesh point
            let s_k = self.mesh[n - 1].gap.unwrap();
            let a = solver.dt_deta(&self.mesh[n - 1])?;
            let tail = es * a * s_k / (sigma + 1.0);
            BlowupTime::Finite(self.t_mesh[n - 1] + tail)
        } else {
            return Err(Error::DivergenceUndecidable { sigma });
        });
        Ok(())
    }

    fn locate(&self, eta: f64) -> usize {
        // index k with mesh[k].eta <= eta
        match self
            .mesh
            .binary_search_by(|s| s.eta.total_cmp(&eta))
        {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        }
    }

    /// t(eta) and gamma(0, t(eta)).
    pub fn t_and_anchor(&self, solver: &CharSolver, stage: &Stage) -> Result<(f64, f64)> {
        if stage.eta > self.mesh.last().unwrap().eta {
            if solver.eta_star().is_none() {
                return Err(Error::Precondition(format!(
                    "eta = {} beyond the clock range {}",
                    stage.eta,
                    self.mesh.last().unwrap().eta
                )));
            }
            // deeper than the tabulated mesh: integrate from the last node
        }
        let k = self.locate(stage.eta).min(self.mesh.len() - 1);
        let base = &self.mesh[k];
        if base.eta == stage.eta {
            return Ok((self.t_mesh[k], self.anchor_mesh[k]));
        }
        let (dt, da) = Self::segment(solver, base, stage)?;
        Ok((self.t_mesh[k] + dt, self.anchor_mesh[k] + da))
    }

    pub fn t_of_eta(&self, solver: &CharSolver, eta: f64) -> Result<f64> {
        let st = solver.stage_from_eta(eta);
        Ok(self.t_and_anchor(solver, &st)?.0)
    }

    /// Inverse of the clock by safeguarded Newton inside the bracketing mesh interval.
    pub fn stage_at_time(&self, solver: &CharSolver, t: f64) -> Result<Stage> {
        if t < 0.0 {
            return Err(Error::Precondition(format!("t = {t} is negative")));
        }
        if t == 0.0 {
            return Ok(solver.stage_from_eta(0.0));
        }
        let k = match self.t_mesh.iter().position(|&tk| tk > t) {
            Some(k) => k,
            // the last tabulated time itself
            None if t == *self.t_mesh.last().unwrap() => return Ok(*self.mesh.last().unwrap()),
            None => {
                return Err(Error::Precondition(format!(
                    "t = {t} lies beyond the tabulated clock (t_max = {})",
                    self.t_mesh.last().unwrap()
                )))
            }
        };
        let lo = self.mesh[k - 1];
        let hi = self.mesh[k];
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut theta = (t - self.t_mesh[k - 1]) / (self.t_mesh[k] - self.t_mesh[k - 1]);
        for _ in 0..60 {
            let st = interpolate_stage(&lo, &hi, theta);
            let (dt, _) = Self::segment_t_only(solver, &lo, &st)?;
            let f = self.t_mesh[k - 1] + dt - t;
            if f.abs() <= 1e-15 * t.max(1e-300) {
                return Ok(st);
            }
            if f > 0.0 {
                b = theta;
            } else {
                a = theta;
            }
            let deriv = solver.dt_deta(&st)? * (hi.eta - lo.eta);
            let next = theta - f / deriv;
            let next = if next > a && next < b { next } else { 0.5 * (a + b) };
            if (next - theta).abs() < 1e-16 {
                return Ok(interpolate_stage(&lo, &hi, next));
            }
            theta = next;
        }
        Ok(interpolate_stage(&lo, &hi, theta))
    }

    fn segment_t_only(solver: &CharSolver, a: &Stage, b: &Stage) -> Result<(f64, f64)> {
        let rule = gauss(CLOCK_GAUSS);
        let h = 0.5 * (b.eta - a.eta);
        let mut dt = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let st = interpolate_stage(a, b, 0.5 * (1.0 + x));
            dt += w * solver.dt_deta(&st)?;
        }
        Ok((dt * h, 0.0))
    }
}

fn gauss(n: usize) -> &'static GaussRule {
    static R: OnceLock<GaussRule> = OnceLock::new();
    debug_assert_eq!(n, CLOCK_GAUSS);
    R.get_or_init(|| GaussRule::new(CLOCK_GAUSS))
}

/// Stage at fraction theta between a and b, interpolating the gap exactly.
fn interpolate_stage(a: &Stage, b: &Stage, theta: f64) -> Stage {
    let eta = a.eta + theta * (b.eta - a.eta);
    let gap = match (a.gap, b.gap) {
        (Some(ga), Some(gb)) => Some(ga + theta * (gb - ga)),
        _ => None,
    };
    Stage { eta, gap }
}

/// u(gamma(0,t),t) = int_0^1 G u_x(gamma) gamma_x dx with G(x) = int_0^x gamma_x,
/// for a frame built with gamma(0) = 0.
fn anchor_velocity_of(frame: &CharFrame) -> f64 {
    (0..frame.x.len())
        .map(|i| frame.weights[i] * frame.gamma[i] * frame.ux_on_char[i] * frame.gamma_x[i])
        .sum()
}

/// t* for a classified datum (finite or infinite).
pub fn blowup_time(
    datum: &InitialDatum,
    params: &ModelParams,
    profile: &CaseProfile,
) -> Result<BlowupTime> {
    if profile.eta_star.is_none() {
        return Ok(BlowupTime::Infinite);
    }
    let solver = CharSolver::with_profile(datum, params, profile.clone())?;
    let clock = solver.clock()?;
    Ok(clock.t_star.unwrap_or(BlowupTime::Infinite))
}

/// (Q, J) at (x, eta) straight from the definitions.
pub fn q_and_j(datum: &InitialDatum, params: &ModelParams, x: f64, eta: f64) -> (f64, f64) {
    let ux = datum.ux0(x);
    let rho = datum.rho0(x);
    let lam = params.lambda;
    let j = 1.0 - lam * eta * ux;
    let q = j * j - lam * params.kappa * eta * eta * rho * rho;
    (q, j)
}

/// Residual of omega_tt + lambda I omega = -lambda kappa rho0^2 omega^{-3}
/// for omega = gamma_x^{-lambda}, with time derivatives by central differences
/// over three frames at t - dt, t, t + dt. Returns the max-norm residual.
pub fn ode_residual_check(solver: &CharSolver, t: f64, dt: f64) -> Result<f64> {
    let lam = solver.params.lambda;
    let kappa = solver.params.kappa;
    if t - dt < 0.0 {
        return Err(Error::Precondition("need t >= dt for central differences".into()));
    }
    let frames: Vec<CharFrame> = [t - dt, t, t + dt]
        .iter()
        .map(|&tt| {
            let st = solver.clock()?.stage_at_time(solver, tt)?;
            solver.fields_only(&st)
        })
        .collect::<Result<_>>()?;
    let om = |f: &CharFrame, i: usize| f.gamma_x[i].powf(-lam);
    let mid = &frames[1];
    let i_t = nonlocal_on_char(mid, kappa, lam);
    let mut worst = 0.0f64;
    for i in 0..mid.x.len() {
        let w0 = om(&frames[0], i);
        let w1 = om(mid, i);
        let w2 = om(&frames[2], i);
        let acc = (w2 - 2.0 * w1 + w0) / (dt * dt);
        let r = acc + lam * i_t * w1 + lam * kappa * mid.rho0[i].powi(2) * w1.powi(-3);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// I(t) = -kappa int rho^2 dy - (1 + lambda) int u_x^2 dy, evaluated on characteristics.
pub fn nonlocal_on_char(frame: &CharFrame, kappa: f64, lambda: f64) -> f64 {
    let mut rho2 = 0.0;
    let mut ux2 = 0.0;
    for i in 0..frame.x.len() {
        let wg = frame.weights[i] * frame.gamma_x[i];
        rho2 += wg * frame.rho_on_char[i].powi(2);
        ux2 += wg * frame.ux_on_char[i].powi(2);
    }
    -kappa * rho2 - (1.0 + lambda) * ux2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::{make_benchmark_datum, BenchmarkCase};

    fn solver(case: BenchmarkCase, l: f64, k: f64) -> CharSolver {
        let d = make_benchmark_datum(case, 1.0).unwrap();
        CharSolver::new(&d, &ModelParams::new(l, k, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn grid_weights_sum_to_one() {
        let g = CharGrid::new(&[0.25, 0.9]);
        let s: f64 = g.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(g.x_nodes.windows(2).all(|w| w[0] < w[1]));
        let c = g.cumulative(&vec![1.0; g.len()]);
        for (x, v) in g.x_nodes.iter().zip(&c) {
            assert!((x - v).abs() < 1e-14);
        }
    }

    #[test]
    fn q_and_j_at_zero_and_on_zeros() {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 1.0).unwrap();
        let p = ModelParams::new(3.0, -1.0, 2.0).unwrap();
        assert_eq!(q_and_j(&d, &p, 0.3, 0.0), (1.0, 1.0));
        let (q, j) = q_and_j(&d, &p, 0.25, 0.2);
        assert!((q - j * j).abs() < 1e-15);
        let s = CharSolver::new(&d, &p).unwrap();
        let st = s.stage_from_gap(0.0).unwrap();
        let (q, _) = s.q_and_j_stage(0.25, &st);
        assert!(q.abs() < 1e-30);
    }

    #[test]
    fn initial_frame_is_identity() {
        let s = solver(BenchmarkCase::LkNegSingleMax, -0.5, 0.5);
        let f = s.frame_at(0.0).unwrap();
        for i in 0..f.x.len() {
            assert!((f.gamma_x[i] - 1.0).abs() < 1e-15);
            assert!((f.gamma[i] - f.x[i]).abs() < 1e-14);
            assert!((f.ux_on_char[i] - s.datum.ux0(f.x[i])).abs() < 1e-13);
            assert!((f.rho_on_char[i] - s.datum.rho0(f.x[i])).abs() < 1e-15);
        }
        assert_eq!(f.t, 0.0);
    }

    #[test]
    fn p0bar_closed_form_for_lambda_minus_half() {
        // exponent -1/(2 lambda) = 1, so P0bar = 1 + eta^2 int c
        let s = solver(BenchmarkCase::LkNegSingleMax, -0.5, 0.5);
        let eta = 0.3;
        let n = 4096;
        let cbar: f64 = (0..n)
            .map(|j| crate::initdata::c_of_x(&s.datum, &s.params, j as f64 / n as f64))
            .sum::<f64>()
            / n as f64;
        let (p, _) = s.p0bar_stage(&s.stage_from_eta(eta)).unwrap();
        assert!((p - (1.0 + cbar * eta * eta)).abs() < 1e-13);
    }
}
