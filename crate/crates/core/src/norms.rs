//! L^p norms of u_x and rho through the characteristic change of variables,
//! the Jensen/Minkowski bounds on ||u_x||_p, and log-log rate fits.

use rayon::prelude::*;
use serde::Serialize;

use crate::charsolve::{CharFrame, CharSolver, Stage};
use crate::error::{Error, Result};
use crate::initdata::{predict_norm_exponent, CaseProfile, Exponent, ModelParams, Quantity};
use crate::output::CsvTable;

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 20;
/// Decades of the gap used by the fit.
pub const FIT_DECADES: f64 = 2.0;
/// Default |fitted - predicted| for MATCH.
pub const EXPONENT_TOL: f64 = 0.02;
/// Relative growth over the final decade below which a series counts as bounded.
pub const BOUNDED_GROWTH: f64 = 0.05;
/// R^2 required on the log|log| abscissa for a logarithmic law.
pub const LOG_R2: f64 = 0.99;

/// Ordinary least squares fit y = intercept + slope x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// standard error of the slope
    pub stderr: f64,
    pub r2: f64,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let stderr = if n > 2.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        stderr,
        r2,
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Precondition(format!("p must lie in [1, inf), got {p}")));
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature {
            reason: format!("{what} is not finite"),
            value: v,
            error: f64::INFINITY,
        })
    }
}

/// ||u_x||_p = (int |u_x o gamma|^p gamma_x dx)^{1/p}.
pub fn ux_norm(frame: &CharFrame, p: f64) -> Result<f64> {
    check_p(p)?;
    let s: f64 = (0..frame.x.len())
        .map(|i| frame.weights[i] * frame.ux_on_char[i].abs().powf(p) * frame.gamma_x[i])
        .sum();
    finite(s.powf(1.0 / p), "||u_x||_p")
}

/// ||rho||_p^p = P0bar^{-2 lambda p - 1} int |rho0|^p Q^{-(p + 1/(2 lambda))} dx.
pub fn rho_norm_pow(frame: &CharFrame, p: f64) -> Result<f64> {
    check_p(p)?;
    let lam = frame.lambda;
    let e = -(p + 1.0 / (2.0 * lam));
    let s: f64 = (0..frame.x.len())
        .filter(|&i| frame.rho0[i] != 0.0)
        .map(|i| frame.weights[i] * frame.rho0[i].abs().powf(p) * frame.q[i].powf(e))
        .sum();
    finite(frame.p0bar.powf(-2.0 * lam * p - 1.0) * s, "||rho||_p^p")
}

pub fn rho_norm(frame: &CharFrame, p: f64) -> Result<f64> {
    Ok(rho_norm_pow(frame, p)?.powf(1.0 / p))
}

/// Jensen lower and Minkowski upper bounds on ||u_x||_p.
///
/// The upper bound carries a 1/(lambda eta) prefactor and is infinite at eta = 0.
pub fn ux_bounds(frame: &CharFrame, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    let lam = frame.lambda;
    let n = frame.x.len();
    let scale = frame.p0bar.powf(-2.0 * lam);
    let wbar: f64 = (0..n).map(|i| frame.weights[i] * frame.gamma_x[i] * frame.w[i]).sum();
    let jensen: f64 = (0..n)
        .map(|i| frame.weights[i] * frame.gamma_x[i].powf(1.0 / p) * (frame.w[i] - wbar))
        .sum();
    let lower = scale * jensen.abs();

    let upper = if frame.eta == 0.0 {
        f64::INFINITY
    } else {
        let e = 1.0 / (2.0 * lam);
        let mut jp = 0.0;
        let mut k = 0.0;
        for i in 0..n {
            let q = frame.q[i];
            jp += frame.weights[i] * frame.j[i].abs().powf(p) * q.powf(-p - e);
            k += frame.weights[i] * frame.j[i] * q.powf(-1.0 - e);
        }
        let pre = frame.p0bar.powf(-2.0 * lam - 1.0 / p) / (lam.abs() * frame.eta);
        pre * (jp.powf(1.0 / p) + frame.p0bar.powf(-(1.0 - 1.0 / p)) * k.abs())
    };
    Ok((finite(lower, "lower bound")?, upper))
}

/// Time series of norms and bounds along an eta mesh.
#[derive(Debug, Clone, Default, Serialize)]
pub struct NormSeries {
    pub p: f64,
    pub eta_values: Vec<f64>,
    pub t_values: Vec<f64>,
    /// the gap 1 - lambda*eta*extremum, NaN when eta* does not exist
    pub one_minus_arg: Vec<f64>,
    pub ux_norm: Vec<f64>,
    pub rho_norm: Vec<f64>,
    pub lower_bound: Vec<f64>,
    pub upper_bound: Vec<f64>,
    /// mass defect plus relative P0bar error, a proxy for the quadrature error
    pub err_est: Vec<f64>,
}

impl NormSeries {
    pub fn len(&self) -> usize {
        self.eta_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_values.is_empty()
    }

    /// Largest violation of lower <= ux_norm <= upper, relative to ux_norm.
    pub fn sandwich_violation(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let u = self.ux_norm[i];
                let lo = (self.lower_bound[i] - u).max(0.0);
                let hi = (u - self.upper_bound[i]).max(0.0);
                lo.max(hi) / u.max(1e-300)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&[
            "eta",
            "t",
            "one_minus_arg",
            "ux_norm",
            "rho_norm",
            "lower",
            "upper",
            "err_est",
        ]);
        for i in 0..self.len() {
            t.push_f64(&[
                self.eta_values[i],
                self.t_values[i],
                self.one_minus_arg[i],
                self.ux_norm[i],
                self.rho_norm[i],
                self.lower_bound[i],
                self.upper_bound[i],
                self.err_est[i],
            ]);
        }
        t.render()
    }
}

/// Geometric gap samples s = 10^{-k/per_decade}, from s = 10^{-first} down to
/// 10^{-last} inclusive.
pub fn gap_mesh(solver: &CharSolver, first: f64, last: f64, per_decade: usize) -> Result<Vec<Stage>> {
    let n = ((last - first) * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| {
            let d = first + k as f64 / per_decade as f64;
            solver.stage_from_gap(10f64.powf(-d))
        })
        .collect()
}

/// Norms at each stage; frames are evaluated in parallel.
pub fn track(solver: &CharSolver, stages: &[Stage]) -> Result<NormSeries> {
    let p = solver.params.p;
    solver.clock()?;
    let rows: Vec<[f64; 8]> = stages
        .par_iter()
        .map(|st| -> Result<[f64; 8]> {
            let f = solver.frame_at_stage(st)?;
            let u = ux_norm(&f, p)?;
            let r = rho_norm(&f, p)?;
            let (lo, hi) = ux_bounds(&f, p)?;
            let err = (f.mass() - 1.0).abs() + f.p0bar_err / f.p0bar;
            Ok([f.eta, f.t, st.gap.unwrap_or(f64::NAN), u, r, lo, hi, err])
        })
        .collect::<Result<_>>()?;
    let mut s = NormSeries {
        p,
        ..NormSeries::default()
    };
    for r in rows {
        s.eta_values.push(r[0]);
        s.t_values.push(r[1]);
        s.one_minus_arg.push(r[2]);
        s.ux_norm.push(r[3]);
        s.rho_norm.push(r[4]);
        s.lower_bound.push(r[5]);
        s.upper_bound.push(r[6]);
        s.err_est.push(r[7]);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "MATCH")]
    Match,
    #[serde(rename = "MISMATCH")]
    Mismatch,
    #[serde(rename = "LOG_CASE")]
    LogCase,
    #[serde(rename = "BOUNDED")]
    Bounded,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Match => "MATCH",
            Verdict::Mismatch => "MISMATCH",
            Verdict::LogCase => "LOG_CASE",
            Verdict::Bounded => "BOUNDED",
        })
    }
}

/// Which column of a [`NormSeries`] a fit reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitTarget {
    /// ||u_x||_p
    Ux,
    /// ||rho||_p^p
    RhoPow,
    /// the Jensen lower bound on ||u_x||_p
    UxLower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub target: FitTarget,
    /// slope against log(gap), or against log|log gap| in the log case
    pub fitted_exponent: f64,
    pub stderr: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub predicted: Option<Exponent>,
    pub predicted_diverges: Option<bool>,
    /// relative growth over the final decade
    pub final_growth: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// the norm grows faster than the lower-bound law (fitted < predicted - tol)
    pub faster_than_predicted: bool,
}

/// Fit with the default tolerance.
pub fn fit_rate(
    series: &NormSeries,
    profile: &CaseProfile,
    params: &ModelParams,
    target: FitTarget,
) -> Result<RateFit> {
    fit_rate_with_tol(series, profile, params, target, EXPONENT_TOL)
}

pub fn fit_rate_with_tol(
    series: &NormSeries,
    profile: &CaseProfile,
    params: &ModelParams,
    target: FitTarget,
    tol: f64,
) -> Result<RateFit> {
    let p = series.p;
    let values: Vec<f64> = match target {
        FitTarget::Ux => series.ux_norm.clone(),
        FitTarget::UxLower => series.lower_bound.clone(),
        FitTarget::RhoPow => series.rho_norm.iter().map(|r| r.powf(p)).collect(),
    };
    let quantity = if target == FitTarget::RhoPow {
        Quantity::Rho
    } else {
        Quantity::Ux
    };
    let fc = predict_norm_exponent(profile, &params.with_p(p)?, quantity);

    let has_gap = series.one_minus_arg.iter().all(|s| s.is_finite());
    // abscissa: the gap when eta* exists, else eta
    let abscissa: Vec<f64> = if has_gap {
        series.one_minus_arg.clone()
    } else {
        series.eta_values.clone()
    };
    let in_window = |lo: f64, hi: f64| -> Vec<usize> {
        (0..series.len())
            .filter(|&i| abscissa[i] >= lo && abscissa[i] <= hi && values[i] > 0.0)
            .collect()
    };
    let (win, decade) = if has_gap {
        let smin = abscissa.iter().copied().fold(f64::INFINITY, f64::min);
        (
            in_window(smin, smin * 10f64.powf(FIT_DECADES)),
            in_window(smin, smin * 10.0),
        )
    } else {
        let emax = abscissa.iter().copied().fold(0.0, f64::max);
        (in_window(0.0, emax), in_window(emax / 10.0, emax))
    };
    if win.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientWindow {
            have: win.len(),
            need: MIN_FIT_SAMPLES,
        });
    }
    let final_growth = {
        // decade start is the largest gap (or smallest eta) inside the decade
        let start = if has_gap {
            *decade.iter().max_by(|&&a, &&b| abscissa[a].total_cmp(&abscissa[b])).unwrap()
        } else {
            *decade.iter().min_by(|&&a, &&b| abscissa[a].total_cmp(&abscissa[b])).unwrap()
        };
        let vmax = decade.iter().map(|&i| values[i]).fold(0.0, f64::max);
        (vmax - values[start]) / values[start]
    };
    let etas: Vec<f64> = win.iter().map(|&i| series.eta_values[i]).collect();
    let window = (
        etas.iter().copied().fold(f64::INFINITY, f64::min),
        etas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let ys: Vec<f64> = win.iter().map(|&i| values[i].ln()).collect();
    let log_case = matches!(fc.exponent, Some(Exponent::Log));
    let xs: Vec<f64> = win
        .iter()
        .map(|&i| {
            let a = abscissa[i];
            if !has_gap {
                a.ln()
            } else if log_case {
                a.ln().abs().ln()
            } else {
                a.ln()
            }
        })
        .collect();
    let fit = ols(&xs, &ys);

    let mut faster = false;
    let verdict = match (fc.diverges, fc.exponent) {
        (Some(false), _) => {
            if final_growth < BOUNDED_GROWTH {
                Verdict::Bounded
            } else {
                Verdict::Mismatch
            }
        }
        (_, Some(Exponent::Log)) => {
            if fit.r2 > LOG_R2 && fit.slope > 0.0 {
                Verdict::LogCase
            } else {
                Verdict::Mismatch
            }
        }
        (_, Some(Exponent::Power(e))) => {
            faster = fit.slope < e - tol;
            if (fit.slope - e).abs() <= tol {
                Verdict::Match
            } else {
                Verdict::Mismatch
            }
        }
        _ => {
            return Err(Error::UnsupportedCase(format!(
                "no exponent prediction for lambda = {}, p = {p}",
                params.lambda
            )))
        }
    };
    Ok(RateFit {
        target,
        fitted_exponent: fit.slope,
        stderr: fit.stderr,
        r2: fit.r2,
        window,
        samples: win.len(),
        predicted: fc.exponent,
        predicted_diverges: fc.diverges,
        final_growth,
        tolerance: tol,
        verdict,
        faster_than_predicted: faster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::{make_benchmark_datum, BenchmarkCase};

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = ols(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-13);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn initial_norms_match_data() {
        let d = make_benchmark_datum(BenchmarkCase::LkNegSingleMax, 1.0).unwrap();
        let params = ModelParams::new(-4.0, 1.0, 2.0).unwrap();
        let s = CharSolver::new(&d, &params).unwrap();
        let f = s.fields_only(&s.stage_from_eta(0.0)).unwrap();
        // u0' = A sin(2 pi x): ||.||_2 = A/sqrt(2)
        assert!((ux_norm(&f, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
        // ||cos^3||_2^2 = 5/16
        assert!((rho_norm_pow(&f, 2.0).unwrap() - 5.0 / 16.0).abs() < 1e-13);
        let (lo, hi) = ux_bounds(&f, 2.0).unwrap();
        assert!(lo <= 0.5f64.sqrt() && hi.is_infinite());
        let (lo1, _) = ux_bounds(&f, 1.0).unwrap();
        assert!(lo1.abs() < 1e-14);
    }
}
