//! Shooting solvers for the standing waves `omega_s`, the critical travelling
//! wave `h_*`, the extinction wave `theta`, and the `a(s) = omega_s'(0)`
//! identities.
//!
//! Standing waves solve `v''/2 + mu v' + beta (v^2 - v) = 0` on the half-line
//! with `v(0) = s` and `v(inf) = 1`. Shots are integrated in the variable
//! `w = 1 - v`, which keeps relative accuracy as `v -> 1`.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{self, OdeOptions, State, Trajectory};
use crate::quad;
use crate::series::{bisect, SeriesTable, WaveConstants, DEFAULT_N_MAX};

/// Asymptotic class of a shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayClass {
    /// `1 - v ~ A e^{-Rx}` (or `A x e^{-mu x}` at criticality).
    SlowA,
    /// `1 - v ~ B e^{-rx}` (or `B e^{-mu x}` at criticality).
    FastB,
    /// Left `[-10, 10]`, or never approached 1.
    Diverged,
    /// Crossed to the other side of 1.
    Crossed,
}

impl std::fmt::Display for DecayClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecayClass::SlowA => "SLOW_A",
            DecayClass::FastB => "FAST_B",
            DecayClass::Diverged => "DIVERGED",
            DecayClass::Crossed => "CROSSED",
        })
    }
}

/// A sampled solution `x -> v(x)` with its derivative.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub params: ModelParams,
    /// Boundary value at 0 (1 for `theta`, `1/2` for `h_*`).
    pub s: f64,
    /// Initial slope `v'(0)`.
    pub slope0: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub decay_class: DecayClass,
    /// Largest `|v''/2 + mu v' + beta (v^2 - v)|` over the grid, with `v''`
    /// taken from the integrated system.
    pub residual_max: f64,
}

impl WaveSolution {
    /// Cubic Hermite interpolation; clamps to the end values outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= *g.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let i = g.partition_point(|&t| t <= x) - 1;
        hermite(
            g[i],
            g[i + 1],
            [self.values[i], self.derivs[i]],
            [self.values[i + 1], self.derivs[i + 1]],
            x,
        )
    }

    pub fn x_end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Logarithmic slope of `|1 - v|` fitted over the last `frac` of the grid.
    pub fn tail_log_slope(&self, frac: f64) -> f64 {
        let dev: Vec<f64> = self.values.iter().map(|v| 1.0 - v).collect();
        log_slope(&self.grid, &dev, frac)
    }
}

fn hermite(x0: f64, x1: f64, y0: State, y1: State, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0[0]
        + (t3 - 2.0 * t2 + t) * h * y0[1]
        + (-2.0 * t3 + 3.0 * t2) * y1[0]
        + (t3 - t2) * h * y1[1]
}

fn hermite_traj(t: &Trajectory, x: f64) -> Option<f64> {
    let (first, last) = (t.x[0], *t.x.last()?);
    if x < first || x > last {
        return None;
    }
    let i = (t.x.partition_point(|&u| u <= x)).clamp(1, t.len() - 1) - 1;
    Some(hermite(t.x[i], t.x[i + 1], t.y[i], t.y[i + 1], x))
}

/// Least-squares slope of `-ln|y|` against `x` over the last `frac` of nodes.
fn log_slope(x: &[f64], y: &[f64], frac: f64) -> f64 {
    let x_end = *x.last().unwrap();
    let x_start = x_end - frac * (x_end - x[0]);
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(&xi, &yi)| xi >= x_start && yi != 0.0)
        .map(|(&xi, &yi)| (xi, -yi.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Integrator settings for shots with decay length `1/rate`.
fn shot_options(rate: f64) -> OdeOptions {
    OdeOptions {
        rtol: 1e-13,
        h_max: 0.25 / rate,
        h_init: 1e-4 / rate,
        ..OdeOptions::default()
    }
}

/// Side of the separatrix a shot lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// Crossed, or headed for a crossing: the initial slope is too steep.
    Over,
    /// Diverged away from 1, or approaching it slowly.
    Under,
}

struct Shot {
    traj: Trajectory,
    crossed: bool,
    diverged: bool,
    side: Side,
}

/// Linear data needed to classify standing-wave shots.
#[derive(Debug, Clone, Copy)]
struct Linear {
    mu: f64,
    beta: f64,
    r: f64,
    r_small: f64,
    critical: bool,
}

impl Linear {
    fn new(params: &ModelParams) -> Result<Self> {
        let c = params.regime_c()?;
        Ok(Self {
            mu: params.mu,
            beta: params.beta,
            r: c.r,
            r_small: c.r_small,
            critical: params.critical,
        })
    }

    fn default_x_max(&self) -> f64 {
        40.0 / self.r
    }
}

/// Shoot in `w = 1 - v` from `(w0, dw0)`.
fn shoot_w(lin: &Linear, w0: f64, dw0: f64, x_max: f64) -> Shot {
    let (mu, beta) = (lin.mu, lin.beta);
    let rhs = move |y: &State| [y[1], -2.0 * mu * y[1] - 2.0 * beta * y[0] + 2.0 * beta * y[0] * y[0]];
    // The starting side of 1; a shot from exactly 1 takes the side of its slope.
    let sigma = if w0 != 0.0 { w0.signum() } else { -dw0.signum() };
    let blow_up = 10.0 * (1.0 + w0.abs());
    let mut crossed = false;
    let mut diverged = false;
    let traj = ode::integrate(rhs, 0.0, [w0, dw0], x_max, &shot_options(lin.r), |_, y| {
        let v = 1.0 - y[0];
        if sigma != 0.0 && sigma * y[0] < -1e-13 {
            crossed = true;
            return ControlFlow::Break(());
        }
        if !v.is_finite() || y[0].abs() > blow_up {
            diverged = true;
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    let (_, y) = traj.last();
    let side = if crossed {
        Side::Over
    } else if diverged || sigma == 0.0 {
        Side::Under
    } else if sigma * (y[1] + lin.r * y[0]) < 0.0 {
        // The slow-mode coefficient has the sign that leads to a crossing.
        Side::Over
    } else {
        Side::Under
    };
    Shot {
        traj,
        crossed,
        diverged,
        side,
    }
}

fn classify_tail(lin: &Linear, traj: &Trajectory) -> DecayClass {
    let w: Vec<f64> = traj.y.iter().map(|y| y[0]).collect();
    if w.iter().all(|&v| v == 0.0) {
        return DecayClass::FastB;
    }
    let w_end = *w.last().unwrap();
    if w_end.abs() > 0.5 || traj.len() < 8 {
        return DecayClass::Diverged;
    }
    if lin.critical {
        // Compare how well |w| e^{mu x} / x (slow) and |w| e^{mu x} (fast) settle.
        let n = traj.len();
        let i0 = traj.x.partition_point(|&x| x < 0.9 * traj.x[n - 1]).min(n - 2);
        let ratio = |i: usize, power: i32| {
            w[i].abs() * (lin.mu * traj.x[i]).exp() / traj.x[i].max(1e-300).powi(power)
        };
        let drift = |power: i32| (ratio(n - 1, power) / ratio(i0, power) - 1.0).abs();
        if drift(0) <= drift(1) {
            DecayClass::FastB
        } else {
            DecayClass::SlowA
        }
    } else {
        let slope = log_slope(&traj.x, &w, 0.1);
        if slope > 0.5 * (lin.r + lin.r_small) {
            DecayClass::FastB
        } else {
            DecayClass::SlowA
        }
    }
}

fn into_solution(params: &ModelParams, s: f64, traj: &Trajectory, class: DecayClass) -> WaveSolution {
    let (mu, beta) = (params.mu, params.beta);
    let mut residual_max: f64 = 0.0;
    let mut values = Vec::with_capacity(traj.len());
    let mut derivs = Vec::with_capacity(traj.len());
    for y in &traj.y {
        let w = y[0];
        let dw = y[1];
        let v = 1.0 - w;
        let dv = -dw;
        let d2v = -(-2.0 * mu * dw - 2.0 * beta * w + 2.0 * beta * w * w);
        let res = 0.5 * d2v + mu * dv + beta * (v * v - v);
        residual_max = residual_max.max(res.abs());
        values.push(v);
        derivs.push(dv);
    }
    WaveSolution {
        params: *params,
        s,
        slope0: derivs[0],
        grid: traj.x.clone(),
        values,
        derivs,
        decay_class: class,
        residual_max,
    }
}

/// Integrate from `(v, v')(0) = (s, c)` and classify the outcome.
pub fn shoot_standing_wave(params: &ModelParams, s: f64, c: f64, x_max: f64) -> Result<WaveSolution> {
    let lin = Linear::new(params)?;
    if !(s.is_finite() && c.is_finite() && x_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "shot needs finite s, c and x_max > 0 (s = {s}, c = {c}, x_max = {x_max})"
        )));
    }
    let shot = shoot_w(&lin, 1.0 - s, -c, x_max);
    let class = if shot.crossed {
        DecayClass::Crossed
    } else if shot.diverged {
        DecayClass::Diverged
    } else {
        classify_tail(&lin, &shot.traj)
    };
    Ok(into_solution(params, s, &shot.traj, class))
}

/// Cut `under` where it separates from `over` by a relative `1e-3`.
fn trust_horizon(under: &Trajectory, over: &Trajectory) -> Trajectory {
    let mut keep = under.len();
    for i in 1..under.len() {
        let x = under.x[i];
        let u = under.y[i][0];
        let sep = match hermite_traj(over, x) {
            Some(o) => (o - u).abs() > 1e-3 * u.abs(),
            None => true,
        };
        if sep || u.abs() < 1e-280 {
            keep = i;
            break;
        }
    }
    Trajectory {
        x: under.x[..keep].to_vec(),
        y: under.y[..keep].to_vec(),
    }
}

/// Bisection on `c` with `over(c)` false at `lo` and true at `hi` (or the
/// reverse when `increasing` is false). Returns the final bracket.
fn bisect_bracket(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
    side_at: impl Fn(f64) -> Side,
) -> Result<(f64, f64)> {
    // `lo` is Under, `hi` is Over; they need not be ordered.
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || (hi - lo).abs() <= tol * mid.abs().max(1.0) {
            return Ok((lo, hi));
        }
        match side_at(mid) {
            Side::Over => hi = mid,
            Side::Under => lo = mid,
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        detail: format!("slope bracket [{lo:.15e}, {hi:.15e}] still open"),
    })
}

const MAX_BISECTION: usize = 200;
const MAX_EXPANSION: usize = 60;
/// Largest slow-mode share of the tail accepted for the tangent shot at `s0`.
const TANGENT_SLOW_SHARE: f64 = 1e-2;

/// The standing wave `omega_s` by shooting on the initial slope.
///
/// For `s < 1` the slope is positive and too steep a shot crosses above 1;
/// for `s > 1` it is non-positive and too shallow a shot dips below 1.
pub fn solve_omega(params: &ModelParams, s: f64, tol: f64) -> Result<WaveSolution> {
    let lin = Linear::new(params)?;
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("s must be finite and non-negative (got {s})")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive (got {tol})")));
    }
    let x_max = lin.default_x_max();
    if s == 1.0 {
        let traj = Trajectory {
            x: vec![0.0, x_max],
            y: vec![[0.0, 0.0], [0.0, 0.0]],
        };
        return Ok(into_solution(params, s, &traj, DecayClass::FastB));
    }
    let w0 = 1.0 - s;
    let side_at = |c: f64| shoot_w(&lin, w0, -c, x_max).side;
    let scale = lin.r * w0.abs().max(1e-3);

    let (under, over) = if s < 1.0 {
        if side_at(0.0) != Side::Under {
            return Err(Error::BracketFailure(format!(
                "zero slope already crosses 1 at s = {s}"
            )));
        }
        let mut hi = scale;
        let mut k = 0;
        while side_at(hi) != Side::Over {
            hi *= 2.0;
            k += 1;
            if k > MAX_EXPANSION {
                return Err(Error::BracketFailure(format!(
                    "no crossing slope found up to c = {hi:e} at s = {s}"
                )));
            }
        }
        bisect_bracket(0.0, hi, tol, MAX_BISECTION, side_at)?
    } else {
        // Just below s0 the slow-shot window of slopes is [-C sqrt(s0 - s),
        // C sqrt(s0 - s)]; admit a small positive slack for rounding.
        let mut under = 0.0;
        let mut slack = 1e-9 * scale;
        while side_at(under) != Side::Under {
            under = slack;
            slack *= 10.0;
            if under > 1e-4 * scale {
                // The window has closed: only the tangent zero-slope shot is left.
                return tangent_solution(params, &lin, s, scale, x_max);
            }
        }
        let mut lo = -scale;
        let mut k = 0;
        while side_at(lo) != Side::Over {
            lo *= 2.0;
            k += 1;
            if k > MAX_EXPANSION {
                return Err(Error::BracketFailure(format!(
                    "no dipping slope found down to c = {lo:e} at s = {s}"
                )));
            }
        }
        bisect_bracket(under, lo, tol, MAX_BISECTION, side_at)?
    };

    let shot_under = shoot_w(&lin, w0, -under, x_max);
    let shot_over = shoot_w(&lin, w0, -over, x_max);
    let traj = trust_horizon(&shot_under.traj, &shot_over.traj);
    if traj.len() < 8 {
        return Err(Error::NoConvergence {
            iterations: MAX_BISECTION,
            detail: format!("bracket [{under:e}, {over:e}] separates immediately"),
        });
    }
    let class = classify_tail(&lin, &traj);
    if class != DecayClass::FastB {
        return Err(Error::NoConvergence {
            iterations: MAX_BISECTION,
            detail: format!(
                "limit shot classified {class} on [0, {:.3}] (bracket [{under:e}, {over:e}])",
                traj.last().0
            ),
        });
    }
    let mut sol = into_solution(params, s, &traj, class);
    sol.slope0 = 0.5 * (under + over);
    Ok(sol)
}

/// The wave at `s = s0`, where the two fast-decaying branches merge into the
/// zero-slope shot and every other slope crosses 1.
fn tangent_solution(
    params: &ModelParams,
    lin: &Linear,
    s: f64,
    scale: f64,
    x_max: f64,
) -> Result<WaveSolution> {
    let w0 = 1.0 - s;
    let delta = 1e-12 * scale;
    let centre = shoot_w(lin, w0, 0.0, x_max);
    let refuse = || Error::NoFiniteMoment { s, s0: f64::NAN };
    if centre.crossed && centre.traj.last().0 < 0.5 * x_max {
        return Err(refuse());
    }
    let lo = shoot_w(lin, w0, -delta, x_max);
    let hi = shoot_w(lin, w0, delta, x_max);
    let a = trust_horizon(&centre.traj, &lo.traj);
    let b = trust_horizon(&centre.traj, &hi.traj);
    let traj = if a.len() <= b.len() { a } else { b };
    if traj.len() < 8 || classify_tail(lin, &traj) != DecayClass::FastB {
        return Err(refuse());
    }
    // Past s0 the zero-slope shot carries a slow-mode component that crosses
    // only far out; measure its share of w at the end of the trusted range.
    let (x, y) = traj.last();
    let slow = if lin.critical {
        (y[1] + lin.r * y[0]) * x
    } else {
        (y[1] + lin.r * y[0]) / (lin.r - lin.r_small)
    };
    if !(slow.abs() <= TANGENT_SLOW_SHARE * y[0].abs()) {
        return Err(refuse());
    }
    Ok(into_solution(params, s, &traj, DecayClass::FastB))
}

/// `s0` as the largest `s` for which a zero-slope shot stays above 1.
///
/// A shot from `(s, 0)` with `s` too large dips below 1; with `s` too small it
/// decays slowly towards 1 from above.
pub fn find_s0_by_shooting(params: &ModelParams, tol: f64) -> Result<f64> {
    let lin = Linear::new(params)?;
    let x_max = lin.default_x_max();
    let over = |s: f64| shoot_w(&lin, 1.0 - s, 0.0, x_max).side == Side::Over;
    let lo = 1.0 + 1e-6;
    if over(lo) {
        return Err(Error::BracketFailure(format!(
            "zero-slope shot from s = {lo} already dips below 1"
        )));
    }
    let mut hi = 2.0;
    let mut k = 0;
    while !over(hi) {
        hi = 1.0 + 2.0 * (hi - 1.0);
        k += 1;
        if k > MAX_EXPANSION {
            return Err(Error::BracketFailure(format!(
                "zero-slope shots stay above 1 up to s = {hi:e}"
            )));
        }
    }
    Ok(bisect(lo, hi, tol, over))
}

/// The critical travelling wave: `h''/2 + sqrt(2 beta) h' + beta (h^2 - h) = 0`
/// on the line, increasing from 0 to 1, normalised by `h(0) = 1/2`.
pub fn solve_hstar(beta: f64, tol: f64) -> Result<WaveSolution> {
    let params = ModelParams::classify((2.0 * beta).sqrt(), beta)?;
    let c = params.mu;
    let lambda = beta.sqrt() * (2.0 - 2f64.sqrt());
    let x_left = -20.0 / beta.sqrt();
    let x_right = x_left + 80.0 / beta.sqrt();
    let eps = 1e-8;
    let opts = OdeOptions {
        rtol: tol.clamp(1e-13, 1e-6),
        h_max: 0.02 / beta.sqrt(),
        ..OdeOptions::default()
    };

    // Phase 1 in h until h reaches 1/2.
    let rhs_h = move |y: &State| [y[1], -2.0 * c * y[1] - 2.0 * beta * (y[0] * y[0] - y[0])];
    let mut bad = false;
    let left = ode::integrate(rhs_h, x_left, [eps, lambda * eps], x_right, &opts, |_, y| {
        if y[1] <= 0.0 {
            bad = true;
            return ControlFlow::Break(());
        }
        if y[0] >= 0.5 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    let (xm, ym) = left.last();
    if bad || ym[0] < 0.5 {
        return Err(Error::SolverFailure(format!(
            "critical wave does not rise monotonically to 1/2 (stopped at x = {xm:.3})"
        )));
    }
    // Phase 2 in w = 1 - h for precision near 1.
    let rhs_w = move |y: &State| [y[1], -2.0 * c * y[1] - 2.0 * beta * y[0] + 2.0 * beta * y[0] * y[0]];
    let right = ode::integrate(rhs_w, xm, [1.0 - ym[0], -ym[1]], x_right, &opts, |_, y| {
        if y[0] <= 0.0 || y[1] >= 0.0 {
            bad = true;
            return ControlFlow::Break(());
        }
        if y[0] < 1e-250 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    if bad {
        return Err(Error::SolverFailure(
            "critical wave overshoots 1 or stops increasing".into(),
        ));
    }

    // Crossing of 1/2 between the last two phase-1 nodes, by Hermite bisection.
    let n = left.len();
    let (xa, xb) = (left.x[n - 2], left.x[n - 1]);
    let (ya, yb) = (left.y[n - 2], left.y[n - 1]);
    let x_half = bisect(xa, xb, 1e-15 * (xb - xa).abs().max(1e-300), |x| {
        hermite(xa, xb, ya, yb, x) >= 0.5
    });

    let mut grid = Vec::with_capacity(n + right.len());
    let mut values = Vec::with_capacity(grid.capacity());
    let mut derivs = Vec::with_capacity(grid.capacity());
    for (x, y) in left.x.iter().zip(&left.y).take(n - 1) {
        grid.push(x - x_half);
        values.push(y[0]);
        derivs.push(y[1]);
    }
    for (x, y) in right.x.iter().zip(&right.y) {
        grid.push(x - x_half);
        values.push(1.0 - y[0]);
        derivs.push(-y[1]);
    }
    let mut residual_max: f64 = 0.0;
    for (&v, &dv) in values.iter().zip(&derivs) {
        let d2v = -2.0 * c * dv - 2.0 * beta * (v * v - v);
        residual_max = residual_max.max((0.5 * d2v + c * dv + beta * (v * v - v)).abs());
    }
    let lin = Linear::new(&params)?;
    let class = classify_tail(&lin, &right);
    Ok(WaveSolution {
        params,
        s: 0.5,
        slope0: hermite_slope(xa, xb, ya, yb, x_half),
        grid,
        values,
        derivs,
        decay_class: class,
        residual_max,
    })
}

fn hermite_slope(x0: f64, x1: f64, y0: State, y1: State, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0[0]) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * y0[1]
        + ((-6.0 * t2 + 6.0 * t) * y1[0]) / h
        + (3.0 * t2 - 2.0 * t) * y1[1]
}

/// Decay rate `mu + sqrt(mu^2 + 2 beta)` of the extinction wave.
pub fn extinction_rate(params: &ModelParams) -> f64 {
    params.mu + (params.mu * params.mu + 2.0 * params.beta).sqrt()
}

/// The extinction wave `theta`: `theta(0) = 1`, `theta(inf) = 0`.
pub fn solve_extinction(params: &ModelParams, tol: f64) -> Result<WaveSolution> {
    if params.mu <= -params.critical_drift() {
        return Err(Error::UnsupportedRegime {
            required: "B or C",
            actual: params.regime.to_string(),
        });
    }
    let (mu, beta) = (params.mu, params.beta);
    let lambda = extinction_rate(params);
    let x_max = 40.0 / lambda;
    let opts = shot_options(lambda);
    let rhs = move |y: &State| [y[1], -2.0 * mu * y[1] - 2.0 * beta * (y[0] * y[0] - y[0])];
    let shoot = |c: f64| {
        let mut side = None;
        let traj = ode::integrate(rhs, 0.0, [1.0, -c], x_max, &opts, |x, y| {
            if y[0] < 0.0 {
                side = Some(Side::Over);
                ControlFlow::Break(())
            } else if x > 0.0 && y[1] >= 0.0 {
                side = Some(Side::Under);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        let side = side.unwrap_or_else(|| {
            // Still decaying at x_max: decide by the sign of the growing mode.
            let (_, y) = traj.last();
            let slow = mu - (mu * mu + 2.0 * beta).sqrt();
            if y[1] + lambda * y[0] < 0.0 && slow < 0.0 {
                Side::Over
            } else {
                Side::Under
            }
        });
        (traj, side)
    };

    let mut hi = lambda;
    let mut k = 0;
    while shoot(hi).1 != Side::Over {
        hi *= 2.0;
        k += 1;
        if k > MAX_EXPANSION {
            return Err(Error::BracketFailure(format!(
                "no overshooting slope up to {hi:e}"
            )));
        }
    }
    let (under, over) = bisect_bracket(0.0, hi, tol, MAX_BISECTION, |c| shoot(c).1)?;
    let (tu, _) = shoot(under);
    let (to, _) = shoot(over);
    let traj = trust_horizon(&tu, &to);
    if traj.len() < 8 {
        return Err(Error::NoConvergence {
            iterations: MAX_BISECTION,
            detail: format!("extinction bracket [{under:e}, {over:e}] separates immediately"),
        });
    }
    let mut residual_max: f64 = 0.0;
    for y in &traj.y {
        let d2 = rhs(y)[1];
        residual_max =
            residual_max.max((0.5 * d2 + mu * y[1] + beta * (y[0] * y[0] - y[0])).abs());
    }
    let values: Vec<f64> = traj.y.iter().map(|y| y[0]).collect();
    let slope = log_slope(&traj.x, &values, 0.3);
    let class = if (slope / lambda - 1.0).abs() < 0.02 {
        DecayClass::FastB
    } else {
        DecayClass::SlowA
    };
    Ok(WaveSolution {
        params: *params,
        s: 1.0,
        slope0: -0.5 * (under + over),
        grid: traj.x.clone(),
        derivs: traj.y.iter().map(|y| y[1]).collect(),
        values,
        decay_class: class,
        residual_max,
    })
}

/// One row of the `a(s)` consistency report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ARow {
    pub s: f64,
    /// `omega_s'(0)` from shooting.
    pub a_ode: f64,
    /// `omega_s'(0) = r B_s Phi'(B_s)` from the series.
    pub a_series: f64,
    /// `-(mu + sqrt(mu^2 + 2 beta)) s + 2 beta int omega_s^2 e^{(mu - sqrt(mu^2+2beta)) x} dx`.
    pub a_integral: f64,
    /// `d(a^2)/ds / 4 + mu a + beta (s^2 - s)` with a centred difference.
    pub identity_residual: f64,
}

impl ARow {
    /// Largest pairwise gap between the three values of `a(s)`.
    pub fn max_gap(&self) -> f64 {
        let v = [self.a_ode, self.a_series, self.a_integral];
        let mut g: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                g = g.max((v[i] - v[j]).abs());
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct AReport {
    pub params: ModelParams,
    pub s0: f64,
    pub rows: Vec<ARow>,
}

/// Compare three routes to `a(s) = omega_s'(0)` on `s_grid`.
pub fn a_of_s_checks(params: &ModelParams, s_grid: &[f64]) -> Result<AReport> {
    let table = SeriesTable::build(params, DEFAULT_N_MAX)?;
    let consts = table.find_wave_constants()?;
    let rows = s_grid
        .iter()
        .map(|&s| a_row(params, &table, &consts, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AReport {
        params: *params,
        s0: consts.s0,
        rows,
    })
}

/// `a(s)` from the series.
pub fn a_series(table: &SeriesTable, consts: &WaveConstants, s: f64) -> Result<f64> {
    Ok(table.wave(consts, s)?.deriv(0.0))
}

/// `a(s)` from the integral representation.
pub fn a_integral(table: &SeriesTable, consts: &WaveConstants, s: f64) -> Result<f64> {
    let params = consts.params;
    let (mu, beta) = (params.mu, params.beta);
    let k = mu - (mu * mu + 2.0 * beta).sqrt();
    let wave = table.wave(consts, s)?;
    // Split off the limit 1 so only (omega^2 - 1) e^{kx} needs truncating.
    let integrand = |x: f64| {
        let w = wave.one_minus(x);
        (w * w - 2.0 * w) * (k * x).exp()
    };
    let r = params.r.unwrap();
    let mut x_cut = 1.0 / r;
    while integrand(x_cut).abs() >= 1e-14 {
        x_cut *= 1.5;
        if x_cut > 1e4 {
            return Err(Error::Quadrature("integrand does not decay".into()));
        }
    }
    let mut total = 0.0;
    let mut a = 0.0;
    // Panels of a few decay lengths keep the Kronrod estimate honest.
    let panel = 2.0 / r;
    while a < x_cut {
        let b = (a + panel).min(x_cut);
        total += quad::integrate(integrand, a, b, 1e-15)?;
        a = b;
    }
    // Integrating the wave equation against e^{kx} by parts leaves the
    // coefficient -(mu + sqrt(mu^2 + 2 beta)) = k - 2 mu in front of s.
    Ok((k - 2.0 * mu) * s + 2.0 * beta * (total - 1.0 / k))
}

fn a_row(params: &ModelParams, table: &SeriesTable, consts: &WaveConstants, s: f64) -> Result<ARow> {
    if !(0.0..=consts.s0).contains(&s) {
        return Err(Error::NoFiniteMoment { s, s0: consts.s0 });
    }
    let a_ode = solve_omega(params, s, 1e-13)?.slope0;
    let a_ser = a_series(table, consts, s)?;
    let a_int = a_integral(table, consts, s)?;
    let h = 1e-4 * consts.s0;
    let sq = |t: f64| a_series(table, consts, t.clamp(0.0, consts.s0)).map(|a| a * a);
    let d_a2 = if s - h < 0.0 {
        (-3.0 * sq(s)? + 4.0 * sq(s + h)? - sq(s + 2.0 * h)?) / (2.0 * h)
    } else if s + h > consts.s0 {
        (3.0 * sq(s)? - 4.0 * sq(s - h)? + sq(s - 2.0 * h)?) / (2.0 * h)
    } else {
        (sq(s + h)? - sq(s - h)?) / (2.0 * h)
    };
    let residual = 0.25 * d_a2 + params.mu * a_ser + params.beta * (s * s - s);
    Ok(ARow {
        s,
        a_ode,
        a_series: a_ser,
        a_integral: a_int,
        identity_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crit() -> ModelParams {
        ModelParams::classify(2f64.sqrt(), 1.0).unwrap()
    }

    #[test]
    fn trivial_shots() {
        let p = crit();
        let one = shoot_standing_wave(&p, 1.0, 0.0, 20.0).unwrap();
        assert!(one.values.iter().all(|&v| v == 1.0));
        assert_eq!(one.residual_max, 0.0);
        let zero = shoot_standing_wave(&p, 0.0, 0.0, 20.0).unwrap();
        assert_eq!(zero.decay_class, DecayClass::Diverged);
    }

    #[test]
    fn sweep_has_one_transition() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let c_star = solve_omega(&p, 0.0, 1e-13).unwrap().slope0;
        let classes: Vec<DecayClass> = (1..40)
            .map(|i| {
                let c = c_star * i as f64 / 20.0;
                shoot_standing_wave(&p, 0.0, c, 40.0 / p.r.unwrap()).unwrap().decay_class
            })
            .collect();
        let flips = classes
            .windows(2)
            .filter(|w| (w[0] == DecayClass::Crossed) != (w[1] == DecayClass::Crossed))
            .count();
        assert_eq!(flips, 1, "{classes:?}");
        assert_eq!(classes[0], DecayClass::SlowA);
        assert_eq!(*classes.last().unwrap(), DecayClass::Crossed);
    }

    #[test]
    fn omega_matches_series_critical() {
        let p = crit();
        let table = SeriesTable::build(&p, DEFAULT_N_MAX).unwrap();
        let consts = table.find_wave_constants().unwrap();
        let wave = table.wave(&consts, 0.0).unwrap();
        let sol = solve_omega(&p, 0.0, 1e-13).unwrap();
        let err = sol
            .grid
            .iter()
            .zip(&sol.values)
            .map(|(&x, &v)| (wave.value(x) - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "sup error {err}");
        assert!(sol.residual_max < 1e-12);
        assert!((sol.slope0 - wave.deriv(0.0)).abs() < 1e-6);
    }

    #[test]
    fn omega_above_one_is_decreasing() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let sol = solve_omega(&p, 3.0, 1e-13).unwrap();
        assert_eq!(sol.decay_class, DecayClass::FastB);
        assert!(sol.values.windows(2).all(|w| w[1] < w[0]));
        assert!(sol.values.iter().all(|&v| v > 1.0));
    }

    #[test]
    fn s0_shooting_critical() {
        let s0 = find_s0_by_shooting(&crit(), 1e-9).unwrap();
        assert!((s0 - 1.3486).abs() < 1e-3, "{s0}");
    }

    #[test]
    fn slope_vanishes_at_s0() {
        let p = crit();
        let table = SeriesTable::build(&p, DEFAULT_N_MAX).unwrap();
        let consts = table.find_wave_constants().unwrap();
        let sol = solve_omega(&p, consts.s0, 1e-13).unwrap();
        assert!(sol.slope0.abs() < 1e-6, "{}", sol.slope0);
    }

    #[test]
    fn hstar_normalisation_and_tails() {
        let beta = 1.0;
        let h = solve_hstar(beta, 1e-10).unwrap();
        assert!((h.interpolate(0.0) - 0.5).abs() < 1e-9);
        assert!(h.values.windows(2).all(|w| w[1] >= w[0]));
        let lam = beta.sqrt() * (2.0 - 2f64.sqrt());
        let left = (h.values[5].ln() - h.values[0].ln()) / (h.grid[5] - h.grid[0]);
        assert!((left / lam - 1.0).abs() < 0.01, "{left} vs {lam}");
        assert_eq!(h.decay_class, DecayClass::SlowA);
    }

    #[test]
    fn extinction_rate_regime_b() {
        let p = ModelParams::classify(0.0, 1.0).unwrap();
        let th = solve_extinction(&p, 1e-13).unwrap();
        assert_eq!(th.values[0], 1.0);
        assert!(th.values.windows(2).all(|w| w[1] < w[0]));
        let slope = log_slope(&th.grid, &th.values, 0.3);
        assert!((slope / 2f64.sqrt() - 1.0).abs() < 0.02, "{slope}");
    }

    #[test]
    fn a_identities_critical() {
        let p = crit();
        let rep = a_of_s_checks(&p, &[0.0, 0.5, 1.0]).unwrap();
        for row in &rep.rows {
            assert!(row.max_gap() < 1e-4, "{row:?}");
            assert!(row.identity_residual.abs() < 1e-4, "{row:?}");
        }
        assert_eq!(rep.rows[2].a_series, 0.0);
    }
}
