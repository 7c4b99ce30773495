//! Half-line KPP solver for `u_t = u_xx/2 + mu u_x + beta (u^2 - u)`,
//! `u(t, 0) = s`, `u(0, x) = 1`.
//!
//! The state is stored as `w = 1 - u`. Ahead of a front `u` is 1 up to
//! rounding, and the reaction amplifies rounding noise in `1 - u` at rate
//! `beta`; in `w` the far field is exactly zero and stays so.
//!
//! Strang splitting: an exact half step of the logistic reaction, a
//! Crank–Nicolson step of the linear transport (central drift, upwind when the
//! cell Péclet number exceeds 1), and another half reaction step. The first
//! transport steps use backward Euler to damp the corner discontinuity.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::waves::WaveSolution;

/// Number of initial backward-Euler transport steps.
const STARTUP_STEPS: usize = 4;
/// Tolerance of the discrete extremum check.
const EXTREMUM_SLACK: f64 = 1e-9;
/// Minimum space kept ahead of the front in regimes A and B.
const LEAD: f64 = 30.0;
/// The domain is also extended while `1 - u` near the right wall exceeds this
/// level: a pulled front slows down by about `pi^2 / (2 L^2)` when its leading
/// edge is cut at distance `L`.
const LEADING_EDGE_FLOOR: f64 = 1e-100;
/// Largest grid the moving domain may grow to.
const MAX_CELLS: usize = 20_000_000;

/// Grid snapshot of `u(t, .)`.
#[derive(Debug, Clone)]
pub struct PdeState {
    pub params: ModelParams,
    pub s: f64,
    pub dx: f64,
    pub dt: f64,
    pub x_max: f64,
    pub t: f64,
    /// `w[i] = 1 - u(t, i dx)`; `w[0] = 1 - s` and `w[last] = 0`.
    pub w: Vec<f64>,
    steps: usize,
    startup_steps: usize,
    factors: Option<Factors>,
}

/// Forward-eliminated tridiagonal system `(I - theta dt L)`.
#[derive(Debug, Clone)]
struct Factors {
    theta: f64,
    n: usize,
    lower: f64,
    upper: f64,
    /// Modified diagonal after elimination.
    diag: Vec<f64>,
}

impl PdeState {
    /// Initial state `u(0, x) = 1` for `x > 0` and `u(0, 0) = s`.
    pub fn new(params: &ModelParams, s: f64, dx: f64, dt: f64, x_max: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0 && x_max > 2.0 * dx) || !dx.is_finite() || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need dx > 0, dt > 0 and x_max > 2 dx (dx = {dx}, dt = {dt}, x_max = {x_max})"
            )));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("boundary value must be >= 0 (got {s})")));
        }
        if s > 1.0 {
            // The logistic flow blows up from s at time ln(s/(s-1))/beta; one
            // half step must stay well inside it.
            let blowup = (s / (s - 1.0)).ln() / params.beta;
            if dt >= blowup {
                return Err(Error::InvalidParameter(format!(
                    "dt = {dt} exceeds the reaction blow-up time {blowup:.3e} for s = {s}"
                )));
            }
        }
        let n = (x_max / dx).round() as usize;
        let mut w = vec![0.0; n + 1];
        w[0] = 1.0 - s;
        Ok(Self {
            params: *params,
            s,
            dx,
            dt,
            x_max: n as f64 * dx,
            t: 0.0,
            w,
            steps: 0,
            startup_steps: STARTUP_STEPS,
            factors: None,
        })
    }

    /// Grid abscissa of node `i`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.w.len()).map(|i| self.x(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `u(t, i dx)`.
    pub fn u_at(&self, i: usize) -> f64 {
        1.0 - self.w[i]
    }

    /// The profile `u(t, .)` on the grid.
    pub fn u(&self) -> Vec<f64> {
        self.w.iter().map(|w| 1.0 - w).collect()
    }

    /// Coefficients `(a, b, c)` of `L u_i = a u_{i-1} + b u_i + c u_{i+1}`.
    fn stencil(&self) -> (f64, f64, f64) {
        let dx = self.dx;
        let mu = self.params.mu;
        let d = 0.5 / (dx * dx);
        if mu.abs() * dx <= 1.0 {
            (d - 0.5 * mu / dx, -2.0 * d, d + 0.5 * mu / dx)
        } else if mu > 0.0 {
            (d, -2.0 * d - mu / dx, d + mu / dx)
        } else {
            (d - mu / dx, -2.0 * d + mu / dx, d)
        }
    }

    fn factors(&mut self, theta: f64) -> &Factors {
        let n = self.w.len() - 2;
        let stale = match &self.factors {
            Some(f) => f.theta != theta || f.n != n,
            None => true,
        };
        if stale {
            let (a, b, c) = self.stencil();
            let k = theta * self.dt;
            let lower = -k * a;
            let upper = -k * c;
            let d0 = 1.0 - k * b;
            let mut diag = vec![d0; n];
            for i in 1..n {
                diag[i] = d0 - lower * upper / diag[i - 1];
            }
            self.factors = Some(Factors {
                theta,
                n,
                lower,
                upper,
                diag,
            });
        }
        self.factors.as_ref().unwrap()
    }

    fn transport(&mut self, theta: f64) {
        let (a, b, c) = self.stencil();
        let k_exp = (1.0 - theta) * self.dt;
        let n = self.w.len() - 2;
        let left = self.w[0];
        let right = self.w[n + 1];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let (um, u0, up) = (self.w[i], self.w[i + 1], self.w[i + 2]);
            rhs[i] = u0 + k_exp * (a * um + b * u0 + c * up);
        }
        let k_imp = theta * self.dt;
        rhs[0] += k_imp * a * left;
        rhs[n - 1] += k_imp * c * right;
        let f = self.factors(theta).clone();
        for i in 1..n {
            rhs[i] -= f.lower / f.diag[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= f.diag[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - f.upper * rhs[i + 1]) / f.diag[i];
        }
        self.w[1..=n].copy_from_slice(&rhs);
    }

    /// Exact flow of `w' = beta w (1 - w)`.
    fn react(&mut self, tau: f64) {
        let g = (self.params.beta * tau).exp_m1();
        let last = self.w.len() - 1;
        for v in &mut self.w[1..last] {
            let w0 = *v;
            *v = w0 * (1.0 + g) / (1.0 + w0 * g);
        }
    }

    fn extremes(&self) -> (f64, f64) {
        self.w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Advance one time step.
    pub fn step(&mut self) -> Result<()> {
        let (lo, hi) = self.extremes();
        let theta = if self.steps < self.startup_steps { 1.0 } else { 0.5 };
        self.react(0.5 * self.dt);
        self.transport(theta);
        self.react(0.5 * self.dt);
        self.steps += 1;
        self.t += self.dt;
        let (new_lo, new_hi) = self.extremes();
        if !(new_lo >= lo - EXTREMUM_SLACK && new_hi <= hi + EXTREMUM_SLACK) {
            return Err(Error::StabilityViolation {
                t: self.t,
                detail: format!(
                    "range of 1 - u [{lo:.3e}, {hi:.3e}] became [{new_lo:.3e}, {new_hi:.3e}] (dx = {}, dt = {})",
                    self.dx, self.dt
                ),
            });
        }
        Ok(())
    }

    /// Step until `t >= t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end - 0.5 * self.dt {
            self.step()?;
        }
        Ok(())
    }

    /// Append cells with `u = 1` so the domain reaches `x_max`.
    pub fn extend_to(&mut self, x_max: f64) -> Result<()> {
        let n = (x_max / self.dx).ceil() as usize;
        if n + 1 > MAX_CELLS {
            return Err(Error::FrontEscaped(format!(
                "domain would exceed {MAX_CELLS} cells (x_max = {x_max:.1})"
            )));
        }
        if n + 1 > self.w.len() {
            self.w.resize(n + 1, 0.0);
            self.x_max = n as f64 * self.dx;
        }
        Ok(())
    }

    /// Position where `u` crosses `1/2`, by linear interpolation; `None` if
    /// `1/2` is not attained strictly inside the grid.
    pub fn half_position(&self) -> Option<f64> {
        let last = self.w.len() - 1;
        // 1 - u is non-increasing in x for s < 1.
        let j = self.w.partition_point(|&v| v > 0.5);
        if j == 0 || j > last - 1 {
            return None;
        }
        let (w0, w1) = (self.w[j - 1], self.w[j]);
        Some(self.x(j - 1) + self.dx * (w0 - 0.5) / (w0 - w1))
    }

    /// Linear interpolation of `u` at `x`, clamped to the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let last = self.w.len() - 1;
        let pos = (x / self.dx).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        let f = pos - i as f64;
        1.0 - (self.w[i] * (1.0 - f) + self.w[i + 1] * f)
    }
}

/// Relaxation history towards a regime-C standing wave.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: PdeState,
    /// `(t, sup_x |u(t, x) - target(x)|)` at each checkpoint.
    pub distances: Vec<(f64, f64)>,
}

impl Relaxation {
    pub fn final_distance(&self) -> f64 {
        self.distances.last().map_or(f64::NAN, |d| d.1)
    }
}

/// Run `u_s` from `u(0, .) = 1` to `horizon`, recording the sup distance to
/// `target` every `every` time units.
pub fn relax(
    params: &ModelParams,
    s: f64,
    dx: f64,
    dt: f64,
    x_max: f64,
    horizon: f64,
    every: f64,
    target: impl Fn(f64) -> f64,
) -> Result<Relaxation> {
    if !params.regime.is_c() {
        return Err(Error::UnsupportedRegime {
            required: "C",
            actual: params.regime.to_string(),
        });
    }
    let mut state = PdeState::new(params, s, dx, dt, x_max)?;
    let distance = |st: &PdeState| {
        st.w
            .iter()
            .enumerate()
            .map(|(i, &w)| (1.0 - w - target(st.x(i))).abs())
            .fold(0.0, f64::max)
    };
    let mut distances = Vec::new();
    let mut next = every;
    while state.t < horizon - 0.5 * dt {
        state.step()?;
        if state.t >= next - 0.5 * dt {
            distances.push((state.t, distance(&state)));
            next += every;
        }
    }
    if distances.last().is_none_or(|d| d.0 < state.t) {
        distances.push((state.t, distance(&state)));
    }
    Ok(Relaxation { state, distances })
}

/// Front trajectory in regimes A and B.
#[derive(Debug, Clone)]
pub struct FrontTrace {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub half_positions: Vec<f64>,
    pub fitted_speed: f64,
    pub fitted_log_coeff: f64,
    pub fitted_const: f64,
    /// `sup_y |u(T, m_half(T) + y) - h_*(y)|` at the final time.
    pub shape_distance: f64,
    pub final_state: PdeState,
}

/// Least-squares fit of `m = v t + k ln t + C`, returning `(v, k, C)`.
pub fn fit_front(times: &[f64], positions: &[f64]) -> Result<(f64, f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&t, &m) in times.iter().zip(positions) {
        let row = [t, t.ln(), 1.0];
        for i in 0..3 {
            atb[i] += row[i] * m;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve3(ata, atb).ok_or_else(|| Error::SolverFailure("degenerate front fit".into()))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<(f64, f64, f64)> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut acc = b[i];
        for k in i + 1..3 {
            acc -= a[i][k] * x[k];
        }
        x[i] = acc / a[i][i];
    }
    Some((x[0], x[1], x[2]))
}

/// Sup distance between `u(., m + y)` and `h_*(y)` over the grid.
pub fn shape_distance(state: &PdeState, m_half: f64, hstar: &WaveSolution) -> f64 {
    state
        .w
        .iter()
        .enumerate()
        .map(|(i, &w)| (1.0 - w - hstar.interpolate(state.x(i) - m_half)).abs())
        .fold(0.0, f64::max)
}

/// Evolve `u` with `s = 0` from `u(0, .) = 1` and track the half-height point.
pub fn run_front(
    params: &ModelParams,
    horizon: f64,
    dx: f64,
    dt: f64,
    hstar: &WaveSolution,
) -> Result<FrontTrace> {
    run_front_observed(params, horizon, dx, dt, hstar, |_| {})
}

/// [`run_front`], calling `observe` after every step.
pub fn run_front_observed(
    params: &ModelParams,
    horizon: f64,
    dx: f64,
    dt: f64,
    hstar: &WaveSolution,
    mut observe: impl FnMut(&PdeState),
) -> Result<FrontTrace> {
    if params.mu >= params.critical_drift() || params.regime.is_c() {
        return Err(Error::UnsupportedRegime {
            required: "A or B",
            actual: params.regime.to_string(),
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive (got {horizon})")));
    }
    let mut state = PdeState::new(params, 0.0, dx, dt, 2.0 * LEAD)?;
    let mut times = Vec::new();
    let mut half_positions = Vec::new();
    while state.t < horizon - 0.5 * dt {
        state.step()?;
        let probe = state.len().saturating_sub(1 + (5.0 / dx) as usize);
        if state.w[probe] > LEADING_EDGE_FLOOR {
            state.extend_to(state.x_max + 2.0 * LEAD)?;
        }
        if let Some(m) = state.half_position() {
            if m > state.x_max - LEAD {
                state.extend_to(m + 2.0 * LEAD)?;
            }
            times.push(state.t);
            half_positions.push(m);
        }
        observe(&state);
    }
    let start = times.partition_point(|&t| t < 0.5 * horizon);
    let (v, k, c) = fit_front(&times[start..], &half_positions[start..])?;
    let m_final = *half_positions
        .last()
        .ok_or_else(|| Error::FrontEscaped("half level never attained".into()))?;
    let shape = shape_distance(&state, m_final, hstar);
    Ok(FrontTrace {
        params: *params,
        times,
        half_positions,
        fitted_speed: v,
        fitted_log_coeff: k,
        fitted_const: c,
        shape_distance: shape,
        final_state: state,
    })
}
