//! Power-series representation of the standing waves.
//!
//! In regime C every finite standing wave has the form
//! `omega_s(x) = 1 - Phi(B_s exp(-r x))` with `Phi(z) = sum a_n z^n`,
//! `a_1 = 1` and
//!
//! ```text
//! a_n = 1 / ((n - 1) (n / p - 1)) * sum_{j=1}^{n-1} a_j a_{n-j},   p = 2 beta / r^2.
//! ```
//!
//! Coefficients are stored in the rescaled form `b_n = a_n / p^(n-1)`, which
//! obeys the same recursion with `(n - 1)(n - p)` in the denominator and stays
//! of order `4^-n` for small `p`. For large drifts `a_n` itself leaves the `f64`
//! range long before `n = 200`, so every evaluation goes through
//! `Phi(z) = Psi(p z) / p` with `Psi(w) = sum b_n w^n`.

use log::warn;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Default truncation order.
pub const DEFAULT_N_MAX: usize = 200;
/// Default bisection tolerance (absolute, in `z`).
pub const ROOT_TOL: f64 = 1e-10;

/// Geometric majorant `b_n <= 15 * 4^-n`, valid once the low orders pass the
/// seed check `4^n b_n <= 15 - p` for `n <= 14`.
const MAJORANT_SCALE: f64 = 15.0;
const MAJORANT_RATE: f64 = 4.0;
const MAJORANT_SEED_ORDER: usize = 14;

/// Coefficient table of `Phi` (or of `Psi^(0)` for the `p -> 0` limit).
#[derive(Debug, Clone)]
pub struct SeriesTable {
    /// `None` for the `p -> 0` limit table.
    pub params: Option<ModelParams>,
    /// Rescaling `p = 2 beta / r^2`; zero for the limit table.
    pub p: f64,
    pub n_max: usize,
    /// `a[i]` is the coefficient of order `i + 1`. Underflows to zero for very
    /// large drifts; `b` carries the full information.
    pub a: Vec<f64>,
    /// `b[i]` is the rescaled coefficient of order `i + 1`.
    pub b: Vec<f64>,
    /// Ratio-test estimate of the radius of convergence of `Phi`
    /// (of `Psi^(0)` for the limit table).
    pub radius_estimate: f64,
    /// Radius estimate for the rescaled series `Psi^(p)`.
    pub rescaled_radius: f64,
    /// Whether the `15 * 4^-n` majorant is established for this `p`.
    pub majorant_holds: bool,
    /// Largest value of `4^n b_n` over `n <= 14`.
    pub seed_max: f64,
}

/// Value of a truncated series together with a bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
    /// True when the bound is the heuristic `10 |last term|` rather than the
    /// geometric majorant.
    pub heuristic: bool,
}

/// Constants locating the extremal standing waves on the `Phi` curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveConstants {
    pub params: ModelParams,
    /// Smallest positive root of `Phi(z) = 1`; `omega_0(x) = 1 - Phi(B0 e^{-rx})`.
    pub b0: f64,
    /// Largest negative critical point of `Phi`.
    pub b_s0: f64,
    /// Critical exponential-moment parameter `1 - Phi(B_s0)`.
    pub s0: f64,
    /// `p * B_s0`, the first local minimum of `Psi^(p)` left of zero.
    pub m_p: f64,
    /// `Phi''(B_s0)`, positive at a genuine minimum.
    pub phi_second_at_b_s0: f64,
}

/// `omega_s` for one fixed `s`, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct SeriesWave<'a> {
    table: &'a SeriesTable,
    pub s: f64,
    /// Amplitude `B_s` with `1 - omega_s(x) ~ B_s e^{-rx}`.
    pub b_s: f64,
    r: f64,
}

impl SeriesTable {
    /// Fill the coefficient table for regime-C parameters.
    pub fn build(params: &ModelParams, n_max: usize) -> Result<Self> {
        let c = params.regime_c()?;
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "truncation order must be at least 2 (got {n_max})"
            )));
        }
        Ok(Self::from_rescaled(Some(*params), c.p, n_max))
    }

    /// The `p -> 0` limit: `b_n = sum b_j b_{n-j} / ((n - 1) n)`.
    pub fn limit_p0(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "truncation order must be at least 2 (got {n_max})"
            )));
        }
        Ok(Self::from_rescaled(None, 0.0, n_max))
    }

    fn from_rescaled(params: Option<ModelParams>, p: f64, n_max: usize) -> Self {
        let b = rescaled_coefficients(p, n_max);
        let a = if p > 0.0 {
            let ln_p = p.ln();
            b.iter()
                .enumerate()
                .map(|(i, &bn)| bn * (i as f64 * ln_p).exp())
                .collect()
        } else {
            let mut a = vec![0.0; n_max];
            a[0] = 1.0;
            a
        };

        let rescaled_radius = ratio_radius(&b);
        let radius_estimate = if p > 0.0 {
            rescaled_radius / p
        } else {
            rescaled_radius
        };

        let seed_max = b
            .iter()
            .take(MAJORANT_SEED_ORDER.min(n_max))
            .enumerate()
            .map(|(i, &bn)| MAJORANT_RATE.powi(i as i32 + 1) * bn)
            .fold(0.0, f64::max);
        let majorant_holds = n_max >= MAJORANT_SEED_ORDER && seed_max <= MAJORANT_SCALE - p;

        Self {
            params,
            p,
            n_max,
            a,
            b,
            radius_estimate,
            rescaled_radius,
            majorant_holds,
            seed_max,
        }
    }

    /// Coefficient `a_n` (1-based order).
    pub fn a_n(&self, n: usize) -> f64 {
        self.a[n - 1]
    }

    /// Rescaled coefficient `b_n` (1-based order).
    pub fn b_n(&self, n: usize) -> f64 {
        self.b[n - 1]
    }

    fn is_limit(&self) -> bool {
        self.p == 0.0
    }

    fn check_disc(&self, z: f64) -> Result<()> {
        if !z.is_finite() || z.abs() >= self.radius_estimate {
            return Err(Error::OutOfDisc {
                z_abs: z.abs(),
                radius: self.radius_estimate,
            });
        }
        Ok(())
    }

    /// `Psi^(p)(w)` and its first two derivatives by a single Horner sweep.
    fn psi_all(&self, w: f64) -> [f64; 3] {
        let mut v = 0.0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for &bn in self.b.iter().rev() {
            d2 = d2 * w + 2.0 * d1;
            d1 = d1 * w + v;
            v = v * w + bn;
        }
        // The sweep produced the series with the leading factor w removed.
        [v * w, d1 * w + v, d2 * w + 2.0 * d1]
    }

    /// Tail bound for the derivative of order `k` of `Psi` at `|w|`.
    fn psi_tail(&self, w_abs: f64, k: usize) -> (f64, bool) {
        let n_max = self.n_max;
        let q = w_abs / MAJORANT_RATE;
        if w_abs == 0.0 {
            return (0.0, false);
        }
        if self.majorant_holds && q < 1.0 {
            let mut sum = 0.0;
            let mut n = n_max + 1;
            loop {
                let falling = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64);
                let term = MAJORANT_SCALE * falling * q.powi(n as i32) / w_abs.powi(k as i32);
                sum += term;
                if term <= 1e-18 * sum || term == 0.0 || n > n_max + 100_000 {
                    break;
                }
                n += 1;
            }
            (sum, false)
        } else {
            let falling = (0..k).fold(1.0, |acc, i| acc * (n_max - i) as f64);
            let last = self.b[n_max - 1] * falling * w_abs.powi(n_max as i32 - k as i32);
            (10.0 * last.abs(), true)
        }
    }

    fn psi_eval(&self, w: f64, k: usize) -> SeriesValue {
        let vals = self.psi_all(w);
        let (tail_bound, heuristic) = self.psi_tail(w.abs(), k);
        SeriesValue {
            value: vals[k],
            tail_bound,
            heuristic,
        }
    }

    fn phi_eval(&self, z: f64, k: usize) -> Result<SeriesValue> {
        self.check_disc(z)?;
        if self.is_limit() {
            return Ok(self.psi_eval(z, k));
        }
        let p = self.p;
        let v = self.psi_eval(p * z, k);
        // Phi^(k)(z) = p^(k-1) Psi^(k)(p z)
        let scale = p.powi(k as i32 - 1);
        Ok(SeriesValue {
            value: v.value * scale,
            tail_bound: v.tail_bound * scale,
            heuristic: v.heuristic,
        })
    }

    /// `Phi(z)`; for the limit table this is `Psi^(0)(z)`.
    pub fn eval_phi(&self, z: f64) -> Result<SeriesValue> {
        self.phi_eval(z, 0)
    }

    pub fn eval_phi_prime(&self, z: f64) -> Result<SeriesValue> {
        self.phi_eval(z, 1)
    }

    pub fn eval_phi_second(&self, z: f64) -> Result<SeriesValue> {
        self.phi_eval(z, 2)
    }

    /// `Psi^(p)(w) = sum b_n w^n`, gated by the rescaled radius.
    pub fn eval_psi(&self, w: f64) -> Result<SeriesValue> {
        if !w.is_finite() || w.abs() >= self.rescaled_radius {
            return Err(Error::OutOfDisc {
                z_abs: w.abs(),
                radius: self.rescaled_radius,
            });
        }
        Ok(self.psi_eval(w, 0))
    }

    pub fn eval_psi_prime(&self, w: f64) -> Result<SeriesValue> {
        if !w.is_finite() || w.abs() >= self.rescaled_radius {
            return Err(Error::OutOfDisc {
                z_abs: w.abs(),
                radius: self.rescaled_radius,
            });
        }
        Ok(self.psi_eval(w, 1))
    }

    /// Unchecked `Phi` values for inner loops that have already validated `z`.
    fn phi_raw(&self, z: f64) -> [f64; 3] {
        if self.is_limit() {
            return self.psi_all(z);
        }
        let p = self.p;
        let v = self.psi_all(p * z);
        [v[0] / p, v[1], v[2] * p]
    }

    /// Largest `|z|` we are willing to evaluate at.
    fn usable_limit(&self) -> f64 {
        self.radius_estimate * (1.0 - 1e-9)
    }

    /// Locate `B0`, `B_s0` and `s0` by geometric scan plus bisection.
    pub fn find_wave_constants(&self) -> Result<WaveConstants> {
        let params = self.params.ok_or_else(|| {
            Error::InvalidParameter("the p -> 0 limit table has no standing waves".into())
        })?;
        if self.majorant_holds {
            log::debug!("15 * 4^-n majorant active (seed max {:.4})", self.seed_max);
        } else {
            warn!(
                "coefficient majorant not established (max 4^n b_n = {:.3}); tail bounds are heuristic",
                self.seed_max
            );
        }
        let limit = self.usable_limit();

        let (lo, hi) = scan_bracket(limit, 1.0, |z| self.phi_raw(z)[0] - 1.0 >= 0.0)?;
        let b0 = bisect(lo, hi, ROOT_TOL, |z| self.phi_raw(z)[0] - 1.0 >= 0.0);

        let (lo, hi) = scan_bracket(limit, -1.0, |z| self.phi_raw(z)[1] <= 0.0)?;
        let b_s0 = bisect(lo, hi, ROOT_TOL, |z| self.phi_raw(z)[1] <= 0.0);
        let [phi_min, _, phi_second] = self.phi_raw(b_s0);

        let tail = self.eval_phi(b_s0)?;
        if tail.heuristic {
            log::debug!("tail at B_s0 bounded heuristically by {:.3e}", tail.tail_bound);
        }

        Ok(WaveConstants {
            params,
            b0,
            b_s0,
            s0: 1.0 - phi_min,
            m_p: self.p * b_s0,
            phi_second_at_b_s0: phi_second,
        })
    }

    /// First local minimum of the limit series `Psi^(0)` left of zero, as
    /// `(m0, Psi^(0)(m0))`.
    pub fn first_negative_minimum(&self) -> Result<(f64, f64)> {
        let limit = if self.is_limit() {
            self.usable_limit()
        } else {
            self.rescaled_radius * (1.0 - 1e-9)
        };
        let psi = |w: f64| self.psi_all(w);
        let (lo, hi) = scan_bracket(limit, -1.0, |w| psi(w)[1] <= 0.0)?;
        let m = bisect(lo, hi, ROOT_TOL, |w| psi(w)[1] <= 0.0);
        Ok((m, psi(m)[0]))
    }

    /// `omega_s` as a reusable evaluator.
    pub fn wave<'a>(&'a self, consts: &WaveConstants, s: f64) -> Result<SeriesWave<'a>> {
        let c = consts.params.regime_c()?;
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("s must be non-negative (got {s})")));
        }
        if s > consts.s0 * (1.0 + 1e-12) {
            return Err(Error::NoFiniteMoment { s, s0: consts.s0 });
        }
        let target = 1.0 - s;
        let b_s = if s == 1.0 {
            0.0
        } else if s == 0.0 {
            consts.b0
        } else if s >= consts.s0 {
            consts.b_s0
        } else if s < 1.0 {
            bisect(0.0, consts.b0, ROOT_TOL * 1e-2, |z| self.phi_raw(z)[0] >= target)
        } else {
            // Phi increases on [B_s0, 0]; the predicate flips from false to true.
            bisect(consts.b_s0, 0.0, ROOT_TOL * 1e-2, |z| self.phi_raw(z)[0] >= target)
        };
        self.check_disc(b_s).map_err(|_| Error::RadiusExceeded {
            largest_usable: self.usable_limit(),
        })?;
        Ok(SeriesWave {
            table: self,
            s,
            b_s,
            r: c.r,
        })
    }
}

impl SeriesWave<'_> {
    fn z(&self, x: f64) -> f64 {
        self.b_s * (-self.r * x).exp()
    }

    /// `1 - omega_s(x) = Phi(B_s e^{-rx})`, accurate when `omega_s` is near 1.
    pub fn one_minus(&self, x: f64) -> f64 {
        self.table.phi_raw(self.z(x))[0]
    }

    /// `omega_s(x)`.
    pub fn value(&self, x: f64) -> f64 {
        // s == 1 gives z == 0 and hence exactly 1.
        1.0 - self.one_minus(x)
    }

    /// `omega_s'(x) = r z Phi'(z)`.
    pub fn deriv(&self, x: f64) -> f64 {
        let z = self.z(x);
        self.r * z * self.table.phi_raw(z)[1]
    }

    /// `omega_s''(x) = -r^2 (z Phi'(z) + z^2 Phi''(z))`.
    pub fn second(&self, x: f64) -> f64 {
        let z = self.z(x);
        let [_, d1, d2] = self.table.phi_raw(z);
        -self.r * self.r * (z * d1 + z * z * d2)
    }

    /// Evaluate with tail bound; errors if `x` is outside the evaluable disc.
    pub fn checked_value(&self, x: f64) -> Result<SeriesValue> {
        if x < 0.0 {
            return Err(Error::Domain(format!("x must be non-negative (got {x})")));
        }
        let v = self.table.eval_phi(self.z(x)).map_err(|_| Error::RadiusExceeded {
            largest_usable: self.table.usable_limit(),
        })?;
        Ok(SeriesValue {
            value: 1.0 - v.value,
            ..v
        })
    }
}

/// `omega_s(x)` in one call.
pub fn omega_s(table: &SeriesTable, consts: &WaveConstants, s: f64, x: f64) -> Result<f64> {
    Ok(table.wave(consts, s)?.checked_value(x)?.value)
}

/// Rescaled coefficients `b_1..b_{n_max}` for a given `p` (possibly zero).
pub fn rescaled_coefficients(p: f64, n_max: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity(n_max);
    b.push(1.0);
    for n in 2..=n_max {
        // The convolution is symmetric; sum half of it twice.
        let mut s = 0.0;
        for j in 1..=(n - 1) / 2 {
            s += b[j - 1] * b[n - j - 1];
        }
        s *= 2.0;
        if n % 2 == 0 {
            let h = b[n / 2 - 1];
            s += h * h;
        }
        b.push(s / ((n - 1) as f64 * (n as f64 - p)));
    }
    b
}

/// Median of `b_n / b_{n+1}` over the last fifth of the orders.
fn ratio_radius(b: &[f64]) -> f64 {
    let n = b.len();
    let start = ((n as f64 * 0.8) as usize).min(n.saturating_sub(2));
    let mut ratios: Vec<f64> = (start..n - 1)
        .filter(|&i| b[i + 1] > 0.0)
        .map(|i| b[i] / b[i + 1])
        .collect();
    if ratios.is_empty() {
        return f64::INFINITY;
    }
    ratios.sort_by(f64::total_cmp);
    let m = ratios.len();
    if m % 2 == 1 {
        ratios[m / 2]
    } else {
        0.5 * (ratios[m / 2 - 1] + ratios[m / 2])
    }
}

/// Scan `z = sign * 0.01 * 2^k` until `pred` first holds; returns the bracket
/// `(last_false, first_true)`.
fn scan_bracket(limit: f64, sign: f64, pred: impl Fn(f64) -> bool) -> Result<(f64, f64)> {
    let mut prev = 0.0;
    let mut mag = 0.01;
    loop {
        let z = if mag >= limit { sign * limit } else { sign * mag };
        if pred(z) {
            return Ok((prev, z));
        }
        if mag >= limit {
            return Err(Error::RadiusExceeded {
                largest_usable: limit,
            });
        }
        prev = z;
        mag *= 2.0;
    }
}

/// Bisection on a predicate that is false at `a` and true at `b`.
pub(crate) fn bisect(mut a: f64, mut b: f64, tol: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

/// Asymptotic `P^x[K = n]` from the moment-critical wave.
///
/// `wave_deriv_at_x` is `omega_{s0}'(x) < 0`.
pub fn tail_prediction(consts: &WaveConstants, wave_deriv_at_x: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain(
            "the tail law is an n -> infinity asymptotic; use omega(x) for n = 0".into(),
        ));
    }
    let s0 = consts.s0;
    let beta = consts.params.beta;
    let nf = n as f64;
    let denom = 2.0
        * (nf * s0.ln()).exp()
        * nf.powf(1.5)
        * (std::f64::consts::PI * beta * (s0 - 1.0)).sqrt();
    Ok(-wave_deriv_at_x / denom)
}

/// One row of the `s0` curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S0Point {
    pub ratio: f64,
    pub s0: f64,
    pub p_s0: f64,
    pub p: f64,
}

/// The limiting value of `p * s0` as the drift ratio grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P0Limit {
    /// First minimum `m^(0)` of `Psi^(0)` left of zero.
    pub m0: f64,
    /// `Psi^(0)(m^(0))`, which is negative.
    pub psi_at_m0: f64,
    /// `|Psi^(0)(m^(0))|`, the value `p * s0` approaches.
    pub limit: f64,
}

pub fn p0_limit(n_max: usize) -> Result<P0Limit> {
    let t = SeriesTable::limit_p0(n_max)?;
    let (m0, psi_at_m0) = t.first_negative_minimum()?;
    Ok(P0Limit {
        m0,
        psi_at_m0,
        limit: psi_at_m0.abs(),
    })
}

/// `s0` and `p s0` along drift ratios `mu / sqrt(beta)` (with `beta = 1`).
pub fn s0_limit_curve(ratios: &[f64], n_max: usize) -> Result<Vec<S0Point>> {
    ratios
        .iter()
        .map(|&ratio| {
            let params = ModelParams::classify(ratio, 1.0)?;
            if !params.regime.is_c() {
                return Err(Error::UnsupportedRegime {
                    required: "C",
                    actual: params.regime.to_string(),
                });
            }
            let table = SeriesTable::build(&params, n_max)?;
            let c = table.find_wave_constants()?;
            Ok(S0Point {
                ratio,
                s0: c.s0,
                p_s0: table.p * c.s0,
                p: table.p,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn critical() -> ModelParams {
        ModelParams::classify(2f64.sqrt(), 1.0).unwrap()
    }

    /// Direct evaluation of the a-recursion with the original denominator.
    fn a_recursion_oracle(params: &ModelParams, n_max: usize) -> Vec<f64> {
        let r = params.r.unwrap();
        let (mu, beta) = (params.mu, params.beta);
        let mut a = vec![1.0];
        for n in 2..=n_max {
            let conv: f64 = (1..n).map(|j| a[j - 1] * a[n - j - 1]).sum();
            let nf = n as f64;
            a.push(beta / (0.5 * nf * nf * r * r - nf * mu * r + beta) * conv);
        }
        a
    }

    #[test]
    fn critical_low_orders() {
        let t = SeriesTable::build(&critical(), 10).unwrap();
        // p = 1: a_n = (n - 1)^-2 sum a_j a_{n-j}; by hand 1, 1, 1/2, 2/9.
        assert_eq!(t.a_n(1), 1.0);
        assert_relative_eq!(t.a_n(2), 1.0, max_relative = 1e-15);
        assert_relative_eq!(t.a_n(3), 0.5, max_relative = 1e-15);
        assert_relative_eq!(t.a_n(4), 2.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn matches_unscaled_recursion() {
        for mu in [2f64.sqrt(), 1.7, 2.0, 3.0] {
            let params = ModelParams::classify(mu, 1.0).unwrap();
            let t = SeriesTable::build(&params, 60).unwrap();
            let oracle = a_recursion_oracle(&params, 60);
            for (n, (&a, &o)) in t.a.iter().zip(&oracle).enumerate() {
                assert_relative_eq!(a, o, max_relative = 1e-12);
                let p = t.p;
                assert_relative_eq!(a, p.powi(n as i32) * t.b[n], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn limit_table_seed_maximum() {
        let t = SeriesTable::limit_p0(60).unwrap();
        assert!((t.seed_max - 14.14).abs() < 0.05, "{}", t.seed_max);
        assert!(t.majorant_holds);
    }

    #[test]
    fn phi_at_origin() {
        let t = SeriesTable::build(&critical(), 50).unwrap();
        assert_eq!(t.eval_phi(0.0).unwrap().value, 0.0);
        assert_eq!(t.eval_phi_prime(0.0).unwrap().value, 1.0);
    }

    #[test]
    fn out_of_disc_is_an_error() {
        let t = SeriesTable::build(&critical(), 200).unwrap();
        let err = t.eval_phi(10.0).unwrap_err();
        assert!(matches!(err, Error::OutOfDisc { .. }));
    }

    #[test]
    fn regime_b_rejected() {
        let p = ModelParams::classify(0.0, 1.0).unwrap();
        assert!(matches!(
            SeriesTable::build(&p, 50),
            Err(Error::UnsupportedRegime { .. })
        ));
        assert!(s0_limit_curve(&[1.0], 50).is_err());
    }

    #[test]
    fn tail_prediction_rejects_zero() {
        let t = SeriesTable::build(&critical(), 200).unwrap();
        let c = t.find_wave_constants().unwrap();
        assert!(tail_prediction(&c, -0.1, 0).is_err());
        let p3 = tail_prediction(&c, -0.1, 3).unwrap();
        let p4 = tail_prediction(&c, -0.1, 4).unwrap();
        assert_relative_eq!(p4 / p3, (0.75f64).powf(1.5) / c.s0, max_relative = 1e-12);
    }

    #[test]
    fn omega_special_values() {
        let t = SeriesTable::build(&critical(), 200).unwrap();
        let c = t.find_wave_constants().unwrap();
        for x in [0.0, 0.3, 2.0] {
            assert_eq!(omega_s(&t, &c, 1.0, x).unwrap(), 1.0);
        }
        assert!(omega_s(&t, &c, 0.0, 0.0).unwrap().abs() < 1e-9);
        assert!(matches!(
            omega_s(&t, &c, c.s0 * 1.01, 1.0),
            Err(Error::NoFiniteMoment { .. })
        ));
    }

    #[test]
    fn derivative_evaluators_agree_with_differences() {
        let params = ModelParams::classify(2.0, 1.0).unwrap();
        let t = SeriesTable::build(&params, 200).unwrap();
        let c = t.find_wave_constants().unwrap();
        for s in [0.0, 0.5, 2.0] {
            let w = t.wave(&c, s).unwrap();
            for x in [0.1, 0.7, 2.0] {
                let h = 1e-5;
                let fd1 = (w.value(x + h) - w.value(x - h)) / (2.0 * h);
                let fd2 = (w.deriv(x + h) - w.deriv(x - h)) / (2.0 * h);
                assert!((fd1 - w.deriv(x)).abs() < 1e-7);
                assert!((fd2 - w.second(x)).abs() < 1e-6);
            }
        }
    }
}
