//! Model parameters and drift regimes.
//!
//! Particles diffuse with drift `mu`, split in two at rate `beta` and are
//! absorbed on hitting the origin. The drift relative to `sqrt(2 beta)`
//! decides the qualitative behaviour of the absorbed count `K`.

use std::fmt;

use crate::error::{Error, Result};

/// Drift regime of the absorbed branching Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `mu <= -sqrt(2 beta)`: almost sure extinction.
    A,
    /// `|mu| < sqrt(2 beta)`: survival with infinitely many absorptions.
    B,
    /// `mu > sqrt(2 beta)`: escape with finitely many absorptions.
    CSupercritical,
    /// `mu == sqrt(2 beta)`: double root of the characteristic polynomial.
    CCritical,
}

impl Regime {
    pub fn is_c(self) -> bool {
        matches!(self, Regime::CSupercritical | Regime::CCritical)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::A => "A",
            Regime::B => "B",
            Regime::CSupercritical => "C (supercritical)",
            Regime::CCritical => "C (critical)",
        };
        f.write_str(s)
    }
}

/// Relative tolerance used to snap `mu` onto the critical drift.
///
/// Decimal inputs such as `--mu 1.4142135` never hit `sqrt(2)` exactly; the
/// snap keeps `r = R = mu` and `p = 1` for them.
pub const CRITICAL_SNAP: f64 = 1e-7;

/// Drift, branching rate and the constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub beta: f64,
    /// Larger root `mu + sqrt(mu^2 - 2 beta)` of `x^2/2 - mu x + beta`; regime C only.
    pub r: Option<f64>,
    /// Smaller root `mu - sqrt(mu^2 - 2 beta)`; regime C only.
    pub r_small: Option<f64>,
    /// `2 beta / r^2`, in `(0, 1]`; regime C only.
    pub p: Option<f64>,
    pub regime: Regime,
    /// True when the two roots coincide.
    pub critical: bool,
}

impl ModelParams {
    /// Validate `(mu, beta)` and derive the roots, rescaling and regime.
    pub fn classify(mu: f64, beta: f64) -> Result<Self> {
        if !mu.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mu and beta must be finite (mu = {mu}, beta = {beta})"
            )));
        }
        if beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive (beta = {beta})"
            )));
        }
        let mu_c = (2.0 * beta).sqrt();
        let critical = ((mu - mu_c) / mu_c).abs() <= CRITICAL_SNAP;
        let regime = if critical {
            Regime::CCritical
        } else if mu > mu_c {
            Regime::CSupercritical
        } else if mu <= -mu_c {
            Regime::A
        } else {
            Regime::B
        };

        let (r, r_small, p) = match regime {
            Regime::CCritical => (Some(mu), Some(mu), Some(1.0)),
            Regime::CSupercritical => {
                let disc = (mu * mu - 2.0 * beta).sqrt();
                let r = mu + disc;
                // Vieta: r * R = 2 beta avoids cancellation in mu - disc.
                let r_small = 2.0 * beta / r;
                (Some(r), Some(r_small), Some(2.0 * beta / (r * r)))
            }
            Regime::A | Regime::B => (None, None, None),
        };

        Ok(Self {
            mu,
            beta,
            r,
            r_small,
            p,
            regime,
            critical,
        })
    }

    /// The critical drift `sqrt(2 beta)`.
    pub fn critical_drift(&self) -> f64 {
        (2.0 * self.beta).sqrt()
    }

    /// `sqrt(mu^2 - 2 beta)`, the spine drift magnitude (zero at criticality).
    pub fn spine_drift(&self) -> f64 {
        if self.critical {
            0.0
        } else {
            (self.mu * self.mu - 2.0 * self.beta).max(0.0).sqrt()
        }
    }

    /// Roots and rescaling, or an error outside regime C.
    pub fn regime_c(&self) -> Result<RegimeC> {
        match (self.r, self.r_small, self.p) {
            (Some(r), Some(r_small), Some(p)) => Ok(RegimeC { r, r_small, p }),
            _ => Err(Error::UnsupportedRegime {
                required: "C",
                actual: self.regime.to_string(),
            }),
        }
    }

    /// Ratio `mu / sqrt(beta)`, the only combination regime-C constants depend on.
    pub fn drift_ratio(&self) -> f64 {
        self.mu / self.beta.sqrt()
    }
}

/// Derived constants that exist only in regime C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeC {
    pub r: f64,
    pub r_small: f64,
    pub p: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn critical_drift() {
        let m = ModelParams::classify(2f64.sqrt(), 1.0).unwrap();
        assert_eq!(m.regime, Regime::CCritical);
        assert!(m.critical);
        assert_relative_eq!(m.r.unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(m.p, Some(1.0));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn decimal_critical_input_snaps() {
        let m = ModelParams::classify(1.4142135, 1.0).unwrap();
        assert_eq!(m.regime, Regime::CCritical);
        assert_eq!(m.p, Some(1.0));
    }

    #[test]
    fn supercritical_roots() {
        let m = ModelParams::classify(2.0, 1.0).unwrap();
        assert_eq!(m.regime, Regime::CSupercritical);
        assert_relative_eq!(m.r.unwrap(), 2.0 + 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(m.r_small.unwrap(), 2.0 - 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(m.p.unwrap(), 0.171_572_875_253_809_9, max_relative = 1e-14);
    }

    #[test]
    fn regimes_a_and_b() {
        let b = ModelParams::classify(0.0, 1.0).unwrap();
        assert_eq!(b.regime, Regime::B);
        assert!(b.r.is_none() && b.r_small.is_none() && b.p.is_none());
        assert!(b.regime_c().is_err());
        assert_eq!(ModelParams::classify(-2.0, 1.0).unwrap().regime, Regime::A);
        assert_eq!(
            ModelParams::classify(-(2f64.sqrt()), 1.0).unwrap().regime,
            Regime::A
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelParams::classify(f64::NAN, 1.0).is_err());
        assert!(ModelParams::classify(1.0, 0.0).is_err());
        assert!(ModelParams::classify(1.0, -1.0).is_err());
        assert!(ModelParams::classify(f64::INFINITY, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn roots_solve_characteristic_polynomial(beta in 0.05f64..20.0, excess in 1.0001f64..10.0) {
            let mu = excess * (2.0 * beta).sqrt();
            let m = ModelParams::classify(mu, beta).unwrap();
            let c = m.regime_c().unwrap();
            for x in [c.r, c.r_small] {
                let poly = 0.5 * x * x - mu * x + beta;
                let scale = 0.5 * x * x + mu * x + beta;
                prop_assert!(poly.abs() <= 1e-12 * scale);
            }
            prop_assert!(c.p > 0.0 && c.p <= 1.0);
        }

        #[test]
        fn scaling_preserves_regime_and_p(mu in -6.0f64..6.0, beta in 0.1f64..5.0, lambda in 0.1f64..10.0) {
            let a = ModelParams::classify(mu, beta).unwrap();
            let b = ModelParams::classify(lambda.sqrt() * mu, lambda * beta).unwrap();
            prop_assert_eq!(a.regime, b.regime);
            match (a.p, b.p) {
                (Some(pa), Some(pb)) => prop_assert!((pa - pb).abs() <= 1e-12),
                (None, None) => {}
                _ => prop_assert!(false, "p presence differs"),
            }
        }
    }
}
