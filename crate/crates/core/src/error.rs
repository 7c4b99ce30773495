use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires regime {required} but parameters are in regime {actual}")]
    UnsupportedRegime {
        required: &'static str,
        actual: String,
    },

    #[error("|z| = {z_abs} lies outside the evaluable disc (radius estimate {radius})")]
    OutOfDisc { z_abs: f64, radius: f64 },

    #[error("root not bracketed inside the usable disc; largest usable |z| = {largest_usable}")]
    RadiusExceeded { largest_usable: f64 },

    /// `s0` is `NaN` when the bound was detected without being located.
    #[error("s = {s} exceeds s0{}: the generating function is infinite", fmt_s0(*s0))]
    NoFiniteMoment { s: f64, s0: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("stability violation at t = {t}: {detail}")]
    StabilityViolation { t: f64, detail: String },

    #[error("front left the grid: {0}")]
    FrontEscaped(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("spine did not reach the truncation level {level} before the horizon")]
    SpineHorizon { level: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

fn fmt_s0(s0: f64) -> String {
    if s0.is_nan() {
        String::new()
    } else {
        format!(" = {s0}")
    }
}
