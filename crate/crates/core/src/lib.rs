//! Numerics for branching Brownian motion with absorption at the origin.
//!
//! The crate computes the standing waves `omega_s` (generating functions of
//! the number of absorbed particles) by power series, ODE shooting and Monte
//! Carlo, the critical moment parameter `s0`, and the travelling-wave
//! behaviour of the absorption-probability PDE.

pub mod error;
pub mod mcsim;
pub mod model;
pub mod ode;
pub mod pde;
pub mod quad;
pub mod series;
pub mod waves;

pub use error::{Error, Result};
pub use model::{ModelParams, Regime, RegimeC};
pub use series::{SeriesTable, SeriesValue, WaveConstants};
pub use pde::{FrontTrace, PdeState};
pub use waves::{DecayClass, WaveSolution};
pub use mcsim::{KHistogram, McConfig, McEstimate, ParticleSystem, StopReason};
