//! Time-stepped particle system with Brownian-bridge absorption.

use rand::Rng;
use rand_distr::StandardNormal;

use super::sampler::{Overflow, Sampler};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Why a replica stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StopReason {
    /// `Z_live < epsilon`: by the union bound, further absorptions have
    /// probability at most `epsilon`. Includes the case where every live
    /// particle has been resolved by the closure.
    EpsilonRule,
    /// No live particles remain (regimes A and B).
    Extinction,
    Horizon,
    /// Population, count or work cap exceeded.
    Overflow,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::EpsilonRule => "EPSILON_RULE",
            StopReason::Extinction => "EXTINCTION",
            StopReason::Horizon => "HORIZON",
            StopReason::Overflow => "OVERFLOW",
        })
    }
}

/// How particles far from the origin are handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// Plain time stepping until a stopping rule fires.
    None,
    /// A particle reaching this level is replaced by an exact draw of its
    /// descendants' absorbed count.
    Level(f64),
    /// Level `x0 + offset / r`, relative to the starting point.
    Offset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub epsilon: f64,
    /// Time step; `None` selects `min(0.01/beta, 0.01/mu^2, 0.01/r^2)`.
    pub dt: Option<f64>,
    pub horizon: f64,
    pub population_cap: usize,
    pub k_cap: u64,
    pub closure: Closure,
    pub node_budget: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            dt: None,
            horizon: 1e4,
            population_cap: 1_000_000,
            k_cap: 1_000_000,
            closure: Closure::Offset(1.0),
            node_budget: super::sampler::DEFAULT_NODE_BUDGET,
        }
    }
}

/// Default step `min(0.01/beta, 0.01/mu^2, 0.01/r^2)`.
pub fn default_dt(params: &ModelParams) -> f64 {
    let mut dt = 0.01 / params.beta;
    if params.mu != 0.0 {
        dt = dt.min(0.01 / (params.mu * params.mu));
    }
    if let Some(r) = params.r {
        dt = dt.min(0.01 / (r * r));
    }
    dt
}

/// Live particles, absorbed count and the additive martingale.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub params: ModelParams,
    pub t: f64,
    pub live: Vec<f64>,
    /// `K(t)`.
    pub absorbed: u64,
    /// `sum_live e^{-r X}`, maintained incrementally; zero outside regime C.
    pub z_live: f64,
    pub rng_seed: u64,
    dt: f64,
    r: f64,
    next: Vec<f64>,
}

/// Result of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KOutcome {
    pub k: u64,
    pub stop: StopReason,
}

impl ParticleSystem {
    pub fn new(params: &ModelParams, x0: f64, dt: f64, rng_seed: u64) -> Result<Self> {
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::InvalidParameter(format!("x0 must be positive (got {x0})")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
        }
        let r = params.r.unwrap_or(0.0);
        Ok(Self {
            params: *params,
            t: 0.0,
            live: vec![x0],
            absorbed: 0,
            z_live: if params.r.is_some() { (-r * x0).exp() } else { 0.0 },
            rng_seed,
            dt,
            r,
            next: Vec::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn weight(&self, x: f64) -> f64 {
        if self.params.r.is_some() {
            (-self.r * x).exp()
        } else {
            0.0
        }
    }

    /// `Z_live` recomputed from the particle positions.
    pub fn recompute_z(&self) -> f64 {
        self.live.iter().map(|&x| self.weight(x)).sum()
    }

    /// `K(t) + Z_live(t)`.
    pub fn z_frozen(&self) -> f64 {
        self.absorbed as f64 + self.z_live
    }

    /// Brownian motion with drift from `a` over time `h`; `None` if it hits
    /// the origin (endpoint sign or bridge crossing).
    fn advance<R: Rng + ?Sized>(&self, rng: &mut R, a: f64, h: f64) -> Option<f64> {
        if h <= 0.0 {
            return Some(a);
        }
        let b = a + self.params.mu * h + h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if b <= 0.0 || rng.random::<f64>() < (-2.0 * a * b / h).exp() {
            None
        } else {
            Some(b)
        }
    }

    /// Advance one step. Particles reaching `closure` are resolved by `sampler`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        closure: Option<(f64, &Sampler)>,
    ) -> std::result::Result<(), Overflow> {
        let dt = self.dt;
        let p_split = self.params.beta * dt;
        let mut next = std::mem::take(&mut self.next);
        next.clear();
        let mut z_change = 0.0;
        for &a in &self.live {
            let w_old = self.weight(a);
            z_change -= w_old;
            // A split happens with probability beta*dt at a uniform time in the
            // step; both children then move independently to the step end.
            let (start, rest, copies) = if rng.random::<f64>() < p_split {
                let s = rng.random::<f64>() * dt;
                match self.advance(rng, a, s) {
                    Some(c) => (c, dt - s, 2),
                    None => {
                        self.absorbed += 1;
                        continue;
                    }
                }
            } else {
                (a, dt, 1)
            };
            for _ in 0..copies {
                let Some(b) = self.advance(rng, start, rest) else {
                    self.absorbed += 1;
                    continue;
                };
                match closure {
                    Some((level, sampler)) if b >= level => {
                        self.absorbed += sampler.sample_k(b, rng)?;
                    }
                    _ => {
                        z_change += self.weight(b);
                        next.push(b);
                    }
                }
            }
        }
        self.next = std::mem::replace(&mut self.live, next);
        self.z_live = (self.z_live + z_change).max(0.0);
        if self.live.is_empty() {
            self.z_live = 0.0;
        }
        self.t += dt;
        Ok(())
    }
}

/// Resolved closure level for a start point.
pub fn closure_level(params: &ModelParams, x0: f64, closure: Closure) -> Option<f64> {
    let r = params.r?;
    match closure {
        Closure::None => None,
        Closure::Level(l) => Some(l),
        Closure::Offset(o) => Some(x0 + o / r),
    }
}

/// One replica of `K` from `x0`, run until a stopping rule fires.
pub fn simulate_k_with<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: f64,
    cfg: &McConfig,
    sampler: Option<&Sampler>,
    rng: &mut R,
) -> Result<KOutcome> {
    let dt = cfg.dt.unwrap_or_else(|| default_dt(params));
    let mut sys = ParticleSystem::new(params, x0, dt, 0)?;
    let level = closure_level(params, x0, cfg.closure);
    let closure = match (level, sampler) {
        (Some(l), Some(s)) => Some((l, s)),
        (Some(_), None) => {
            return Err(Error::InvalidParameter(
                "a closure level needs a sampler".into(),
            ))
        }
        _ => None,
    };
    if let Some((l, s)) = closure {
        if x0 >= l {
            return Ok(match s.sample_k(x0, rng) {
                Ok(k) if k <= cfg.k_cap => KOutcome {
                    k,
                    stop: StopReason::EpsilonRule,
                },
                _ => KOutcome {
                    k: 0,
                    stop: StopReason::Overflow,
                },
            });
        }
    }
    let regime_c = params.regime.is_c();
    loop {
        if sys.step(rng, closure).is_err() {
            return Ok(KOutcome {
                k: sys.absorbed,
                stop: StopReason::Overflow,
            });
        }
        if sys.absorbed > cfg.k_cap || sys.live.len() > cfg.population_cap {
            return Ok(KOutcome {
                k: sys.absorbed,
                stop: StopReason::Overflow,
            });
        }
        let stop = if regime_c && sys.z_live < cfg.epsilon {
            Some(StopReason::EpsilonRule)
        } else if sys.live.is_empty() {
            Some(StopReason::Extinction)
        } else if sys.t >= cfg.horizon {
            Some(StopReason::Horizon)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(KOutcome {
                k: sys.absorbed,
                stop,
            });
        }
    }
}

/// One replica of `K` with its own seeded generator.
pub fn simulate_k(params: &ModelParams, x0: f64, cfg: &McConfig, seed: u64) -> Result<KOutcome> {
    let mut rng = super::replica_rng(seed, 0);
    let sampler = match cfg.closure {
        Closure::None => None,
        _ => Some(Sampler::new(params, cfg.epsilon)?.with_budget(cfg.node_budget)),
    };
    simulate_k_with(params, x0, cfg, sampler.as_ref(), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_bookkeeping_matches_recomputation() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let mut sys = ParticleSystem::new(&p, 0.5, default_dt(&p), 3).unwrap();
        let mut rng = super::super::replica_rng(3, 0);
        let mut k_prev = 0;
        for _ in 0..3000 {
            sys.step(&mut rng, None).unwrap();
            assert!(sys.live.iter().all(|&x| x > 0.0));
            assert!(sys.absorbed >= k_prev);
            k_prev = sys.absorbed;
            let z = sys.recompute_z();
            assert!((sys.z_live - z).abs() <= 1e-9 * z.max(1e-300), "{} vs {z}", sys.z_live);
        }
    }

    #[test]
    fn initial_martingale_value() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let sys = ParticleSystem::new(&p, 1.0, 0.001, 0).unwrap();
        assert_eq!(sys.z_frozen(), (-p.r.unwrap()).exp());
    }

    #[test]
    fn regime_b_runs_to_horizon_or_extinction() {
        let p = ModelParams::classify(0.0, 1.0).unwrap();
        let cfg = McConfig {
            horizon: 1.0,
            closure: Closure::None,
            ..McConfig::default()
        };
        let out = simulate_k(&p, 1.0, &cfg, 5).unwrap();
        assert!(matches!(out.stop, StopReason::Horizon | StopReason::Extinction));
    }
}
