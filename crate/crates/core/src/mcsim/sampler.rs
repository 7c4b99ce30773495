//! Sampler for `K(inf)` under `P^z` built on the size-biased measure.
//!
//! Under `Q^z` (density `K(inf) e^{rz}` w.r.t. `P^z`) one particle, the spine,
//! moves as a Brownian motion with drift `-sqrt(mu^2 - 2 beta)`, branches at
//! rate `2 beta` and is eventually absorbed; each branch point starts an
//! independent `P`-law system. Hence `P^z(K = n) = e^{-rz} Q^z(K = n) / n` for
//! `n >= 1`, and a `P`-draw is a `Q`-draw accepted with probability `1/K`.
//! The acceptance test `U <= 1/K` is settled as soon as the partial count
//! exceeds `1/U`, which keeps rejected spines short.
//!
//! Time stepping is exact for the spine position and its absorption (Brownian
//! bridge crossing probability); branch positions are drawn from the bridge
//! between step endpoints. Excursions above `z_cut` are skipped: they always
//! return, and launches from above `z_cut` carry weight below `epsilon`.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Work counter blew through the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow;

/// Default work budget (spine steps plus launches) per top-level draw.
pub const DEFAULT_NODE_BUDGET: u64 = 200_000_000;

#[derive(Debug, Clone, Copy)]
pub struct Sampler {
    pub r: f64,
    pub nu: f64,
    pub beta: f64,
    pub epsilon: f64,
    /// Level above which spine excursions are skipped.
    pub z_cut: f64,
    /// Smallest spine time step.
    pub dt_floor: f64,
    /// Spine steps are `step_fraction * y^2`, floored at `dt_floor`.
    pub step_fraction: f64,
    pub node_budget: u64,
}

/// Smallest `c >= 1/r` with `(4 beta / r)(c + 1/r) e^{-rc} <= epsilon`: the
/// expected number of launches with a non-zero count from one excursion above
/// `c` is below `epsilon`.
pub fn cut_level(r: f64, beta: f64, epsilon: f64) -> f64 {
    let bound = |c: f64| 4.0 * beta / r * (c + 1.0 / r) * (-r * c).exp();
    let mut hi = 1.0 / r;
    while bound(hi) > epsilon {
        hi *= 1.25;
    }
    let mut lo = hi / 1.25;
    if bound(lo) <= epsilon {
        return lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

struct Work {
    nodes: u64,
    budget: u64,
}

impl Work {
    #[inline]
    fn tick(&mut self, n: u64) -> std::result::Result<(), Overflow> {
        self.nodes += n;
        if self.nodes > self.budget {
            Err(Overflow)
        } else {
            Ok(())
        }
    }
}

/// Poisson draw that handles tiny means without building a distribution.
pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        let limit = (-mean).exp();
        let mut k = 0;
        let mut prod: f64 = rng.random();
        while prod > limit {
            k += 1;
            prod *= rng.random::<f64>();
        }
        k
    } else {
        Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
    }
}

/// Positions at sorted times `times` of a Brownian bridge from `(0, a)` to
/// `(dt, b)` kept on the positive half-line, written to `out`.
pub(crate) fn bridge_points<R: Rng + ?Sized>(
    rng: &mut R,
    a: f64,
    b: f64,
    dt: f64,
    times: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    let (mut t0, mut y0) = (0.0, a);
    for &t in times {
        let rem = dt - t0;
        let frac = (t - t0) / rem;
        let mean = y0 + frac * (b - y0);
        let sd = ((t - t0) * (dt - t) / rem).max(0.0).sqrt();
        let mut y = mean + sd * rng.sample::<f64, _>(StandardNormal);
        let mut tries = 0;
        while y <= 0.0 && tries < 16 {
            y = mean + sd * rng.sample::<f64, _>(StandardNormal);
            tries += 1;
        }
        let y = y.abs().max(f64::MIN_POSITIVE);
        out.push(y);
        t0 = t;
        y0 = y;
    }
}

impl Sampler {
    pub fn new(params: &ModelParams, epsilon: f64) -> Result<Self> {
        let c = params.regime_c()?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1) (got {epsilon})"
            )));
        }
        Ok(Self {
            r: c.r,
            nu: params.spine_drift(),
            beta: params.beta,
            epsilon,
            z_cut: cut_level(c.r, params.beta, epsilon),
            dt_floor: 1e-6 / (c.r * c.r),
            step_fraction: 0.1,
            node_budget: DEFAULT_NODE_BUDGET,
        })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.node_budget = budget;
        self
    }

    /// One draw of `K(inf)` under `P^z`.
    pub fn sample_k<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> std::result::Result<u64, Overflow> {
        let mut work = Work {
            nodes: 0,
            budget: self.node_budget,
        };
        self.sample_k_inner(z, rng, &mut work)
    }

    /// One draw of `K(inf)` under `Q^z`.
    pub fn sample_k_q<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> std::result::Result<u64, Overflow> {
        let mut work = Work {
            nodes: 0,
            budget: self.node_budget,
        };
        self.spine(z, f64::INFINITY, rng, &mut work)
            .map(|k| k.expect("uncapped spine always completes"))
    }

    /// Draw under `P^z` of a system whose first particle has already passed
    /// the `e^{-rz}` thinning; shared with the infinite spine.
    pub(crate) fn sample_thinned<R: Rng + ?Sized>(
        &self,
        z: f64,
        rng: &mut R,
        nodes: &mut u64,
    ) -> std::result::Result<u64, Overflow> {
        let mut work = Work {
            nodes: *nodes,
            budget: self.node_budget,
        };
        let out = self.thinned(z, rng, &mut work);
        *nodes = work.nodes;
        out
    }

    fn sample_k_inner<R: Rng + ?Sized>(
        &self,
        z: f64,
        rng: &mut R,
        work: &mut Work,
    ) -> std::result::Result<u64, Overflow> {
        if z <= 0.0 {
            return Ok(1);
        }
        if rng.random::<f64>() >= (-self.r * z).exp() {
            return Ok(0);
        }
        self.thinned(z, rng, work)
    }

    fn thinned<R: Rng + ?Sized>(
        &self,
        z: f64,
        rng: &mut R,
        work: &mut Work,
    ) -> std::result::Result<u64, Overflow> {
        // U in (0, 1]; accept K iff K <= 1/U.
        let u = 1.0 - rng.random::<f64>();
        let cap = 1.0 / u;
        Ok(match self.spine(z, cap, rng, work)? {
            Some(k) if (k as f64) <= cap => k,
            _ => 0,
        })
    }

    /// `Q`-spine from `z`; `None` once the running count exceeds `cap`.
    fn spine<R: Rng + ?Sized>(
        &self,
        z: f64,
        cap: f64,
        rng: &mut R,
        work: &mut Work,
    ) -> std::result::Result<Option<u64>, Overflow> {
        let mut y = z.min(self.z_cut);
        let mut k: u64 = 1;
        let mut times = Vec::new();
        let mut points = Vec::new();
        loop {
            work.tick(1)?;
            let dt = (self.step_fraction * y * y).max(self.dt_floor);
            let sd = dt.sqrt();
            let b = y - self.nu * dt + sd * rng.sample::<f64, _>(StandardNormal);
            let hit = b <= 0.0 || rng.random::<f64>() < (-2.0 * y * b / dt).exp();
            if hit {
                // Launches in the final step are dropped; the step is at most
                // `dt_floor`-sized near the origin.
                return Ok(Some(k));
            }
            let n = poisson(rng, 2.0 * self.beta * dt);
            if n > 0 {
                work.tick(n)?;
                times.clear();
                times.extend((0..n).map(|_| rng.random::<f64>() * dt));
                times.sort_by(f64::total_cmp);
                bridge_points(rng, y, b, dt, &times, &mut points);
                for &pos in &points {
                    if rng.random::<f64>() < (-self.r * pos).exp() {
                        k += self.thinned(pos, rng, work)?;
                        if k as f64 > cap {
                            return Ok(None);
                        }
                    }
                }
            }
            y = b.min(self.z_cut);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cut_level_meets_bound() {
        let r = 2f64.sqrt();
        let c = cut_level(r, 1.0, 1e-6);
        let bound = |c: f64| 4.0 / r * (c + 1.0 / r) * (-r * c).exp();
        assert!(bound(c) <= 1e-6 && bound(c * 0.99) > 1e-6, "{c}");
    }

    #[test]
    fn q_draws_are_at_least_one() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let s = Sampler::new(&p, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert!(s.sample_k_q(0.5, &mut rng).unwrap() >= 1);
        }
    }

    #[test]
    fn origin_is_absorbed() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let s = Sampler::new(&p, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(s.sample_k(0.0, &mut rng).unwrap(), 1);
    }
}
