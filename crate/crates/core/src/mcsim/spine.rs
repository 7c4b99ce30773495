//! The reversed spine under `Q`: a diffusion on `(0, inf)` with generator
//! `f''/2 + nu coth(nu y) f'` (`f''/2 + f'/y` when `nu = 0`), started at the
//! origin, with branch points at rate `2 beta`.
//!
//! The diffusion is the norm of a three-dimensional Brownian motion with drift
//! `nu` started at the origin, which is simulated exactly; branch positions
//! come from the three-dimensional Brownian bridge between step endpoints.
//! Above the cut level launches carry weight below `epsilon`; once the spine
//! ends a step above it, it is returned to the cut level with the exact
//! probability of ever coming back, and stopped otherwise. On return the
//! direction is redrawn from its conditional (von Mises–Fisher) law.

use rand::Rng;
use rand_distr::StandardNormal;

use super::sampler::{poisson, Sampler};
use super::{map_chunks, replica_rng, McEstimate, StopReason, StopTally};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Spine time budget, in units of `1/r^2`.
const HORIZON_SCALE: f64 = 1e7;
/// Smallest step length scale near `x_stop`, relative to `x_stop`.
const STOP_RESOLUTION: f64 = 1e-2;

/// One draw of `K` under the size-biased measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpineOutcome {
    /// `1 + sum` of the launched systems' counts.
    pub k_q: u64,
    /// Branch points retained.
    pub launches: u64,
    pub steps: u64,
    /// Some launched system exceeded the work budget; `k_q` is a lower bound.
    pub overflow: bool,
}

type V3 = [f64; 3];

fn norm(v: V3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn gauss3<R: Rng + ?Sized>(rng: &mut R) -> V3 {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

/// Direction with density proportional to `exp(kappa * e3 . u)` on the sphere.
fn von_mises_fisher<R: Rng + ?Sized>(rng: &mut R, kappa: f64) -> V3 {
    let u: f64 = rng.random();
    let w = if kappa < 1e-8 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let rho = (1.0 - w * w).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), w]
}

/// Probability that the radial process started at `y` ever reaches `c < y`.
fn return_probability(nu: f64, c: f64, y: f64) -> f64 {
    if nu * y < 1e-8 {
        c / y
    } else {
        // (e^{2 nu c} - 1) / (e^{2 nu y} - 1), written to avoid overflow.
        (2.0 * nu * (c - y)).exp() * (-(-2.0 * nu * c).exp_m1()) / (-(-2.0 * nu * y).exp_m1())
    }
}

/// Simulate one spine and return `K_Q`.
///
/// With `x_stop` infinite this is the limit as the start point goes to
/// infinity. With `x_stop` finite only branch points before the spine's last
/// visit to `x_stop` are kept. The last visit is located on a step grid that
/// is refined near `x_stop`, so the finite-`x_stop` estimator carries a small
/// discretisation bias.
pub fn simulate_spine_q_with<R: Rng + ?Sized>(
    params: &ModelParams,
    x_stop: f64,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<SpineOutcome> {
    if !(x_stop > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "x_stop must be positive (got {x_stop})"
        )));
    }
    let r = sampler.r;
    let nu = params.spine_drift();
    let finite = x_stop.is_finite();
    let level = if finite {
        sampler.z_cut.max(2.0 * x_stop)
    } else {
        sampler.z_cut
    };
    let horizon = HORIZON_SCALE / (r * r);

    let mut x: V3 = [0.0; 3];
    let mut y = 0.0;
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut nodes = 0u64;
    let mut overflow = false;
    // (time, count) of non-empty launches; kept only for the finite case.
    let mut pending: Vec<(f64, u64)> = Vec::new();
    let mut last_visit = 0.0;
    let mut k_total: u64 = 1;
    let mut launches = 0u64;
    let mut times = Vec::new();

    loop {
        if t > horizon {
            return Err(Error::SpineHorizon { level });
        }
        steps += 1;
        let scale = y + 1.0 / r;
        let mut dt = 0.1 * scale * scale;
        if finite {
            // Resolve visits to x_stop: steps shrink with the distance to it.
            let gap = (y - x_stop).abs().max(STOP_RESOLUTION * x_stop);
            dt = dt.min(0.1 * gap * gap);
        }
        let sd = dt.sqrt();
        let g = gauss3(rng);
        let x_new = [x[0] + sd * g[0], x[1] + sd * g[1], x[2] + nu * dt + sd * g[2]];
        let y_new = norm(x_new);

        let n = poisson(rng, 2.0 * params.beta * dt);
        if n > 0 {
            times.clear();
            times.extend((0..n).map(|_| rng.random::<f64>() * dt));
            times.sort_by(f64::total_cmp);
            // Sequential 3D bridge from x to x_new.
            let (mut s0, mut p0) = (0.0, x);
            for &s in &times {
                let rem = dt - s0;
                let frac = (s - s0) / rem;
                let bsd = ((s - s0) * (dt - s) / rem).max(0.0).sqrt();
                let g = gauss3(rng);
                let mut p = [0.0; 3];
                for d in 0..3 {
                    p[d] = p0[d] + frac * (x_new[d] - p0[d]) + bsd * g[d];
                }
                let pos = norm(p).max(f64::MIN_POSITIVE);
                if rng.random::<f64>() < (-r * pos).exp() {
                    match sampler.sample_thinned(pos, rng, &mut nodes) {
                        Ok(k) if k > 0 => {
                            launches += 1;
                            if finite {
                                pending.push((t + s, k));
                            } else {
                                k_total += k;
                            }
                        }
                        Ok(_) => {}
                        Err(_) => overflow = true,
                    }
                }
                s0 = s;
                p0 = p;
            }
        }

        t += dt;
        x = x_new;
        y = y_new;
        if finite && y <= x_stop {
            last_visit = t;
        }
        if y > level {
            if rng.random::<f64>() < return_probability(nu, level, y) {
                let u = von_mises_fisher(rng, nu * level);
                x = [level * u[0], level * u[1], level * u[2]];
                y = level;
            } else {
                break;
            }
        }
    }

    if finite {
        let kept: Vec<_> = pending.iter().filter(|(s, _)| *s <= last_visit).collect();
        launches = kept.len() as u64;
        k_total += kept.iter().map(|(_, k)| k).sum::<u64>();
    }
    Ok(SpineOutcome {
        k_q: k_total,
        launches,
        steps,
        overflow,
    })
}

/// One spine replica with its own generator.
pub fn simulate_spine_q(
    params: &ModelParams,
    x_stop: f64,
    epsilon: f64,
    seed: u64,
) -> Result<SpineOutcome> {
    let sampler = Sampler::new(params, epsilon)?;
    simulate_spine_q_with(params, x_stop, &sampler, &mut replica_rng(seed, 0))
}

/// Mean of `1/K_Q` over `n_replicas` reversed spines.
pub fn spine_inverse_mean(
    params: &ModelParams,
    x_stop: f64,
    n_replicas: u64,
    epsilon: f64,
    seed: u64,
) -> Result<McEstimate> {
    let sampler = Sampler::new(params, epsilon)?;
    inverse_mean(n_replicas, seed, epsilon, |rng| {
        let o = simulate_spine_q_with(params, x_stop, &sampler, rng)?;
        Ok((!o.overflow).then_some(o.k_q))
    })
}

/// Mean of `1/K` under `Q^x` from forward spines started at `x`; equals
/// `(1 - omega(x)) e^{rx}`.
pub fn forward_spine_inverse_mean(
    params: &ModelParams,
    x: f64,
    n_replicas: u64,
    epsilon: f64,
    seed: u64,
) -> Result<McEstimate> {
    let sampler = Sampler::new(params, epsilon)?;
    inverse_mean(n_replicas, seed, epsilon, |rng| {
        Ok(sampler.sample_k_q(x, rng).ok())
    })
}

fn inverse_mean<F>(n_replicas: u64, seed: u64, epsilon: f64, draw: F) -> Result<McEstimate>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<Option<u64>> + Sync,
{
    if n_replicas == 0 {
        return Err(Error::InvalidParameter("n_replicas must be positive".into()));
    }
    let (mut sum, mut sq, mut stops) = (0.0, 0.0, StopTally::default());
    map_chunks(
        n_replicas,
        |range| {
            let (mut s, mut q, mut st) = (0.0, 0.0, StopTally::default());
            for i in range {
                match draw(&mut replica_rng(seed, i))? {
                    Some(k) => {
                        let v = 1.0 / k as f64;
                        s += v;
                        q += v * v;
                        st.add(StopReason::EpsilonRule);
                    }
                    None => st.add(StopReason::Overflow),
                }
            }
            Ok((s, q, st))
        },
        |(s, q, st)| {
            sum += s;
            sq += q;
            stops.merge(&st);
        },
    )?;
    let n = (n_replicas - stops.overflow) as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    Ok(McEstimate {
        n_replicas,
        value: mean,
        std_error: (var / n).sqrt(),
        seed,
        stopped_by: StopReason::EpsilonRule,
        stops,
        epsilon,
        unstable_replicas: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_probability_limits() {
        assert!((return_probability(0.0, 1.0, 4.0) - 0.25).abs() < 1e-15);
        let p = return_probability(1.0, 1.0, 2.0);
        let exact = (2f64.exp() - 1.0) / (4f64.exp() - 1.0);
        assert!((p - exact).abs() < 1e-14);
        assert!(return_probability(1.0, 10.0, 800.0) < 1e-300);
    }

    #[test]
    fn vmf_mean_cosine() {
        let mut rng = replica_rng(1, 0);
        let kappa = 2.0;
        let n = 200_000;
        let m: f64 = (0..n).map(|_| von_mises_fisher(&mut rng, kappa)[2]).sum::<f64>() / n as f64;
        let exact = 1.0 / kappa.tanh() - 1.0 / kappa;
        assert!((m - exact).abs() < 5e-3, "{m} vs {exact}");
    }

    #[test]
    fn spine_count_is_at_least_one() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        for seed in 0..50 {
            let o = simulate_spine_q(&p, f64::INFINITY, 1e-6, seed).unwrap();
            assert!(o.k_q >= 1);
        }
    }
}
