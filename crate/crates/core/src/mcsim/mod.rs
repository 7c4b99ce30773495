//! Monte Carlo estimators for the absorbed-particle count `K`.
//!
//! Replicas are grouped in fixed-size chunks that run in parallel on the
//! ambient rayon pool. Replica `i` draws from ChaCha8 stream `i` of the master
//! seed, and chunk tallies are combined in chunk order, so results do not
//! depend on the thread count.

pub mod forward;
pub mod sampler;
pub mod spine;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use forward::{
    default_dt, simulate_k, simulate_k_with, Closure, KOutcome, McConfig, ParticleSystem,
    StopReason,
};
pub use sampler::{cut_level, Overflow, Sampler};
pub use spine::{
    forward_spine_inverse_mean, simulate_spine_q, simulate_spine_q_with, spine_inverse_mean,
    SpineOutcome,
};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::series::{tail_prediction, SeriesTable, WaveConstants, DEFAULT_N_MAX};

/// Replicas per parallel work unit.
pub const CHUNK: u64 = 4096;

/// Summands `s^K` above this are set aside and flag the estimate as unstable.
pub const UNSTABLE_SUMMAND: f64 = 1e12;

/// Fewer hits than this at the largest requested `n` widens the tail report.
pub const LOW_MASS_HITS: u64 = 100;

/// Generator for replica `index` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run `f` on every replica index in `0..n` and fold the chunk results in order.
pub(crate) fn map_chunks<T, F, G>(n: u64, per_chunk: F, mut fold: G) -> Result<()>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> Result<T> + Sync,
    G: FnMut(T),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| per_chunk(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    for p in parts {
        fold(p?);
    }
    Ok(())
}

/// Stop-reason counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopTally {
    pub epsilon_rule: u64,
    pub extinction: u64,
    pub horizon: u64,
    pub overflow: u64,
}

impl StopTally {
    pub fn add(&mut self, s: StopReason) {
        match s {
            StopReason::EpsilonRule => self.epsilon_rule += 1,
            StopReason::Extinction => self.extinction += 1,
            StopReason::Horizon => self.horizon += 1,
            StopReason::Overflow => self.overflow += 1,
        }
    }

    pub fn merge(&mut self, o: &StopTally) {
        self.epsilon_rule += o.epsilon_rule;
        self.extinction += o.extinction;
        self.horizon += o.horizon;
        self.overflow += o.overflow;
    }

    /// The most frequent non-overflow reason.
    pub fn dominant(&self) -> StopReason {
        [
            (self.epsilon_rule, StopReason::EpsilonRule),
            (self.extinction, StopReason::Extinction),
            (self.horizon, StopReason::Horizon),
        ]
        .into_iter()
        .max_by_key(|&(n, _)| n)
        .map(|(_, s)| s)
        .unwrap_or(StopReason::EpsilonRule)
    }
}

/// Exact counts of `K` over a batch of replicas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub stops: StopTally,
}

impl KHistogram {
    pub fn add(&mut self, o: KOutcome) {
        self.stops.add(o.stop);
        if o.stop != StopReason::Overflow {
            *self.counts.entry(o.k).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, o: &KHistogram) {
        for (&k, &c) in &o.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.stops.merge(&o.stops);
    }

    /// Replicas with a recorded `K` (overflows excluded).
    pub fn resolved(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total(&self) -> u64 {
        self.resolved() + self.stops.overflow
    }

    pub fn count(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Mean and standard error of `f(K)` over resolved replicas.
    pub fn moment(&self, f: impl Fn(u64) -> f64) -> (f64, f64) {
        let n = self.resolved() as f64;
        if n == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = self.counts.iter().map(|(&k, &c)| c as f64 * f(k)).sum::<f64>() / n;
        let var = if n > 1.0 {
            self.counts
                .iter()
                .map(|(&k, &c)| c as f64 * (f(k) - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    }
}

/// Draw `n_replicas` independent values of `K` from `x0`.
pub fn k_histogram(
    params: &ModelParams,
    x0: f64,
    cfg: &McConfig,
    n_replicas: u64,
    seed: u64,
) -> Result<KHistogram> {
    if n_replicas == 0 {
        return Err(Error::InvalidParameter("n_replicas must be positive".into()));
    }
    let sampler = match forward::closure_level(params, x0, cfg.closure) {
        Some(_) => Some(Sampler::new(params, cfg.epsilon)?.with_budget(cfg.node_budget)),
        None => None,
    };
    let mut hist = KHistogram::default();
    map_chunks(
        n_replicas,
        |range| {
            let mut h = KHistogram::default();
            for i in range {
                let mut rng = replica_rng(seed, i);
                h.add(simulate_k_with(params, x0, cfg, sampler.as_ref(), &mut rng)?);
            }
            Ok(h)
        },
        |h| hist.merge(&h),
    )?;
    Ok(hist)
}

/// Monte Carlo point estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub n_replicas: u64,
    pub value: f64,
    pub std_error: f64,
    pub seed: u64,
    /// Most frequent stopping rule.
    pub stopped_by: StopReason,
    pub stops: StopTally,
    pub epsilon: f64,
    /// Replicas whose summand exceeded [`UNSTABLE_SUMMAND`]; they are left out
    /// of `value`.
    pub unstable_replicas: u64,
}

impl McEstimate {
    pub fn unstable(&self) -> bool {
        self.unstable_replicas > 0
    }

    /// Replicas that entered the average.
    pub fn used_replicas(&self) -> u64 {
        self.n_replicas - self.stops.overflow - self.unstable_replicas
    }
}

/// Series table and wave constants for `params`.
pub fn series_constants(params: &ModelParams) -> Result<(SeriesTable, WaveConstants)> {
    let table = SeriesTable::build(params, DEFAULT_N_MAX)?;
    let consts = table.find_wave_constants()?;
    Ok((table, consts))
}

/// `E[s^K]` from a histogram. `s0` bounds the admissible `s`.
pub fn omega_from_histogram(
    hist: &KHistogram,
    s: f64,
    s0: f64,
    seed: u64,
    epsilon: f64,
) -> Result<McEstimate> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("s must be non-negative (got {s})")));
    }
    if s > s0 * (1.0 + 1e-12) {
        return Err(Error::NoFiniteMoment { s, s0 });
    }
    let mut stable = KHistogram {
        stops: hist.stops,
        ..KHistogram::default()
    };
    let mut unstable = 0;
    for (&k, &c) in &hist.counts {
        if s.powf(k as f64) > UNSTABLE_SUMMAND {
            unstable += c;
        } else {
            stable.counts.insert(k, c);
        }
    }
    let (value, std_error) = if s == 1.0 {
        (1.0, 0.0)
    } else {
        // 0^0 = 1 makes s = 0 the indicator of K = 0.
        stable.moment(|k| s.powf(k as f64))
    };
    Ok(McEstimate {
        n_replicas: hist.total(),
        value,
        std_error,
        seed,
        stopped_by: hist.stops.dominant(),
        stops: hist.stops,
        epsilon,
        unstable_replicas: unstable,
    })
}

/// Estimate `omega_s(x0) = E^{x0}[s^K]`.
pub fn estimate_omega(
    params: &ModelParams,
    x0: f64,
    s: f64,
    n_replicas: u64,
    epsilon: f64,
    seed: u64,
) -> Result<McEstimate> {
    let cfg = McConfig {
        epsilon,
        ..McConfig::default()
    };
    estimate_omega_with(params, x0, s, n_replicas, &cfg, seed)
}

/// [`estimate_omega`] with explicit simulation settings.
pub fn estimate_omega_with(
    params: &ModelParams,
    x0: f64,
    s: f64,
    n_replicas: u64,
    cfg: &McConfig,
    seed: u64,
) -> Result<McEstimate> {
    params.regime_c()?;
    let (_, consts) = series_constants(params)?;
    if s > consts.s0 * (1.0 + 1e-12) {
        return Err(Error::NoFiniteMoment { s, s0: consts.s0 });
    }
    let hist = k_histogram(params, x0, cfg, n_replicas, seed)?;
    omega_from_histogram(&hist, s, consts.s0, seed, cfg.epsilon)
}

/// One row of the empirical pmf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub n: u64,
    pub count: u64,
    pub phat: f64,
    pub stderr: f64,
    /// Asymptotic tail law; `NaN` at `n = 0`.
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub params: ModelParams,
    pub x0: f64,
    pub seed: u64,
    pub rows: Vec<TailRow>,
    pub histogram: KHistogram,
    /// Fewer than [`LOW_MASS_HITS`] hits at the largest requested `n`.
    pub low_mass: bool,
    pub s0: f64,
}

impl TailReport {
    pub fn row(&self, n: u64) -> Option<&TailRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// `P(n+1) / P(n)` and its delta-method standard error.
    pub fn ratio(&self, n: u64) -> Option<(f64, f64)> {
        let a = self.histogram.count(n) as f64;
        let b = self.histogram.count(n + 1) as f64;
        if a == 0.0 {
            return None;
        }
        let q = b / a;
        let se = if b > 0.0 { q * (1.0 / a + 1.0 / b).sqrt() } else { f64::NAN };
        Some((q, se))
    }
}

/// Build the tail report from an existing histogram.
pub fn tail_from_histogram(
    params: &ModelParams,
    x0: f64,
    hist: KHistogram,
    n_range: std::ops::RangeInclusive<u64>,
    seed: u64,
) -> Result<TailReport> {
    let (table, consts) = series_constants(params)?;
    let deriv = table.wave(&consts, consts.s0)?.deriv(x0);
    let total = hist.resolved() as f64;
    let mut rows = Vec::new();
    for n in n_range.clone() {
        let count = hist.count(n);
        let phat = count as f64 / total;
        rows.push(TailRow {
            n,
            count,
            phat,
            stderr: (phat * (1.0 - phat) / total).sqrt(),
            prediction: if n == 0 {
                f64::NAN
            } else {
                tail_prediction(&consts, deriv, n)?
            },
        });
    }
    let low_mass = hist.count(*n_range.end()) < LOW_MASS_HITS;
    Ok(TailReport {
        params: *params,
        x0,
        seed,
        rows,
        histogram: hist,
        low_mass,
        s0: consts.s0,
    })
}

/// Empirical pmf of `K` over `n_range` with the asymptotic law alongside.
pub fn estimate_tail(
    params: &ModelParams,
    x0: f64,
    n_replicas: u64,
    n_range: std::ops::RangeInclusive<u64>,
    seed: u64,
) -> Result<TailReport> {
    params.regime_c()?;
    let hist = k_histogram(params, x0, &McConfig::default(), n_replicas, seed)?;
    tail_from_histogram(params, x0, hist, n_range, seed)
}

/// Mean of the frozen martingale at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleRow {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub target: f64,
}

impl MartingaleRow {
    /// Deviation from the target in standard errors (0 when both vanish).
    pub fn z_score(&self) -> f64 {
        let d = (self.mean - self.target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub params: ModelParams,
    pub x0: f64,
    pub n_replicas: u64,
    pub seed: u64,
    pub rows: Vec<MartingaleRow>,
    pub stops: StopTally,
    /// Largest `|Z - K|` over replicas stopped by the epsilon rule.
    pub terminal_gap: f64,
    pub epsilon: f64,
}

#[derive(Default)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
    stops: StopTally,
    gap: f64,
}

/// Mean of `K(t) + sum_live e^{-r X(t)}` at each checkpoint. Uses plain time
/// stepping; a replica that stops early keeps its final value (optional
/// stopping preserves the mean).
pub fn martingale_check(
    params: &ModelParams,
    x0: f64,
    t_checkpoints: &[f64],
    n_replicas: u64,
    seed: u64,
) -> Result<MartingaleReport> {
    let cfg = McConfig {
        closure: Closure::None,
        ..McConfig::default()
    };
    martingale_check_with(params, x0, t_checkpoints, n_replicas, &cfg, seed)
}

pub fn martingale_check_with(
    params: &ModelParams,
    x0: f64,
    t_checkpoints: &[f64],
    n_replicas: u64,
    cfg: &McConfig,
    seed: u64,
) -> Result<MartingaleReport> {
    let r = params.regime_c()?.r;
    if n_replicas == 0 {
        return Err(Error::InvalidParameter("n_replicas must be positive".into()));
    }
    if t_checkpoints.iter().any(|t| !(*t >= 0.0)) || t_checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "checkpoints must be non-negative and sorted".into(),
        ));
    }
    let m = t_checkpoints.len();
    let dt = cfg.dt.unwrap_or_else(|| default_dt(params));
    let horizon = t_checkpoints.last().copied().unwrap_or(0.0);
    let target = (-r * x0).exp();
    let mut total = Moments {
        sum: vec![0.0; m],
        sq: vec![0.0; m],
        ..Moments::default()
    };
    map_chunks(
        n_replicas,
        |range| {
            let mut acc = Moments {
                sum: vec![0.0; m],
                sq: vec![0.0; m],
                ..Moments::default()
            };
            for i in range {
                let mut rng = replica_rng(seed, i);
                let mut sys = ParticleSystem::new(params, x0, dt, seed)?;
                let mut stop = None;
                for (j, &tc) in t_checkpoints.iter().enumerate() {
                    // Steps end on multiples of dt; treat t within 1e-9 dt as reached.
                    while stop.is_none() && sys.t < tc - 1e-9 * dt {
                        if sys.step(&mut rng, None).is_err()
                            || sys.live.len() > cfg.population_cap
                            || sys.absorbed > cfg.k_cap
                        {
                            stop = Some(StopReason::Overflow);
                        } else if sys.z_live < cfg.epsilon {
                            stop = Some(StopReason::EpsilonRule);
                        }
                    }
                    // Centred on the target so that exact agreement has zero variance.
                    let d = sys.z_frozen() - target;
                    acc.sum[j] += d;
                    acc.sq[j] += d * d;
                }
                let stop = stop.unwrap_or(if sys.t >= horizon {
                    StopReason::Horizon
                } else {
                    StopReason::EpsilonRule
                });
                if stop == StopReason::EpsilonRule {
                    acc.gap = acc.gap.max((sys.z_frozen() - sys.absorbed as f64).abs());
                }
                acc.stops.add(stop);
            }
            Ok(acc)
        },
        |acc| {
            for j in 0..m {
                total.sum[j] += acc.sum[j];
                total.sq[j] += acc.sq[j];
            }
            total.stops.merge(&acc.stops);
            total.gap = total.gap.max(acc.gap);
        },
    )?;
    let n = n_replicas as f64;
    let rows = t_checkpoints
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let d = total.sum[j] / n;
            let var = ((total.sq[j] - n * d * d) / (n - 1.0).max(1.0)).max(0.0);
            MartingaleRow {
                t,
                mean: target + d,
                std_error: (var / n).sqrt(),
                target,
            }
        })
        .collect();
    Ok(MartingaleReport {
        params: *params,
        x0,
        n_replicas,
        seed,
        rows,
        stops: total.stops,
        terminal_gap: total.gap,
        epsilon: cfg.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn critical() -> ModelParams {
        ModelParams::classify(2f64.sqrt(), 1.0).unwrap()
    }

    #[test]
    fn s_one_is_exact() {
        let e = estimate_omega(&critical(), 1.0, 1.0, 1000, 1e-6, 1).unwrap();
        assert_eq!((e.value, e.std_error), (1.0, 0.0));
    }

    #[test]
    fn refuses_beyond_s0() {
        let err = estimate_omega(&critical(), 1.0, 1.5, 10, 1e-6, 1).unwrap_err();
        assert!(matches!(err, Error::NoFiniteMoment { .. }));
    }

    #[test]
    fn regime_b_is_refused() {
        let p = ModelParams::classify(0.0, 1.0).unwrap();
        assert!(estimate_omega(&p, 1.0, 0.0, 10, 1e-6, 1).is_err());
    }

    #[test]
    fn histogram_is_thread_independent() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let cfg = McConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| k_histogram(&p, 1.0, &cfg, 10_000, 42).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn pmf_normalised_and_p0_matches_omega() {
        let p = critical();
        let tail = estimate_tail(&p, 1.0, 20_000, 0..=400, 9).unwrap();
        let sum: f64 = tail.histogram.counts.keys().map(|&k| tail.histogram.count(k) as f64).sum::<f64>()
            / tail.histogram.resolved() as f64;
        assert_eq!(sum, 1.0);
        let om = estimate_omega(&p, 1.0, 0.0, 20_000, 1e-6, 9).unwrap();
        assert_eq!(tail.row(0).unwrap().phat, om.value);
    }

    #[test]
    fn martingale_at_zero_is_exact() {
        let p = ModelParams::classify(2.0, 1.0).unwrap();
        let rep = martingale_check(&p, 1.0, &[0.0, 0.5], 200, 3).unwrap();
        assert_eq!(rep.rows[0].mean, rep.rows[0].target);
        assert_eq!(rep.rows[0].std_error, 0.0);
        assert!(rep.terminal_gap < 1e-6);
    }
}
