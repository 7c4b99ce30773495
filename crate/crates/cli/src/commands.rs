//! One function per subcommand. Each writes its data files, a summary and
//! the manifest into `<output_dir>/<subcommand>/`.

use bbm_core::mcsim::{self, McConfig};
use bbm_core::series::{p0_limit, s0_limit_curve, DEFAULT_N_MAX};
use bbm_core::waves::{solve_hstar, solve_omega};
use bbm_core::{pde, ModelParams, PdeState, SeriesTable};

use crate::config::{Knobs, RunConfig};
use crate::output::{num, RunOutput, Summary, Table};
use crate::CliError;

const DEFAULT_TOL: f64 = 1e-13;
const DEFAULT_SEED: u64 = 20240601;
const DEFAULT_REPLICAS: u64 = 100_000;
const DEFAULT_RATIOS: [f64; 6] = [1.5, 2.0, 3.0, 4.0, 6.0, 8.0];
/// Series and ODE must agree to this level in `crosscheck`.
const SERIES_ODE_TOL: f64 = 1e-6;
/// Monte Carlo must agree with both deterministic values to this many
/// standard errors.
const MC_SIGMAS: f64 = 4.0;

fn params(cfg: &RunConfig, k: &mut Knobs) -> Result<ModelParams, CliError> {
    let mu = cfg.mu()?;
    let beta = cfg.beta();
    k.mu = Some(mu);
    k.beta = Some(beta);
    Ok(ModelParams::classify(mu, beta)?)
}

fn model_summary(sum: &mut Summary, p: &ModelParams) {
    sum.add("mu", num(p.mu))
        .add("beta", num(p.beta))
        .add("regime", p.regime)
        .add("critical", p.critical);
    if let Ok(c) = p.regime_c() {
        sum.add("r", num(c.r)).add("R", num(c.r_small)).add("p", num(c.p));
    }
}

/// Coefficient table and the wave constants.
pub fn series(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let p = params(cfg, &mut k)?;
    let n_max = *k.n_max.get_or_insert(DEFAULT_N_MAX);
    let table = SeriesTable::build(&p, n_max)?;
    let mut out = RunOutput::create(cfg)?;

    let mut t = Table::new(&["n", "a_n", "b_n"]);
    for n in 1..=n_max {
        t.push(vec![n.to_string(), num(table.a_n(n)), num(table.b_n(n))]);
    }
    out.table("coefficients.dat", &t)?;

    let consts = table.find_wave_constants()?;
    let mut sum = Summary::default();
    model_summary(&mut sum, &p);
    sum.add("n_max", n_max)
        .add("s0", num(consts.s0))
        .add("B0", num(consts.b0))
        .add("B_s0", num(consts.b_s0))
        .add("radius_estimate", num(table.radius_estimate))
        .add("rescaled_radius_estimate", num(table.rescaled_radius))
        .add("majorant_holds", table.majorant_holds)
        .add("seed_max", num(table.seed_max))
        .add("m_p", num(consts.m_p))
        .add("phi_second_at_B_s0", num(consts.phi_second_at_b_s0));
    out.summary(&sum)?;
    out.finish("success", &k)
}

/// Standing wave by shooting (regime C) or the critical travelling wave.
pub fn waves(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let p = params(cfg, &mut k)?;
    let tol = *k.tol.get_or_insert(DEFAULT_TOL);
    let mut sum = Summary::default();
    model_summary(&mut sum, &p);

    let (name, sol) = if p.regime.is_c() {
        let s = *k.s.get_or_insert(0.0);
        ("omega.dat", solve_omega(&p, s, tol)?)
    } else {
        ("hstar.dat", solve_hstar(p.beta, tol.max(1e-10))?)
    };
    let mut out = RunOutput::create(cfg)?;
    let mut t = Table::new(&["x", "v", "v_prime"]);
    for i in 0..sol.len() {
        t.push(vec![num(sol.grid[i]), num(sol.values[i]), num(sol.derivs[i])]);
    }
    out.table(name, &t)?;

    sum.add("wave", if p.regime.is_c() { "omega_s" } else { "h_star" })
        .add("s", num(sol.s))
        .add("tol", num(tol))
        .add("slope0", num(sol.slope0))
        .add("decay_class", sol.decay_class)
        .add("grid_points", sol.len())
        .add("x_end", num(sol.x_end()))
        .add("residual_max", num(sol.residual_max));
    if p.regime.is_c() {
        sum.add("tail_log_slope", num(sol.tail_log_slope(0.1)));
        let table = SeriesTable::build(&p, DEFAULT_N_MAX)?;
        let consts = table.find_wave_constants()?;
        sum.add("s0", num(consts.s0));
        if sol.s <= consts.s0 {
            let wave = table.wave(&consts, sol.s)?;
            let gap = sol
                .grid
                .iter()
                .zip(&sol.values)
                .map(|(&x, &v)| (wave.value(x) - v).abs())
                .fold(0.0, f64::max);
            sum.add("series_gap", num(gap));
        }
    }
    out.summary(&sum)?;
    out.finish("success", &k)
}

/// Half-line KPP evolution: relaxation in regime C, the front otherwise.
pub fn pde(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let p = params(cfg, &mut k)?;
    let c = p.regime.is_c();
    let s = if c { *k.s.get_or_insert(0.0) } else { 0.0 };
    let dx = *k.dx.get_or_insert(0.02);
    // Above 1 the reaction grows like beta s (s - 1) next to the boundary.
    let dt = *k.dt.get_or_insert(if s > 1.0 { (0.1 / (p.beta * s * (s - 1.0))).min(0.02) } else { 0.02 });
    let horizon = *k.horizon.get_or_insert(if c { 40.0 } else { 400.0 });
    let mut snaps = k.snapshots.get_or_insert_with(|| vec![horizon]).clone();
    snaps.sort_by(f64::total_cmp);
    if snaps.iter().any(|t| !(*t > 0.0 && *t <= horizon)) {
        return Err(CliError::Config(format!("snapshot times must lie in (0, {horizon}]")));
    }
    let snapshot_name = |t: f64| format!("snapshot_t{t}.dat");
    let snapshot = |st: &PdeState| {
        let mut tab = Table::new(&["x", "u"]);
        for (i, w) in st.w.iter().enumerate() {
            tab.push(vec![num(st.x(i)), num(1.0 - w)]);
        }
        tab
    };
    let mut sum = Summary::default();
    model_summary(&mut sum, &p);
    sum.add("dx", num(dx)).add("dt", num(dt)).add("horizon", num(horizon));

    if c {
        let r = p.regime_c()?.r;
        let x_max = *k.x_max.get_or_insert(40.0 / r);
        let table = SeriesTable::build(&p, DEFAULT_N_MAX)?;
        let consts = table.find_wave_constants()?;
        let wave = (0.0..=consts.s0).contains(&s).then(|| table.wave(&consts, s)).transpose()?;
        let mut st = PdeState::new(&p, s, dx, dt, x_max)?;
        let mut out = RunOutput::create(cfg)?;
        let mut trace = Table::new(&["t", "sup_distance"]);
        let mut stops: Vec<f64> = (1..=horizon.floor() as usize).map(|i| i as f64).collect();
        stops.extend(&snaps);
        stops.push(horizon);
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut last = f64::NAN;
        for &t in &stops {
            st.advance_to(t)?;
            if let Some(w) = &wave {
                last = st
                    .w
                    .iter()
                    .enumerate()
                    .map(|(i, &wi)| (1.0 - wi - w.value(st.x(i))).abs())
                    .fold(0.0, f64::max);
                trace.push(vec![num(t), num(last)]);
            }
            if snaps.contains(&t) {
                out.table(&snapshot_name(t), &snapshot(&st))?;
            }
        }
        if wave.is_some() {
            out.table("relaxation.dat", &trace)?;
        }
        sum.add("s", num(s))
            .add("x_max", num(x_max))
            .add("s0", num(consts.s0))
            .add("final_sup_distance", num(last));
        out.summary(&sum)?;
        return out.finish("success", &k);
    }

    let hstar = solve_hstar(p.beta, 1e-10)?;
    let mut out = RunOutput::create(cfg)?;
    let mut pending = snaps.iter().copied().peekable();
    let mut tables = Vec::new();
    let tr = pde::run_front_observed(&p, horizon, dx, dt, &hstar, |st| {
        while let Some(&t) = pending.peek() {
            if st.t < t - 0.5 * dt {
                break;
            }
            tables.push((t, snapshot(st)));
            pending.next();
        }
    })?;
    for (t, tab) in &tables {
        out.table(&snapshot_name(*t), tab)?;
    }
    let mut front = Table::new(&["t", "m_half"]);
    for (t, m) in tr.times.iter().zip(&tr.half_positions) {
        front.push(vec![num(*t), num(*m)]);
    }
    out.table("front.dat", &front)?;
    sum.add("fitted_speed", num(tr.fitted_speed))
        .add("fitted_log_coeff", num(tr.fitted_log_coeff))
        .add("fitted_const", num(tr.fitted_const))
        .add("expected_speed", num(p.critical_drift() - p.mu))
        .add("expected_log_coeff", num(-1.5 / p.critical_drift()))
        .add("shape_distance", num(tr.shape_distance))
        .add("final_x_max", num(tr.final_state.x_max));
    out.summary(&sum)?;
    out.finish("success", &k)
}

fn mc_config(k: &mut Knobs) -> McConfig {
    let base = McConfig::default();
    McConfig {
        epsilon: *k.epsilon.get_or_insert(base.epsilon),
        dt: k.dt,
        horizon: *k.horizon.get_or_insert(base.horizon),
        ..base
    }
}

fn configure_threads(k: &mut Knobs) {
    if let Some(n) = k.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    k.threads = Some(rayon::current_num_threads());
}

/// Monte Carlo estimate of `omega_s(x0)` and the law of `K`.
pub fn mc(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let p = params(cfg, &mut k)?;
    let x0 = *k.x0.get_or_insert(1.0);
    let s = *k.s.get_or_insert(0.0);
    let n = *k.replicas.get_or_insert(DEFAULT_REPLICAS);
    let seed = *k.seed.get_or_insert(DEFAULT_SEED);
    let mc_cfg = mc_config(&mut k);
    configure_threads(&mut k);
    if n == 0 {
        return Err(CliError::Config("--replicas must be positive".into()));
    }

    let (table, consts) = mcsim::series_constants(&p)?;
    let hist = mcsim::k_histogram(&p, x0, &mc_cfg, n, seed)?;
    let est = mcsim::omega_from_histogram(&hist, s, consts.s0, seed, mc_cfg.epsilon)?;
    let exact = table.wave(&consts, s)?.value(x0);
    let mut out = RunOutput::create(cfg)?;
    if let Some(n_tail) = k.n_tail {
        let rep = mcsim::tail_from_histogram(&p, x0, hist.clone(), 0..=n_tail, seed)?;
        let mut t = Table::new(&["n", "count", "phat", "stderr", "prediction"]);
        for r in &rep.rows {
            t.push(vec![r.n.to_string(), r.count.to_string(), num(r.phat), num(r.stderr), num(r.prediction)]);
        }
        out.table("histogram.dat", &t)?;
    }

    let (mean_k, mean_k_se) = hist.moment(|k| k as f64);
    let mut sum = Summary::default();
    model_summary(&mut sum, &p);
    sum.add("x0", num(x0))
        .add("s", num(s))
        .add("s0", num(consts.s0))
        .add("replicas", n)
        .add("seed", seed)
        .add("epsilon", num(mc_cfg.epsilon))
        .add("dt", num(mc_cfg.dt.unwrap_or_else(|| mcsim::default_dt(&p))))
        .add("estimate", num(est.value))
        .add("std_error", num(est.std_error))
        .add("series_value", num(exact))
        .add("z_score", num((est.value - exact) / est.std_error))
        .add("mean_k", num(mean_k))
        .add("mean_k_std_error", num(mean_k_se))
        .add("mean_k_expected", num((-p.regime_c()?.r * x0).exp()))
        .add("stopped_by", est.stopped_by)
        .add("stops_epsilon_rule", est.stops.epsilon_rule)
        .add("stops_extinction", est.stops.extinction)
        .add("stops_horizon", est.stops.horizon)
        .add("stops_overflow", est.stops.overflow)
        .add("unstable_replicas", est.unstable_replicas)
        .add("unstable", est.unstable());
    out.summary(&sum)?;
    out.finish("success", &k)
}

/// `s0` and `p s0` along a range of drift ratios.
pub fn s0_curve(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let n_max = *k.n_max.get_or_insert(DEFAULT_N_MAX);
    let ratios = k.ratios.get_or_insert_with(|| DEFAULT_RATIOS.to_vec()).clone();
    let curve = s0_limit_curve(&ratios, n_max)?;
    let lim = p0_limit(n_max)?;
    let mut out = RunOutput::create(cfg)?;
    let mut t = Table::new(&["ratio", "p", "s0", "p_s0", "s0_over_ratio2"]);
    for c in &curve {
        t.push(vec![num(c.ratio), num(c.p), num(c.s0), num(c.p_s0), num(c.s0 / (c.ratio * c.ratio))]);
    }
    out.table("s0_curve.dat", &t)?;
    let mut sum = Summary::default();
    sum.add("n_max", n_max)
        .add("m0", num(lim.m0))
        .add("psi0_at_m0", num(lim.psi_at_m0))
        .add("p_s0_limit", num(lim.limit))
        .add("sign_note", "p*s0 is positive while psi0(m0) is negative; the limit column reports |psi0(m0)|");
    if let Some(last) = curve.last() {
        sum.add("c_fit_largest_ratio", num(last.s0 / (last.ratio * last.ratio)));
    }
    out.summary(&sum)?;
    out.finish("success", &k)
}

/// Three-way comparison of `omega_s(x0)`: series, ODE shooting, Monte Carlo.
pub fn crosscheck(cfg: &RunConfig) -> Result<(), CliError> {
    let mut k = cfg.knobs.clone();
    let p = params(cfg, &mut k)?;
    let x0 = *k.x0.get_or_insert(1.0);
    let s = *k.s.get_or_insert(0.0);
    let tol = *k.tol.get_or_insert(DEFAULT_TOL);
    let n = *k.replicas.get_or_insert(DEFAULT_REPLICAS);
    let seed = *k.seed.get_or_insert(DEFAULT_SEED);
    let mc_cfg = mc_config(&mut k);
    configure_threads(&mut k);

    let (table, consts) = mcsim::series_constants(&p)?;
    let series = table.wave(&consts, s)?.value(x0);
    let sol = solve_omega(&p, s, tol)?;
    let ode = if x0 <= sol.x_end() {
        sol.interpolate(x0)
    } else {
        // Continue on the linear tail beyond the trusted end of the shot.
        let r = p.regime_c()?.r;
        1.0 - (1.0 - sol.values[sol.len() - 1]) * (-r * (x0 - sol.x_end())).exp()
    };
    let est = mcsim::estimate_omega_with(&p, x0, s, n, &mc_cfg, seed)?;
    let mc_tol = MC_SIGMAS * est.std_error;

    let pairs = [
        ("series_ode", (series - ode).abs(), SERIES_ODE_TOL),
        ("series_mc", (series - est.value).abs(), mc_tol),
        ("ode_mc", (ode - est.value).abs(), mc_tol),
    ];
    let mut out = RunOutput::create(cfg)?;
    let mut t = Table::new(&["pair", "gap", "tolerance", "pass"]);
    for (name, gap, tol) in &pairs {
        t.push(vec![name.to_string(), num(*gap), num(*tol), (gap <= tol).to_string()]);
    }
    out.table("crosscheck.dat", &t)?;
    let failed: Vec<&str> = pairs.iter().filter(|p| p.1 > p.2).map(|p| p.0).collect();
    let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };

    let mut sum = Summary::default();
    model_summary(&mut sum, &p);
    sum.add("x0", num(x0))
        .add("s", num(s))
        .add("series", num(series))
        .add("ode", num(ode))
        .add("mc", num(est.value))
        .add("mc_std_error", num(est.std_error))
        .add("replicas", n)
        .add("seed", seed);
    for (name, gap, _) in &pairs {
        sum.add(&format!("gap_{name}"), num(*gap));
    }
    sum.add("verdict", verdict);
    out.summary(&sum)?;
    if failed.is_empty() {
        out.finish("success", &k)
    } else {
        out.finish("tolerance_failure", &k)?;
        Err(CliError::Crosscheck(format!("pairwise tolerance failed: {}", failed.join(", "))))
    }
}
