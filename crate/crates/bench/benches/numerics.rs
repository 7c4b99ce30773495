use std::hint::black_box;

use bbm_core::mcsim::{self, McConfig};
use bbm_core::series::{SeriesTable, DEFAULT_N_MAX};
use bbm_core::waves::{solve_hstar, solve_omega};
use bbm_core::{ModelParams, PdeState};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn series(c: &mut Criterion) {
    let mut g = c.benchmark_group("series");
    for mu in [2f64.sqrt(), 3.0] {
        let p = ModelParams::classify(mu, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::new("build_and_constants", format!("{mu:.3}")), &p, |b, p| {
            b.iter(|| {
                let t = SeriesTable::build(p, DEFAULT_N_MAX).unwrap();
                black_box(t.find_wave_constants().unwrap())
            })
        });
    }
    let p = ModelParams::classify(2.0, 1.0).unwrap();
    let t = SeriesTable::build(&p, DEFAULT_N_MAX).unwrap();
    let consts = t.find_wave_constants().unwrap();
    let w = t.wave(&consts, 0.5).unwrap();
    g.bench_function("omega_eval", |b| b.iter(|| black_box(w.value(black_box(0.7)))));
    g.finish();
}

fn shooting(c: &mut Criterion) {
    let mut g = c.benchmark_group("shooting");
    g.sample_size(10);
    let p = ModelParams::classify(2.0, 1.0).unwrap();
    g.bench_function("solve_omega_s0.5", |b| b.iter(|| black_box(solve_omega(&p, 0.5, 1e-13).unwrap())));
    g.bench_function("solve_hstar", |b| b.iter(|| black_box(solve_hstar(1.0, 1e-10).unwrap())));
    g.finish();
}

fn kpp(c: &mut Criterion) {
    let p = ModelParams::classify(2.0, 1.0).unwrap();
    c.bench_function("pde/1000_steps_750_cells", |b| {
        b.iter(|| {
            let mut st = PdeState::new(&p, 0.0, 0.02, 0.02, 15.0).unwrap();
            st.advance_to(20.0).unwrap();
            black_box(st.t)
        })
    });
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("mc");
    g.sample_size(10);
    let p = ModelParams::classify(2.0, 1.0).unwrap();
    let cfg = McConfig::default();
    g.bench_function("k_histogram_4096", |b| {
        b.iter(|| black_box(mcsim::k_histogram(&p, 1.0, &cfg, 4096, 1).unwrap()))
    });
    let crit = ModelParams::classify(2f64.sqrt(), 1.0).unwrap();
    g.bench_function("spine_1024", |b| {
        b.iter(|| black_box(mcsim::spine_inverse_mean(&crit, f64::INFINITY, 1024, 1e-6, 1).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, series, shooting, kpp, monte_carlo);
criterion_main!(benches);
