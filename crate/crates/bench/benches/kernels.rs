use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use vnoma::mcsim::{estimate_outage, TrialPlan};
use vnoma::optim::{joint_optimize, optimal_power, optimal_rate};
use vnoma::outage::{outage_report, phi_table, theta_table};
use vnoma::preset;
use vnoma::specfun::{f_tilde_series, EigenSpectrum, FTildeParams};

fn series(c: &mut Criterion) {
    let mut g = c.benchmark_group("f_tilde_series");
    let lam = vec![2.2, 1.1, 0.6, 0.4];
    for m in 1..=3 {
        let p = FTildeParams::new(m, EigenSpectrum::new(lam.clone()).unwrap()).unwrap();
        for x in [0.01, 1.0, 5.0] {
            g.bench_with_input(BenchmarkId::new(format!("M={m}"), x), &x, |b, &x| {
                b.iter(|| f_tilde_series(black_box(x), &p))
            });
        }
    }
    g.finish();
}

fn report(c: &mut Criterion) {
    let dep = preset::reference_deployment();
    let r = preset::reference_rates(&dep);
    let z = preset::reference_power(&r).unwrap();
    c.bench_function("outage_report/reference", |b| b.iter(|| outage_report(black_box(&dep), &z, &r)));
}

fn solvers(c: &mut Criterion) {
    let dep = preset::reference_deployment();
    let phi = phi_table(&dep).unwrap();
    let r = preset::reference_rates(&dep);
    let z = preset::reference_power(&r).unwrap();
    c.bench_function("optimal_power/reference", |b| b.iter(|| optimal_power(black_box(&r), &phi)));
    c.bench_function("optimal_rate/reference", |b| b.iter(|| optimal_rate(black_box(&z), &phi)));
    let two = preset::two_cluster_deployment(70.0);
    let init = vnoma::outage::RatePlan::broadcast(1.0, 1, 2).unwrap();
    c.bench_function("joint_optimize/two_cluster_70dB", |b| {
        b.iter(|| joint_optimize(black_box(&init), 1e-5, 100, &two))
    });
}

fn monte_carlo(c: &mut Criterion) {
    let dep = preset::reference_deployment();
    let r = preset::reference_rates(&dep);
    let z = preset::reference_power(&r).unwrap();
    let t = theta_table(&z, &r).unwrap();
    let plan = TrialPlan::new(100_000, 1).unwrap();
    let mut g = c.benchmark_group("mc");
    g.sample_size(10);
    g.bench_function("estimate_outage/1e5", |b| b.iter(|| estimate_outage(0, 0, black_box(&plan), &dep, &t)));
    g.finish();
}

criterion_group!(benches, series, report, solvers, monte_carlo);
criterion_main!(benches);
