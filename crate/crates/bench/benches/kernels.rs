use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use curveflow_bench::{circle, helix, perturbed};
use curveflow_core::associated::{hamiltonians_from_contour, integrate_frame, monodromy_angle};
use curveflow_core::darboux::{darboux_transform, Sheet};
use curveflow_core::flow::{integrate_step, FlowField, Integrator};
use curveflow_core::functionals::energy_report;
use curveflow_core::hierarchy::{hierarchy, AxisVector};
use curveflow_core::loops::{lax_evolve, LoopElement};
use curveflow_core::resample_arclength;
use curveflow_core::su2::C;

fn curve_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("curve");
    for n in [128, 512] {
        let p = perturbed(n);
        g.bench_with_input(BenchmarkId::new("hierarchy_k6", n), &p, |b, p| b.iter(|| hierarchy(black_box(p), 6)));
        g.bench_with_input(BenchmarkId::new("resample", n), &p, |b, p| {
            b.iter(|| resample_arclength(black_box(p.samples()), p.monodromy(), p.n()).unwrap())
        });
    }
    let h = helix(512);
    let ks: Vec<i32> = vec![-2, -1, 1, 2, 3, 4, 5, 6];
    let z = AxisVector::e_z();
    g.bench_function("energy_report_512", |b| b.iter(|| energy_report(black_box(&h), &ks, Some(&z)).unwrap()));
    g.finish();
}

fn flow_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("flow");
    let p = perturbed(256);
    for k in [1, 2, 3] {
        let f = FlowField::single(k).unwrap();
        g.bench_function(BenchmarkId::new("rk4_step", k), |b| {
            b.iter(|| integrate_step(black_box(&p), &f, 1e-5, Integrator::Rk4, 0).unwrap())
        });
    }
    let xi = LoopElement::random(3, 0);
    let w = BTreeMap::from([(0, 1.0), (1, 0.5)]);
    g.bench_function("lax_1000_steps", |b| b.iter(|| lax_evolve(black_box(&xi), &w, 1e-3, 1000, Integrator::Rk4).unwrap()));
    g.finish();
}

fn spectral_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral");
    g.sample_size(10);
    let h = helix(512);
    g.bench_function("frame_real", |b| b.iter(|| integrate_frame(black_box(&h), C::from(5.0))));
    g.bench_function("frame_complex", |b| b.iter(|| integrate_frame(black_box(&h), C::new(1.0, 1.0))));
    g.bench_function("monodromy_angle", |b| b.iter(|| monodromy_angle(black_box(&h), 5.0).unwrap()));
    g.bench_function("darboux", |b| b.iter(|| darboux_transform(black_box(&h), C::new(0.5, 2.0), Sheet::Minus).unwrap()));
    let ci = circle(256);
    g.bench_function("contour_fit_256", |b| b.iter(|| hamiltonians_from_contour(black_box(&ci), 16.0, 64, 6).unwrap()));
    g.finish();
}

criterion_group!(benches, curve_kernels, flow_kernels, spectral_kernels);
criterion_main!(benches);
