use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shapemap::fem::assemble::{assemble_bilinear, ElasticityParams, FormKind, PiecewiseConstant};
use shapemap::mesh::generate::generate_disk_in_square;
use shapemap::models::transmission::{transmission_residual, transmission_tangent, TransmissionParams};
use shapemap::par::Exec;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut m = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        m.push(("parallel", Exec::Parallel));
    }
    m
}

fn assembly(c: &mut Criterion) {
    let mesh = Arc::new(generate_disk_in_square(0.2, 140).unwrap());
    let params = TransmissionParams::default();
    let u: Vec<f64> = mesh.coords().iter().map(|p| p[0] * p[1]).collect();
    let coeff = PiecewiseConstant::uniform(1.0);
    let mut group = c.benchmark_group(format!("assembly/{}-nodes", mesh.n_nodes()));
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::new("elasticity", name), &exec, |b, &exec| {
            b.iter(|| assemble_bilinear(black_box(&mesh), FormKind::Elasticity(ElasticityParams::default()), &coeff, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("semilinear-tangent", name), &exec, |b, &exec| {
            b.iter(|| transmission_tangent(black_box(&mesh), &params, &u, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("semilinear-residual", name), &exec, |b, &exec| {
            b.iter(|| transmission_residual(black_box(&mesh), &params, &u, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly);
criterion_main!(benches);
