use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eroopt::exec::Execution;
use eroopt::flow::fluid_system;
use eroopt::gradient::{elasticity_matrix, LameField};
use eroopt::kernels::{FluidCoeffs, Part};
use eroopt::mesh::generate::{self, BendSpec};
use eroopt::params::PhysicalParams;

fn assembly(c: &mut Criterion) {
    let mesh = generate::bend(BendSpec::reference(14)).unwrap();
    let coeffs = FluidCoeffs::new(&PhysicalParams::default());
    let x: Vec<f64> = (0..3 * mesh.n_vertices()).map(|i| (i as f64 * 0.37).sin()).collect();
    let lame = LameField { mu_star: vec![1.0; mesh.n_vertices()], mu: vec![1.0; mesh.n_vertices()] };

    let mut g = c.benchmark_group("assembly");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_with_input(BenchmarkId::new("fluid_jacobian", name), &exec, |b, &e| b.iter(|| fluid_system(&mesh, &coeffs, black_box(&x), e, Part::Full)));
        g.bench_with_input(BenchmarkId::new("elasticity", name), &exec, |b, &e| b.iter(|| elasticity_matrix(&mesh, black_box(&lame), e)));
    }
    g.finish();
}

criterion_group!(benches, assembly);
criterion_main!(benches);
