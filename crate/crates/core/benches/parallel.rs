//! Sequential vs rayon execution for the per-ray hot loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rayforge::inversion::{sinogram_vector, LinearForwardMap};
use rayforge::scene::SceneSpec;
use rayforge::selftest::random_potential;
use rayforge::transform::{xray_transform, BoundaryFan, VolumeField};
use rayforge::Exec;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sinogram_assembly(c: &mut Criterion) {
    let spec = SceneSpec::builtin("euclid-disk-b03").unwrap();
    let fan = BoundaryFan::new(32, 16, 0.05).unwrap();
    let opts = rayforge::flow::FlowOptions::with_step(1e-2);
    let mut group = c.benchmark_group("xray_32x16");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| xray_transform(&spec.system, &spec.connection, &spec.potential, &fan, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn forward_adjoint(c: &mut Criterion) {
    let spec = SceneSpec::builtin("euclid-disk-b03").unwrap();
    let template = VolumeField::zeros(&spec.system.domain, 2, spec.solver.cells);
    let map = LinearForwardMap::build(&spec.system, &spec.connection, &template, &spec.fan, &spec.flow_options(), spec.hash, Exec::default()).unwrap();
    let q = random_potential(&mut ChaCha8Rng::seed_from_u64(1), 2, 4).to_volume(&spec.system.domain, template.grid.clone());
    let x = q.to_vector();
    let y = sinogram_vector(&map.forward_apply(&q, Exec::Sequential).unwrap());
    let mut group = c.benchmark_group("forward_adjoint_96x48");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new("forward", name), |b| b.iter(|| map.forward_vec(&x, exec)));
        group.bench_function(BenchmarkId::new("adjoint", name), |b| b.iter(|| map.adjoint_vec(&y, exec)));
    }
    group.finish();
}

criterion_group!(benches, sinogram_assembly, forward_adjoint);
criterion_main!(benches);
