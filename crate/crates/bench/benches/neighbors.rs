use criterion::{criterion_group, criterion_main, Criterion};
use lidar_energy::cloud::NeighborIndex;
use lidar_energy_bench::{scene_features, spray_scene};

fn neighbors(c: &mut Criterion) {
    let scene = spray_scene(0, 0.4);
    let cloud = &scene.cloud;
    let mut g = c.benchmark_group("neighbors");
    g.sample_size(20);
    g.bench_function("build", |b| {
        b.iter(|| NeighborIndex::build(cloud, 0.5).unwrap())
    });
    let index = NeighborIndex::build(cloud, 0.5).unwrap();
    g.bench_function("radius_count_all", |b| {
        b.iter(|| {
            (0..cloud.len())
                .map(|i| index.radius_count(i, 0.5).unwrap())
                .sum::<usize>()
        })
    });
    g.bench_function("knn5_all", |b| {
        b.iter(|| {
            (0..cloud.len())
                .map(|i| index.knn_mean_distance(i, 5).unwrap())
                .sum::<f64>()
        })
    });
    g.bench_function("features", |b| b.iter(|| scene_features(&scene)));
    g.finish();
}

criterion_group!(benches, neighbors);
criterion_main!(benches);
