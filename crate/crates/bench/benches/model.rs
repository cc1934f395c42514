use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use lidar_energy::model::{forward, loss_and_grad, FeatureNormalizer};
use lidar_energy_bench::{loss_config, model, scene_features, spray_scene};

fn model_passes(c: &mut Criterion) {
    let scene = spray_scene(1, 0.8);
    let raw = scene_features(&scene);
    let features = FeatureNormalizer::fit([&raw]).unwrap().apply(&raw);
    let params = model(&[32, 32]);
    let mut g = c.benchmark_group("model");
    g.sample_size(20);
    g.throughput(Throughput::Elements(scene.labels.len() as u64));
    g.bench_function("forward", |b| {
        b.iter(|| forward(&features, &params).unwrap())
    });
    g.bench_function("loss_and_grad", |b| {
        b.iter(|| loss_and_grad(&features, &params, &scene.labels, &loss_config()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, model_passes);
criterion_main!(benches);
