use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lidar_energy::energy::{energy_loss, point_energy, tau_for_inlier_tpr};
use lidar_energy::LabelSet;
use lidar_energy_bench::{logits, loss_config};

fn energy(c: &mut Criterion) {
    let mut g = c.benchmark_group("energy");
    for n in [10_000usize, 100_000] {
        let l = logits(n, 2);
        let labels =
            LabelSet::new((0..n).map(|i| if i % 50 == 0 { 3 } else { 1 }).collect(), 2).unwrap();
        let e = point_energy(&l);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("point_energy", n), &l, |b, l| {
            b.iter(|| point_energy(l))
        });
        g.bench_with_input(BenchmarkId::new("energy_loss", n), &e, |b, e| {
            b.iter(|| energy_loss(e, &labels, &loss_config()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("calibrate", n), &e.0, |b, e| {
            b.iter(|| tau_for_inlier_tpr(e, 0.95).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, energy);
criterion_main!(benches);
