//! Analytic gradients of the total loss against central finite differences.

use lidar_energy::energy::{point_energy_with, EnergyLossConfig};
use lidar_energy::model::{
    forward, loss, loss_and_grad, Layout, ModelParams, PointFeatures, FEATURE_WIDTH,
};
use lidar_energy::LabelSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const STEP: f64 = 1e-5;

struct Case {
    features: PointFeatures,
    params: ModelParams,
    labels: LabelSet,
    cfg: EnergyLossConfig,
}

/// Margin regimes: 0 places both margins mid-range so hinges are mixed,
/// 1 silences the inlier hinge and activates the outlier hinge, 2 the
/// reverse.
fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=10);
    let k = rng.random_range(1..=3usize);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
    let mut params =
        ModelParams::init(Layout::new(FEATURE_WIDTH, hidden, k).unwrap(), seed).unwrap();
    if rng.random_bool(0.7) {
        params = params.widen_abstention();
    }
    let scale = rng.random_range(1.0..3.0);
    for t in params.theta.iter_mut() {
        *t *= scale;
    }
    let normal = Normal::new(0.0, 1.5).unwrap();
    let values: Vec<f64> = (0..n * FEATURE_WIDTH)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let features = PointFeatures::from_rows(values, n).unwrap();
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=k as u32 + 1)).collect();
    let labels = LabelSet::new(labels, k as u32).unwrap();

    let include_abstention = params.layout.has_abstention() && rng.random_bool(0.3);
    let e = point_energy_with(&forward(&features, &params).unwrap(), include_abstention).0;
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (m_in, m_out) = match seed % 3 {
        0 => {
            let mid = (lo + hi) / 2.0;
            (mid - 1e-3, mid + 1e-3)
        }
        1 => (hi + 1.0, hi + 2.0),
        _ => (lo - 1.0, lo - 0.5),
    };
    let cfg = EnergyLossConfig {
        m_in,
        m_out,
        lambda: rng.random_range(0.0..2.0),
        use_count_weights: rng.random_bool(0.5),
        include_abstention,
    };
    Case {
        features,
        params,
        labels,
        cfg,
    }
}

fn max_relative_error(c: &Case) -> f64 {
    let (_, grad) = loss_and_grad(&c.features, &c.params, &c.labels, &c.cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut p = c.params.clone();
    for j in 0..p.theta.len() {
        let orig = p.theta[j];
        p.theta[j] = orig + STEP;
        let up = loss(&c.features, &p, &c.labels, &c.cfg).unwrap();
        p.theta[j] = orig - STEP;
        let down = loss(&c.features, &p, &c.labels, &c.cfg).unwrap();
        p.theta[j] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..30 {
        let c = case(seed);
        let err = max_relative_error(&c);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}
