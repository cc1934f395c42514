//! Fixtures shared by the benchmarks.

use lidar_energy::energy::EnergyLossConfig;
use lidar_energy::model::{
    features_for, FeatureParams, Layout, ModelParams, PointFeatures, FEATURE_WIDTH,
};
use lidar_energy::synth::{generate, Preset, Scene};
use lidar_energy::LogitField;

/// A spray scene at the given azimuth step in degrees.
pub fn spray_scene(seed: u64, azimuth_deg: f64) -> Scene {
    let mut spec = Preset::Spray.scene(seed);
    spec.sensor.azimuth_resolution = azimuth_deg.to_radians();
    generate(&spec).expect("preset scenes are valid")
}

pub fn scene_features(scene: &Scene) -> PointFeatures {
    features_for(&scene.cloud, &FeatureParams::default()).expect("non-empty scene")
}

/// Deterministic logits with `k` inlier columns plus an abstention column.
pub fn logits(n: usize, k: usize) -> LogitField {
    let cols = k + 1;
    let values = (0..n * cols)
        .map(|i| ((i * 7919) % 1000) as f64 / 100.0 - 5.0)
        .collect();
    LogitField::new(values, n, cols, k).expect("consistent shape")
}

/// A widened model of the desk-scale size used in the experiments.
pub fn model(hidden: &[usize]) -> ModelParams {
    ModelParams::init(
        Layout::new(FEATURE_WIDTH, hidden.to_vec(), 2).expect("valid layout"),
        0,
    )
    .expect("valid init")
    .widen_abstention()
}

pub fn loss_config() -> EnergyLossConfig {
    EnergyLossConfig::default()
}
