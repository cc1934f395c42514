use serde::{Deserialize, Serialize};

use crate::cloud::{NeighborIndex, PointCloud};
use crate::error::{Error, Result};

/// Channels per point: x, y, z, intensity, range, neighbor count within
/// `radius`, mean distance to the `k` nearest neighbors.
pub const FEATURE_WIDTH: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_WIDTH] = [
    "x",
    "y",
    "z",
    "intensity",
    "range",
    "neighbor_count",
    "mean_neighbor_distance",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    /// Neighbor-count radius, meters.
    pub radius: f64,
    /// Neighbors averaged for the mean-distance channel.
    pub k: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { radius: 0.5, k: 8 }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!(
                "feature radius must be positive, got {}",
                self.radius
            )));
        }
        if self.k == 0 {
            return Err(Error::invalid("feature k must be at least 1"));
        }
        Ok(())
    }
}

/// Row-major `N x FEATURE_WIDTH` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatures {
    values: Vec<f64>,
    rows: usize,
}

impl PointFeatures {
    pub fn from_rows(values: Vec<f64>, rows: usize) -> Result<Self> {
        if values.len() != rows * FEATURE_WIDTH {
            return Err(Error::invalid(format!(
                "{} values for {rows} rows of width {FEATURE_WIDTH}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(PointFeatures { values, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        FEATURE_WIDTH
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * FEATURE_WIDTH..(i + 1) * FEATURE_WIDTH]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the rows whose mask entry is true.
    pub fn select(&self, mask: &[bool]) -> PointFeatures {
        let mut values = Vec::new();
        let mut rows = 0;
        for (i, &keep) in mask.iter().enumerate().take(self.rows) {
            if keep {
                values.extend_from_slice(self.row(i));
                rows += 1;
            }
        }
        PointFeatures { values, rows }
    }
}

/// Computes per-point features using `index` for the neighbor channels.
///
/// When the cloud holds `k` points or fewer, the mean distance runs over all
/// other points; a lone point gets 0.
pub fn extract_features(
    cloud: &PointCloud,
    index: &NeighborIndex,
    radius: f64,
    k: usize,
) -> Result<PointFeatures> {
    if cloud.is_empty() {
        return Err(Error::invalid(
            "cannot extract features from an empty cloud",
        ));
    }
    if index.len() != cloud.len() {
        return Err(Error::invalid(
            "neighbor index built over a different cloud",
        ));
    }
    FeatureParams { radius, k }.validate()?;
    let k_eff = k.min(cloud.len() - 1);
    let mut values = Vec::with_capacity(cloud.len() * FEATURE_WIDTH);
    for (i, p) in cloud.iter().enumerate() {
        let count = index.radius_count(i, radius)?;
        let mean_dist = if k_eff == 0 {
            0.0
        } else {
            index.knn_mean_distance(i, k_eff)?
        };
        values.extend_from_slice(&[
            p.x as f64,
            p.y as f64,
            p.z as f64,
            p.intensity as f64,
            p.range(),
            count as f64,
            mean_dist,
        ]);
    }
    PointFeatures::from_rows(values, cloud.len())
}

/// Builds a neighbor index with cell size `params.radius` and extracts.
pub fn features_for(cloud: &PointCloud, params: &FeatureParams) -> Result<PointFeatures> {
    params.validate()?;
    let index = NeighborIndex::build(cloud, params.radius)?;
    extract_features(cloud, &index, params.radius, params.k)
}

/// Per-channel standardization with stored statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub const STD_FLOOR: f64 = 1e-6;

    pub fn identity() -> Self {
        FeatureNormalizer {
            mean: vec![0.0; FEATURE_WIDTH],
            std: vec![1.0; FEATURE_WIDTH],
        }
    }

    /// Pooled mean and population standard deviation over every row.
    pub fn fit<'a>(sets: impl IntoIterator<Item = &'a PointFeatures>) -> Result<Self> {
        let sets: Vec<&PointFeatures> = sets.into_iter().collect();
        let n: usize = sets.iter().map(|s| s.rows()).sum();
        if n == 0 {
            return Err(Error::invalid("cannot fit a normalizer on zero points"));
        }
        let mut mean = vec![0.0; FEATURE_WIDTH];
        for s in &sets {
            for i in 0..s.rows() {
                for (m, v) in mean.iter_mut().zip(s.row(i)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; FEATURE_WIDTH];
        for s in &sets {
            for i in 0..s.rows() {
                for ((acc, v), m) in var.iter_mut().zip(s.row(i)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| (v / n as f64).sqrt().max(Self::STD_FLOOR))
            .collect();
        Ok(FeatureNormalizer { mean, std })
    }

    pub fn apply(&self, features: &PointFeatures) -> PointFeatures {
        let mut values = features.values.clone();
        for row in values.chunks_exact_mut(FEATURE_WIDTH) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        PointFeatures {
            values,
            rows: features.rows,
        }
    }
}
