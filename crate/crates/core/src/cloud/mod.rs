//! Point clouds, per-point labels, voxel partitioning and neighborhood queries.

mod neighbors;
mod voxel;

pub use neighbors::NeighborIndex;
pub use voxel::{VoxelGrid, VoxelIndex};

use crate::error::{Error, Result};

/// A single LiDAR return in the sensor frame. Coordinates are meters.
///
/// Stored in single precision, the precision of the on-disk scan format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Point { x, y, z, intensity }
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    /// Euclidean distance from the sensor origin.
    #[inline]
    pub fn range(&self) -> f64 {
        let [x, y, z] = self.xyz();
        (x * x + y * y + z * z).sqrt()
    }

    /// Distance from the sensor origin in the x-y plane.
    #[inline]
    pub fn planar_range(&self) -> f64 {
        let [x, y, _] = self.xyz();
        (x * x + y * y).sqrt()
    }

    #[inline]
    pub fn distance(&self, other: &Point) -> f64 {
        let a = self.xyz();
        let b = other.xyz();
        let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// An ordered set of points. Every coordinate is finite and every intensity
/// lies in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    /// Builds a cloud, clamping intensities into `[0, 1]`.
    ///
    /// Fails if any coordinate or intensity is NaN or infinite.
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        for (i, p) in points.iter_mut().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.intensity.is_finite()) {
                return Err(Error::invalid(format!("point {i} has a non-finite value")));
            }
            p.intensity = p.intensity.clamp(0.0, 1.0);
        }
        Ok(PointCloud { points })
    }

    pub fn empty() -> Self {
        PointCloud::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn get(&self, i: usize) -> Option<&Point> {
        self.points.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Keeps the points whose mask entry is true.
    pub fn select(&self, mask: &[bool]) -> PointCloud {
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(p, _)| *p)
            .collect();
        PointCloud { points }
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point;

    fn index(&self, i: usize) -> &Point {
        &self.points[i]
    }
}

/// Per-point semantic labels.
///
/// Classes `1..=Y` are inliers, class `Y + 1` is the single outlier class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<u32>,
    inlier_classes: u32,
}

impl LabelSet {
    pub fn new(labels: Vec<u32>, inlier_classes: u32) -> Result<Self> {
        if inlier_classes == 0 {
            return Err(Error::invalid("at least one inlier class is required"));
        }
        let outlier = inlier_classes + 1;
        if let Some((i, &bad)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l == 0 || l > outlier)
        {
            return Err(Error::invalid(format!(
                "label {bad} at point {i} outside 1..={outlier}"
            )));
        }
        Ok(LabelSet {
            labels,
            inlier_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Number of inlier classes, `Y`.
    pub fn inlier_classes(&self) -> u32 {
        self.inlier_classes
    }

    pub fn outlier_class(&self) -> u32 {
        self.inlier_classes + 1
    }

    #[inline]
    pub fn is_outlier(&self, i: usize) -> bool {
        self.labels[i] == self.outlier_class()
    }

    pub fn outlier_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_outlier(i)).collect()
    }

    pub fn inlier_count(&self) -> usize {
        self.len() - self.outlier_count()
    }

    pub fn outlier_count(&self) -> usize {
        let out = self.outlier_class();
        self.labels.iter().filter(|&&l| l == out).count()
    }

    pub fn select(&self, mask: &[bool]) -> LabelSet {
        let labels = self
            .labels
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(l, _)| *l)
            .collect();
        LabelSet {
            labels,
            inlier_classes: self.inlier_classes,
        }
    }

    /// Checks that the labels pair with a cloud of `n` points.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Consistency(format!(
                "{} labels for {} points",
                self.len(),
                n
            )));
        }
        Ok(())
    }
}
