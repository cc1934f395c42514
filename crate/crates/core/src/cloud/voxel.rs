use std::collections::BTreeMap;

use super::PointCloud;
use crate::error::{Error, Result};

/// Integer voxel coordinate, `floor(coordinate / voxel_size)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelIndex(pub [i64; 3]);

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    /// Indices into the source cloud, ascending.
    pub members: Vec<usize>,
    /// Mean of member `(x, y, z, intensity)`.
    pub mean: [f64; 4],
}

/// Sparse partition of a cloud into axis-aligned voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    voxel_size: [f64; 3],
    voxels: BTreeMap<VoxelIndex, Voxel>,
}

pub(crate) fn validate_size(size: [f64; 3]) -> Result<()> {
    if size.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(Error::invalid(format!(
            "voxel size components must be positive, got {size:?}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn cell_of(p: [f64; 3], size: [f64; 3]) -> [i64; 3] {
    [
        (p[0] / size[0]).floor() as i64,
        (p[1] / size[1]).floor() as i64,
        (p[2] / size[2]).floor() as i64,
    ]
}

impl VoxelGrid {
    /// Partitions `cloud` into half-open voxels `[k * size, (k + 1) * size)`
    /// per axis, so a coordinate of exactly `0.2` with size `0.2` lands in
    /// index `1`.
    pub fn voxelize(cloud: &PointCloud, voxel_size: [f64; 3]) -> Result<Self> {
        validate_size(voxel_size)?;
        let mut voxels: BTreeMap<VoxelIndex, Voxel> = BTreeMap::new();
        for (i, p) in cloud.iter().enumerate() {
            let key = VoxelIndex(cell_of(p.xyz(), voxel_size));
            let v = voxels.entry(key).or_insert_with(|| Voxel {
                members: Vec::new(),
                mean: [0.0; 4],
            });
            v.members.push(i);
            for (acc, val) in
                v.mean
                    .iter_mut()
                    .zip([p.x as f64, p.y as f64, p.z as f64, p.intensity as f64])
            {
                *acc += val;
            }
        }
        for v in voxels.values_mut() {
            let n = v.members.len() as f64;
            v.mean.iter_mut().for_each(|m| *m /= n);
        }
        Ok(VoxelGrid { voxel_size, voxels })
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn get(&self, index: &VoxelIndex) -> Option<&Voxel> {
        self.voxels.get(index)
    }

    /// Voxels in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelIndex, &Voxel)> {
        self.voxels.iter()
    }

    /// Total number of member points; equals the source cloud size.
    pub fn point_count(&self) -> usize {
        self.voxels.values().map(|v| v.members.len()).sum()
    }

    /// Maps each source point to its voxel.
    pub fn assignment(&self, n_points: usize) -> Vec<Option<VoxelIndex>> {
        let mut out = vec![None; n_points];
        for (k, v) in &self.voxels {
            for &m in &v.members {
                if m < n_points {
                    out[m] = Some(*k);
                }
            }
        }
        out
    }
}
