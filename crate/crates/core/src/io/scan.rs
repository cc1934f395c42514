use std::fs;
use std::path::Path;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

/// Bytes per point: x, y, z, intensity as little-endian f32.
pub const POINT_BYTES: usize = 16;

pub fn decode_scan(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(POINT_BYTES) {
        let offset = bytes.len() - bytes.len() % POINT_BYTES;
        return Err(Error::format(
            path,
            format!(
                "truncated point record at byte offset {offset} (file has {} bytes, not a multiple of {POINT_BYTES})",
                bytes.len()
            ),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_BYTES);
    for (i, rec) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let p = Point::new(f(0), f(1), f(2), f(3));
        if ![p.x, p.y, p.z, p.intensity].iter().all(|v| v.is_finite()) {
            return Err(Error::format(
                path,
                format!("non-finite value at point {i}"),
            ));
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a KITTI-style `.bin` point file.
pub fn read_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scan(&bytes, path)
}

pub fn write_scan(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode_scan(cloud)).map_err(|e| Error::io(path, e))
}
