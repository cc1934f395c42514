use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::voxel::cell_of;
use super::PointCloud;
use crate::error::{Error, Result};

/// Uniform hash grid over a cloud for fixed-radius and k-nearest queries.
///
/// Queries exclude the query point itself (by index, so coincident points
/// still see each other) and treat the radius as inclusive.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<[f64; 3]>,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl NeighborIndex {
    /// Bins `cloud` into cubic cells with edge `cell_size`. Radius queries are
    /// cheapest when the radius is close to the cell size.
    pub fn build(cloud: &PointCloud, cell_size: f64) -> Result<Self> {
        if !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(Error::invalid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let size = [cell_size; 3];
        let points: Vec<[f64; 3]> = cloud.iter().map(|p| p.xyz()).collect();
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(*p, size);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i as u32);
        }
        Ok(NeighborIndex {
            points,
            cell: cell_size,
            cells,
            lo,
            hi,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.points.len() {
            return Err(Error::OutOfRange {
                index: id,
                len: self.points.len(),
            });
        }
        Ok(())
    }

    fn for_each_within(&self, id: usize, r: f64, mut f: impl FnMut(usize, f64)) -> Result<()> {
        self.check_id(id)?;
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::invalid(format!("radius must be positive, got {r}")));
        }
        let q = self.points[id];
        // Pad the cell range so rounding in q +/- r can never drop a cell.
        let pad = r * 1e-9 + 1e-12;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..3 {
            lo[a] = (((q[a] - r - pad) / self.cell).floor() as i64).max(self.lo[a]);
            hi[a] = (((q[a] + r + pad) / self.cell).floor() as i64).min(self.hi[a]);
        }
        for cx in lo[0]..=hi[0] {
            for cy in lo[1]..=hi[1] {
                for cz in lo[2]..=hi[2] {
                    let Some(members) = self.cells.get(&[cx, cy, cz]) else {
                        continue;
                    };
                    for &m in members {
                        let m = m as usize;
                        if m == id {
                            continue;
                        }
                        let d = dist(&q, &self.points[m]);
                        if d <= r {
                            f(m, d);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Ids of all other points within distance `r` (inclusive), ascending.
    pub fn radius_neighbors(&self, id: usize, r: f64) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        self.for_each_within(id, r, |m, _| out.push(m))?;
        out.sort_unstable();
        Ok(out)
    }

    /// Number of other points within distance `r` (inclusive).
    pub fn radius_count(&self, id: usize, r: f64) -> Result<usize> {
        let mut n = 0;
        self.for_each_within(id, r, |_, _| n += 1)?;
        Ok(n)
    }

    /// The `k` nearest other points as `(id, distance)`, nearest first. Ties
    /// in distance are broken by id.
    pub fn knn(&self, id: usize, k: usize) -> Result<Vec<(usize, f64)>> {
        self.check_id(id)?;
        if k == 0 || k >= self.points.len() {
            return Err(Error::invalid(format!(
                "k = {k} needs 1 <= k <= {}",
                self.points.len().saturating_sub(1)
            )));
        }
        let q = self.points[id];
        let c = cell_of(q, [self.cell; 3]);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let max_shell = (0..3)
            .map(|a| (c[a] - self.lo[a]).max(self.hi[a] - c[a]))
            .max()
            .unwrap_or(0);

        let visit = |cell: [i64; 3], heap: &mut BinaryHeap<Candidate>| {
            if let Some(members) = self.cells.get(&cell) {
                for &m in members {
                    let m = m as usize;
                    if m == id {
                        continue;
                    }
                    let cand = Candidate(dist(&q, &self.points[m]), m);
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
        };

        for s in 0..=max_shell {
            for dz in -s..=s {
                for dy in -s..=s {
                    if dz.abs() == s || dy.abs() == s {
                        for dx in -s..=s {
                            visit([c[0] + dx, c[1] + dy, c[2] + dz], &mut heap);
                        }
                    } else if s > 0 {
                        visit([c[0] - s, c[1] + dy, c[2] + dz], &mut heap);
                        visit([c[0] + s, c[1] + dy, c[2] + dz], &mut heap);
                    }
                }
            }
            // Anything in an unvisited shell lies at least s cells away.
            if heap.len() == k && heap.peek().unwrap().0 <= s as f64 * self.cell {
                break;
            }
        }
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.1, c.0)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Mean distance to the `k` nearest other points.
    pub fn knn_mean_distance(&self, id: usize, k: usize) -> Result<f64> {
        let nn = self.knn(id, k)?;
        Ok(nn.iter().map(|&(_, d)| d).sum::<f64>() / k as f64)
    }
}
