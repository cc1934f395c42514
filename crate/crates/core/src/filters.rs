//! Classical neighborhood filters for weather noise: radius (ROR),
//! statistical (SOR), dynamic radius (DROR) and dynamic statistical (DSOR)
//! outlier removal. Each returns one decision per input point.

use serde::{Deserialize, Serialize};

use crate::cloud::{NeighborIndex, PointCloud};
use crate::energy::Decision;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterVariant {
    Ror,
    Sor,
    Dror,
    Dsor,
}

impl std::str::FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ror" => Ok(FilterVariant::Ror),
            "sor" => Ok(FilterVariant::Sor),
            "dror" => Ok(FilterVariant::Dror),
            "dsor" => Ok(FilterVariant::Dsor),
            other => Err(Error::invalid(format!("unknown filter variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterVariant::Ror => "ror",
            FilterVariant::Sor => "sor",
            FilterVariant::Dror => "dror",
            FilterVariant::Dsor => "dsor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RorParams {
    pub radius: f64,
    pub min_neighbors: usize,
}

impl Default for RorParams {
    fn default() -> Self {
        RorParams {
            radius: 0.5,
            min_neighbors: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SorParams {
    pub k: usize,
    pub std_mul: f64,
}

impl Default for SorParams {
    fn default() -> Self {
        SorParams { k: 5, std_mul: 1.0 }
    }
}

/// DROR search radius is `max(r_min, beta * alpha * planar_range)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrorParams {
    /// Horizontal angular resolution of the sensor, radians.
    pub alpha: f64,
    pub beta: f64,
    pub r_min: f64,
    pub min_neighbors: usize,
}

impl Default for DrorParams {
    fn default() -> Self {
        DrorParams {
            alpha: 0.2f64.to_radians(),
            beta: 3.0,
            r_min: 0.04,
            min_neighbors: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsorParams {
    pub k: usize,
    pub std_mul: f64,
    /// Range multiplier `g` applied to the global SOR threshold.
    pub range_mul: f64,
}

impl Default for DsorParams {
    fn default() -> Self {
        DsorParams {
            k: 5,
            std_mul: 1.0,
            range_mul: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    pub ror: RorParams,
    pub sor: SorParams,
    pub dror: DrorParams,
    pub dsor: DsorParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            variant: FilterVariant::Dror,
            ror: RorParams::default(),
            sor: SorParams::default(),
            dror: DrorParams::default(),
            dsor: DsorParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("ror.radius", self.ror.radius)?;
        positive("sor.std_mul", self.sor.std_mul)?;
        positive("dror.alpha", self.dror.alpha)?;
        positive("dror.beta", self.dror.beta)?;
        positive("dror.r_min", self.dror.r_min)?;
        positive("dsor.std_mul", self.dsor.std_mul)?;
        positive("dsor.range_mul", self.dsor.range_mul)?;
        if self.sor.k == 0 || self.dsor.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(())
    }
}

/// Runs the configured variant.
pub fn run(cloud: &PointCloud, cfg: &FilterConfig) -> Result<Vec<Decision>> {
    cfg.validate()?;
    match cfg.variant {
        FilterVariant::Ror => ror(cloud, &cfg.ror),
        FilterVariant::Sor => sor(cloud, &cfg.sor),
        FilterVariant::Dror => dror(cloud, &cfg.dror),
        FilterVariant::Dsor => dsor(cloud, &cfg.dsor),
    }
}

fn decide(outlier: bool) -> Decision {
    if outlier {
        Decision::Outlier
    } else {
        Decision::Inlier
    }
}

/// Outlier iff fewer than `min_neighbors` other points lie within `radius`.
pub fn ror(cloud: &PointCloud, p: &RorParams) -> Result<Vec<Decision>> {
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = NeighborIndex::build(cloud, p.radius)?;
    (0..cloud.len())
        .map(|i| Ok(decide(index.radius_count(i, p.radius)? < p.min_neighbors)))
        .collect()
}

/// Mean k-nearest-neighbor distance of every point plus the global mean
/// and population standard deviation of those distances.
fn knn_statistics(cloud: &PointCloud, k: usize) -> Result<(Vec<f64>, f64, f64)> {
    if cloud.len() <= k {
        return Err(Error::invalid(format!(
            "{} points is too few for k = {k}",
            cloud.len()
        )));
    }
    let cell = typical_spacing(cloud);
    let index = NeighborIndex::build(cloud, cell)?;
    let d: Vec<f64> = (0..cloud.len())
        .map(|i| index.knn_mean_distance(i, k))
        .collect::<Result<_>>()?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((d, mean, var.sqrt()))
}

/// Cell size for k-NN queries: the cube root of the bounding-box volume per
/// point, clamped to a sane range.
fn typical_spacing(cloud: &PointCloud) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud.iter() {
        let q = p.xyz();
        for a in 0..3 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    let vol: f64 = (0..3).map(|a| (hi[a] - lo[a]).max(0.05)).product();
    (vol / cloud.len() as f64).cbrt().clamp(0.05, 5.0)
}

/// Outlier iff the mean distance to the `k` nearest neighbors exceeds
/// `mean + std_mul * std` over the whole cloud.
pub fn sor(cloud: &PointCloud, p: &SorParams) -> Result<Vec<Decision>> {
    let (d, mean, std) = knn_statistics(cloud, p.k)?;
    let threshold = mean + p.std_mul * std;
    Ok(d.iter().map(|&di| decide(di > threshold)).collect())
}

/// Per-point DROR search radius.
pub fn dror_radius(planar_range: f64, p: &DrorParams) -> f64 {
    (p.beta * p.alpha * planar_range).max(p.r_min)
}

/// Outlier iff fewer than `min_neighbors` points lie within the dynamic
/// radius `max(r_min, beta * alpha * planar_range)`.
pub fn dror(cloud: &PointCloud, p: &DrorParams) -> Result<Vec<Decision>> {
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let radii: Vec<f64> = cloud
        .iter()
        .map(|q| dror_radius(q.planar_range(), p))
        .collect();
    let mut sorted = radii.clone();
    sorted.sort_by(f64::total_cmp);
    let index = NeighborIndex::build(cloud, sorted[sorted.len() / 2])?;
    radii
        .iter()
        .enumerate()
        .map(|(i, &r)| Ok(decide(index.radius_count(i, r)? < p.min_neighbors)))
        .collect()
}

/// SOR with a range-scaled threshold: outlier iff
/// `d_i > (mean + std_mul * std) * range_mul * range_i`.
pub fn dsor(cloud: &PointCloud, p: &DsorParams) -> Result<Vec<Decision>> {
    let (d, mean, std) = knn_statistics(cloud, p.k)?;
    let global = mean + p.std_mul * std;
    Ok(d.iter()
        .zip(cloud.iter())
        .map(|(&di, q)| decide(di > global * p.range_mul * q.range()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use proptest::prelude::*;

    fn cloud(pts: &[[f32; 3]]) -> PointCloud {
        PointCloud::new(
            pts.iter()
                .map(|p| Point::new(p[0], p[1], p[2], 0.0))
                .collect(),
        )
        .unwrap()
    }

    fn flags(d: &[Decision]) -> Vec<bool> {
        d.iter().map(|d| d.is_outlier()).collect()
    }

    #[test]
    fn ror_isolated_point() {
        let mut pts: Vec<[f32; 3]> = (0..20)
            .map(|i| [0.05 * (i % 5) as f32, 0.05 * (i / 5) as f32, 0.0])
            .collect();
        pts.push([10.0, 0.0, 0.0]);
        let d = ror(
            &cloud(&pts),
            &RorParams {
                radius: 0.5,
                min_neighbors: 1,
            },
        )
        .unwrap();
        assert!(d[20].is_outlier());
        assert!(d[..20].iter().all(|d| !d.is_outlier()));
    }

    #[test]
    fn ror_triangle_all_inliers() {
        let h = (0.1f32 * 0.1 - 0.05 * 0.05).sqrt();
        let c = cloud(&[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.05, h, 0.0]]);
        let d = ror(
            &c,
            &RorParams {
                radius: 0.5,
                min_neighbors: 2,
            },
        )
        .unwrap();
        assert_eq!(flags(&d), vec![false; 3]);
    }

    #[test]
    fn ror_zero_neighbors_keeps_everything() {
        let c = cloud(&[[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]]);
        let d = ror(
            &c,
            &RorParams {
                radius: 0.1,
                min_neighbors: 0,
            },
        )
        .unwrap();
        assert_eq!(flags(&d), vec![false; 2]);
    }

    #[test]
    fn sor_flags_far_point() {
        let mut pts: Vec<[f32; 3]> = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push([i as f32 * 0.1, j as f32 * 0.1, 0.0]);
            }
        }
        pts.push([5.0, 5.0, 0.0]);
        let c = cloud(&pts);
        let d = sor(&c, &SorParams { k: 4, std_mul: 1.0 }).unwrap();
        assert!(d[100].is_outlier());
        // Interior lattice points have the minimum statistic.
        assert!(!d[55].is_outlier());
        assert!(sor(&cloud(&pts[..4]), &SorParams { k: 4, std_mul: 1.0 }).is_err());
    }

    #[test]
    fn sor_lattice_without_outliers_at_large_multiplier() {
        let pts: Vec<[f32; 3]> = (0..125)
            .map(|i| {
                [
                    (i % 5) as f32 * 0.2,
                    ((i / 5) % 5) as f32 * 0.2,
                    (i / 25) as f32 * 0.2,
                ]
            })
            .collect();
        let d = sor(&cloud(&pts), &SorParams { k: 6, std_mul: 1e6 }).unwrap();
        assert!(d.iter().all(|d| !d.is_outlier()));
    }

    #[test]
    fn dror_radius_examples() {
        let p = DrorParams {
            alpha: 0.01,
            beta: 3.0,
            r_min: 0.04,
            min_neighbors: 3,
        };
        assert!((dror_radius(10.0, &p) - 0.30).abs() < 1e-12);
        assert_eq!(dror_radius(1.0, &p), 0.04);
    }

    #[test]
    fn dsor_matches_sor_at_unit_range() {
        // Points on the unit sphere, so range is 1 everywhere.
        let mut pts = Vec::new();
        for i in 0..60 {
            let a = i as f32 * 0.1;
            let b = (i % 7) as f32 * 0.3 - 0.9;
            pts.push([b.cos() * a.cos(), b.cos() * a.sin(), b.sin()]);
        }
        pts.push([0.0, 0.0, 1.0]);
        let c = cloud(&pts);
        let s = sor(&c, &SorParams { k: 3, std_mul: 0.5 }).unwrap();
        let ds = dsor(
            &c,
            &DsorParams {
                k: 3,
                std_mul: 0.5,
                range_mul: 1.0,
            },
        )
        .unwrap();
        assert_eq!(s, ds);
    }

    #[test]
    fn dsor_flags_near_scatter_over_far_cluster() {
        // Near points and far points have the same neighbor spacing; the
        // range scaling forgives the far ones.
        let mut pts = Vec::new();
        for i in 0..30 {
            pts.push([2.0, -0.6 + 0.04 * i as f32, 0.0]);
            pts.push([40.0, -0.6 + 0.04 * i as f32, 0.0]);
        }
        let c = cloud(&pts);
        let d = dsor(
            &c,
            &DsorParams {
                k: 2,
                std_mul: 1.0,
                range_mul: 0.1,
            },
        )
        .unwrap();
        for (i, q) in c.iter().enumerate() {
            assert_eq!(d[i].is_outlier(), q.x < 10.0, "point {i}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ror_monotone_in_min_neighbors(
            pts in prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0, -1.0f32..1.0), 1..150),
            r in 0.05f64..1.5,
            n in 1usize..6,
        ) {
            let pts: Vec<[f32; 3]> = pts.into_iter().map(|(a, b, c)| [a, b, c]).collect();
            let c = cloud(&pts);
            let hi = ror(&c, &RorParams { radius: r, min_neighbors: n }).unwrap();
            let lo = ror(&c, &RorParams { radius: r, min_neighbors: n - 1 }).unwrap();
            for (a, b) in hi.iter().zip(&lo) {
                prop_assert!(!( !a.is_outlier() && b.is_outlier()));
            }
        }

        #[test]
        fn dror_radius_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let p = DrorParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(dror_radius(lo, &p) <= dror_radius(hi, &p));
            prop_assert!(dror_radius(lo, &p) >= p.r_min);
        }

        #[test]
        fn filters_commute_with_permutation(
            pts in prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0, -1.0f32..1.0), 8..120),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pts: Vec<[f32; 3]> = pts.into_iter().map(|(a, b, c)| [a, b, c]).collect();
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<[f32; 3]> = perm.iter().map(|&i| pts[i]).collect();
            let (a, b) = (cloud(&pts), cloud(&shuffled));
            for variant in [FilterVariant::Ror, FilterVariant::Sor, FilterVariant::Dror, FilterVariant::Dsor] {
                let cfg = FilterConfig { variant, dror: DrorParams { alpha: 0.02, ..Default::default() }, ..Default::default() };
                let da = run(&a, &cfg).unwrap();
                let db = run(&b, &cfg).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(da[i], db[j]);
                }
            }
        }
    }
}
