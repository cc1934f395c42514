//! Seeded synthetic LiDAR scenes with labelled weather clutter.
//!
//! Inlier geometry (ground plane, vertical walls, vehicle boxes) is sampled
//! by ray casting from a spinning multi-channel sensor. Weather points come
//! from one of three parametric models:
//!
//! * spray: truncated anisotropic Gaussian clusters trailing each vehicle,
//! * snow: uniform azimuth scatter in a cylinder around the sensor whose
//!   density falls linearly with range,
//! * fog: per-ray early returns at exponentially distributed ranges that
//!   replace the surface return. Not a physical fog model.
//!
//! Labels: 1 = background, 2 = vehicle, 3 = weather. Output points are in
//! the sensor frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::{LabelSet, Point, PointCloud};
use crate::error::{Error, Result};

pub const BACKGROUND: u32 = 1;
pub const VEHICLE: u32 = 2;
pub const WEATHER: u32 = 3;
pub const INLIER_CLASSES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensor {
    /// Sensor position in the world frame; the ground is `z = 0`.
    pub origin: [f64; 3],
    pub azimuth_resolution: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub channels: usize,
    pub max_range: f64,
}

impl Default for Sensor {
    fn default() -> Self {
        Sensor {
            origin: [0.0, 0.0, 1.8],
            azimuth_resolution: 0.4f64.to_radians(),
            elevation_min: (-25.0f64).to_radians(),
            elevation_max: 5.0f64.to_radians(),
            channels: 32,
            max_range: 80.0,
        }
    }
}

/// Vertical rectangle standing on the ground along a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub height: f64,
}

/// Box resting on the ground. `size` is (length, width, height) and the
/// vehicle drives along its local +x axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleBox {
    pub center: [f64; 2],
    pub size: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherKind {
    None,
    Spray,
    Snow,
    Fog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SprayParams {
    /// Standard deviations along track, across track and vertically.
    pub sigma: [f64; 3],
    /// Gap between the rear of the vehicle and the cluster center.
    pub offset: f64,
    /// Cluster center height above ground.
    pub height: f64,
}

impl Default for SprayParams {
    fn default() -> Self {
        SprayParams {
            sigma: [1.2, 0.5, 0.35],
            offset: 1.5,
            height: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnowParams {
    pub radius: f64,
    pub height: f64,
}

impl Default for SnowParams {
    fn default() -> Self {
        SnowParams {
            radius: 25.0,
            height: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FogParams {
    /// Rate of the exponential early-return range distribution, 1/m.
    pub rate: f64,
}

impl Default for FogParams {
    fn default() -> Self {
        FogParams { rate: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherSpec {
    pub kind: WeatherKind,
    /// Expected fraction of weather points in the scan.
    pub rho: f64,
    pub spray: SprayParams,
    pub snow: SnowParams,
    pub fog: FogParams,
}

impl Default for WeatherSpec {
    fn default() -> Self {
        WeatherSpec {
            kind: WeatherKind::None,
            rho: 0.0,
            spray: SprayParams::default(),
            snow: SnowParams::default(),
            fog: FogParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    /// Half-size of the square ground patch around the sensor.
    pub ground_extent: f64,
    pub walls: Vec<Wall>,
    pub vehicles: Vec<VehicleBox>,
    pub sensor: Sensor,
    pub weather: WeatherSpec,
    /// Standard deviation of the Gaussian range noise on surface returns.
    pub range_noise: f64,
}

/// A generated scan with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub labels: LabelSet,
}

/// The Gaussian generating one spray cluster, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprayCluster {
    pub center: [f64; 3],
    pub yaw: f64,
    pub sigma: [f64; 3],
}

impl SprayCluster {
    /// Mahalanobis distance of a world point from the cluster center.
    pub fn mahalanobis(&self, p: [f64; 3]) -> f64 {
        let local = to_local(
            [
                p[0] - self.center[0],
                p[1] - self.center[1],
                p[2] - self.center[2],
            ],
            self.yaw,
        );
        (0..3)
            .map(|a| (local[a] / self.sigma[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

const TRUNCATION_SIGMAS: f64 = 4.0;

fn to_local(v: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]]
}

fn to_world(v: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weather;
        if !(0.0..=0.5).contains(&w.rho) {
            return Err(Error::invalid(format!(
                "rho must lie in [0, 0.5], got {}",
                w.rho
            )));
        }
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos("ground_extent", self.ground_extent)?;
        pos("sensor.azimuth_resolution", self.sensor.azimuth_resolution)?;
        pos("sensor.max_range", self.sensor.max_range)?;
        pos("sensor height", self.sensor.origin[2])?;
        if self.sensor.channels == 0 {
            return Err(Error::invalid("sensor needs at least one channel"));
        }
        if self.sensor.elevation_min > self.sensor.elevation_max {
            return Err(Error::invalid("elevation_min exceeds elevation_max"));
        }
        if !self.range_noise.is_finite() || self.range_noise < 0.0 {
            return Err(Error::invalid("range noise must be non-negative"));
        }
        for wall in &self.walls {
            pos("wall height", wall.height)?;
        }
        for v in &self.vehicles {
            for s in v.size {
                pos("vehicle size", s)?;
            }
        }
        match w.kind {
            WeatherKind::Spray => {
                for s in w.spray.sigma {
                    pos("spray sigma", s)?;
                }
                if w.rho > 0.0 && self.vehicles.is_empty() {
                    return Err(Error::invalid("spray needs at least one vehicle"));
                }
            }
            WeatherKind::Snow => {
                pos("snow radius", w.snow.radius)?;
                pos("snow height", w.snow.height)?;
            }
            WeatherKind::Fog => pos("fog rate", w.fog.rate)?,
            WeatherKind::None => {
                if w.rho != 0.0 {
                    return Err(Error::invalid("rho must be 0 without weather"));
                }
            }
        }
        Ok(())
    }

    /// Spray clusters behind each vehicle, in world coordinates.
    pub fn spray_clusters(&self) -> Vec<SprayCluster> {
        let sp = &self.weather.spray;
        self.vehicles
            .iter()
            .map(|v| {
                let back = to_world([-(v.size[0] / 2.0 + sp.offset), 0.0, 0.0], v.yaw);
                SprayCluster {
                    center: [v.center[0] + back[0], v.center[1] + back[1], sp.height],
                    yaw: v.yaw,
                    sigma: sp.sigma,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Ground,
    Wall,
    Vehicle,
}

impl Surface {
    fn label(self) -> u32 {
        match self {
            Surface::Ground | Surface::Wall => BACKGROUND,
            Surface::Vehicle => VEHICLE,
        }
    }

    fn intensity(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Surface::Ground => rng.random_range(0.1..0.5),
            Surface::Wall => rng.random_range(0.3..0.8),
            Surface::Vehicle => rng.random_range(0.35..1.0),
        }
    }
}

fn weather_intensity(kind: WeatherKind, rng: &mut ChaCha8Rng) -> f64 {
    match kind {
        // Flakes close to the sensor can return as brightly as asphalt.
        WeatherKind::Snow => rng.random_range(0.0..0.5),
        _ => rng.random_range(0.0..0.3),
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Nearest surface hit along a ray, as (distance, surface).
fn cast(spec: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = None;
    let mut consider = |t: f64, s: Surface| {
        if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, s));
        }
    };

    if d[2] < 0.0 {
        let t = -o[2] / d[2];
        let (x, y) = (o[0] + t * d[0], o[1] + t * d[1]);
        if x.abs() <= spec.ground_extent && y.abs() <= spec.ground_extent {
            consider(t, Surface::Ground);
        }
    }

    let dxy = [d[0], d[1]];
    for w in &spec.walls {
        let seg = [w.end[0] - w.start[0], w.end[1] - w.start[1]];
        let denom = cross(dxy, seg);
        if denom.abs() < 1e-12 {
            continue;
        }
        let ao = [w.start[0] - o[0], w.start[1] - o[1]];
        let t = cross(ao, seg) / denom;
        let s = cross(ao, dxy) / denom;
        let z = o[2] + t * d[2];
        if (0.0..=1.0).contains(&s) && (0.0..=w.height).contains(&z) {
            consider(t, Surface::Wall);
        }
    }

    for v in &spec.vehicles {
        let half = [v.size[0] / 2.0, v.size[1] / 2.0, v.size[2] / 2.0];
        let lo = to_local(
            [o[0] - v.center[0], o[1] - v.center[1], o[2] - half[2]],
            v.yaw,
        );
        let ld = to_local(d, v.yaw);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut hit = true;
        for a in 0..3 {
            if ld[a].abs() < 1e-15 {
                if lo[a].abs() > half[a] {
                    hit = false;
                    break;
                }
                continue;
            }
            let ta = (-half[a] - lo[a]) / ld[a];
            let tb = (half[a] - lo[a]) / ld[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if hit && t0 <= t1 && t0 > 0.0 {
            consider(t0, Surface::Vehicle);
        }
    }
    best.filter(|(t, _)| *t <= spec.sensor.max_range)
}

fn push(points: &mut Vec<Point>, labels: &mut Vec<u32>, p: [f64; 3], intensity: f64, label: u32) {
    points.push(Point::new(
        p[0] as f32,
        p[1] as f32,
        p[2] as f32,
        intensity as f32,
    ));
    labels.push(label);
}

/// Number of weather points so that they make up a fraction `rho` of the
/// final scan.
fn weather_count(rho: f64, inliers: usize) -> usize {
    if rho <= 0.0 {
        return 0;
    }
    (rho / (1.0 - rho) * inliers as f64).round() as usize
}

/// Generates the scan described by `spec`. A pure function of the spec.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.range_noise.max(0.0))
        .map_err(|e| Error::invalid(format!("range noise: {e}")))?;
    let s = &spec.sensor;
    let o = s.origin;
    let w = &spec.weather;
    let fog = w.kind == WeatherKind::Fog && w.rho > 0.0;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let n_az = (std::f64::consts::TAU / s.azimuth_resolution).round() as usize;
    for ch in 0..s.channels {
        let el = if s.channels == 1 {
            s.elevation_min
        } else {
            s.elevation_min
                + (s.elevation_max - s.elevation_min) * ch as f64 / (s.channels - 1) as f64
        };
        let (sin_el, cos_el) = el.sin_cos();
        for a in 0..n_az {
            let az = a as f64 * s.azimuth_resolution;
            let (sin_az, cos_az) = az.sin_cos();
            let d = [cos_el * cos_az, cos_el * sin_az, sin_el];
            let Some((t, surface)) = cast(spec, o, d) else {
                continue;
            };
            let r = t + noise.sample(&mut rng);
            let intensity = surface.intensity(&mut rng);
            if fog && rng.random_bool(w.rho) {
                // Exponential range truncated to the surface distance.
                let u: f64 = rng.random();
                let lambda = w.fog.rate;
                let rf = -(1.0 - u * (1.0 - (-lambda * t).exp())).ln() / lambda;
                let p = [rf * d[0], rf * d[1], rf * d[2]];
                push(
                    &mut points,
                    &mut labels,
                    p,
                    weather_intensity(w.kind, &mut rng),
                    WEATHER,
                );
            } else {
                let p = [r * d[0], r * d[1], r * d[2]];
                push(&mut points, &mut labels, p, intensity, surface.label());
            }
        }
    }

    let inliers = labels.len();
    match w.kind {
        WeatherKind::Spray => {
            let total = weather_count(w.rho, inliers);
            let clusters = spec.spray_clusters();
            let n_clusters = clusters.len();
            let normal = StandardNormal;
            for (ci, c) in clusters.iter().enumerate() {
                let share = total / n_clusters + usize::from(ci < total % n_clusters);
                let mut made = 0;
                while made < share {
                    let local: [f64; 3] = [
                        c.sigma[0] * Distribution::<f64>::sample(&normal, &mut rng),
                        c.sigma[1] * Distribution::<f64>::sample(&normal, &mut rng),
                        c.sigma[2] * Distribution::<f64>::sample(&normal, &mut rng),
                    ];
                    let m2: f64 = (0..3).map(|a| (local[a] / c.sigma[a]).powi(2)).sum();
                    let off = to_world(local, c.yaw);
                    let world = [
                        c.center[0] + off[0],
                        c.center[1] + off[1],
                        c.center[2] + off[2],
                    ];
                    if m2 > TRUNCATION_SIGMAS * TRUNCATION_SIGMAS || world[2] < 0.02 {
                        continue;
                    }
                    let p = [world[0] - o[0], world[1] - o[1], world[2] - o[2]];
                    push(
                        &mut points,
                        &mut labels,
                        p,
                        weather_intensity(w.kind, &mut rng),
                        WEATHER,
                    );
                    made += 1;
                }
            }
        }
        WeatherKind::Snow => {
            let total = weather_count(w.rho, inliers);
            let radius = w.snow.radius;
            let mut made = 0;
            while made < total {
                // Planar density proportional to (1 - r / R); with the polar
                // area element the radial pdf is r (1 - r / R), maximum R / 4.
                let r = rng.random_range(0.0..radius);
                let accept = 4.0 * (r / radius) * (1.0 - r / radius);
                if rng.random::<f64>() >= accept || r < 1.0 {
                    continue;
                }
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(0.05..w.snow.height);
                let world = [o[0] + r * theta.cos(), o[1] + r * theta.sin(), z];
                let p = [world[0] - o[0], world[1] - o[1], world[2] - o[2]];
                push(
                    &mut points,
                    &mut labels,
                    p,
                    weather_intensity(w.kind, &mut rng),
                    WEATHER,
                );
                made += 1;
            }
        }
        WeatherKind::Fog | WeatherKind::None => {}
    }

    Ok(Scene {
        cloud: PointCloud::new(points)?,
        labels: LabelSet::new(labels, INLIER_CLASSES)?,
    })
}

/// Named scene families with seeded random layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// No weather.
    Clear,
    /// Vehicle spray, 5% of points.
    Spray,
    /// Snow scatter, 5% of points.
    Snow,
    /// Early fog returns on 5% of rays.
    Fog,
    /// Snow at 3% of points, the strongly imbalanced regime.
    WadsLike,
    /// Spray at 0.8% of points.
    SparseSpray,
}

impl Preset {
    pub fn weather(self) -> WeatherSpec {
        let (kind, rho) = match self {
            Preset::Clear => (WeatherKind::None, 0.0),
            Preset::Spray => (WeatherKind::Spray, 0.05),
            Preset::Snow => (WeatherKind::Snow, 0.05),
            Preset::Fog => (WeatherKind::Fog, 0.05),
            Preset::WadsLike => (WeatherKind::Snow, 0.03),
            Preset::SparseSpray => (WeatherKind::Spray, 0.008),
        };
        WeatherSpec {
            kind,
            rho,
            ..Default::default()
        }
    }

    /// A scene with a random highway-like layout: a straight road along x,
    /// barrier walls on both sides and two or three vehicles in three lanes.
    pub fn scene(self, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c41_594f_5554);
        let extent = 40.0;
        let mut walls = Vec::new();
        for side in [1.0, -1.0] {
            let y = side * rng.random_range(7.0..10.0);
            walls.push(Wall {
                start: [-extent, y],
                end: [extent, y],
                height: rng.random_range(1.0..3.0),
            });
        }
        let lanes = [-3.5, 0.0, 3.5];
        let count = rng.random_range(2..=3);
        let mut vehicles: Vec<VehicleBox> = Vec::new();
        while vehicles.len() < count {
            let lane = lanes[rng.random_range(0..lanes.len())];
            let sign = if rng.random_bool(0.6) { 1.0 } else { -1.0 };
            let x = sign * rng.random_range(7.0..28.0);
            let size = [
                rng.random_range(4.0..5.0),
                rng.random_range(1.8..2.1),
                rng.random_range(1.4..1.9),
            ];
            let clash = vehicles
                .iter()
                .any(|v| (v.center[1] - lane).abs() < 1.0 && (v.center[0] - x).abs() < 9.0);
            if clash {
                continue;
            }
            vehicles.push(VehicleBox {
                center: [x, lane + rng.random_range(-0.3..0.3)],
                size,
                yaw: rng.random_range(-0.05..0.05),
            });
        }
        SceneSpec {
            seed,
            ground_extent: extent,
            walls,
            vehicles,
            sensor: Sensor::default(),
            weather: self.weather(),
            range_noise: 0.01,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(Preset::Clear),
            "spray" => Ok(Preset::Spray),
            "snow" => Ok(Preset::Snow),
            "fog" => Ok(Preset::Fog),
            "wads-like" => Ok(Preset::WadsLike),
            "sparse-spray" => Ok(Preset::SparseSpray),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }
}

/// Seeded shuffle followed by a prefix split of `round(n * train_fraction)`
/// items.
pub fn split<T>(items: Vec<T>, train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    use rand::seq::SliceRandom;
    let mut items = items;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((items.len() as f64 * train_fraction).round() as usize).min(items.len());
    let test = items.split_off(n_train);
    Ok((items, test))
}
