use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::labels::{ClassMap, UnknownIdPolicy};
use crate::error::{Error, Result};
use crate::filters::FilterConfig;
use crate::model::{FeatureParams, TrainConfig};
use crate::synth::{Preset, SceneSpec};

/// Which built-in class map to start from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassMapPreset {
    #[default]
    Identity,
    SemanticSpray,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassMapConfig {
    pub preset: ClassMapPreset,
    /// Overrides or additions: raw id (as a string key) to class.
    pub ids: BTreeMap<String, u32>,
    pub unknown: UnknownIdPolicy,
}

impl ClassMapConfig {
    pub fn build(&self) -> Result<ClassMap> {
        let base = match self.preset {
            ClassMapPreset::Identity => ClassMap::identity(),
            ClassMapPreset::SemanticSpray => ClassMap::semantic_spray_guess(),
        };
        let mut ids = base.ids;
        for (k, &v) in &self.ids {
            let raw: u16 = k
                .parse()
                .map_err(|_| Error::Config(format!("class map key {k:?} is not a u16")))?;
            ids.insert(raw, v);
        }
        ClassMap::new(base.inlier_classes, ids, self.unknown)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset root with `scans/`, `labels/` and `split.json`.
    pub dir: Option<PathBuf>,
    pub class_map: ClassMapConfig,
    /// Name written in the dataset column of metric reports.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub preset: Preset,
    pub scenes: usize,
    /// Overrides the preset's weather fraction.
    pub rho: Option<f64>,
    /// Overrides the sensor azimuth step, degrees.
    pub azimuth_resolution_deg: Option<f64>,
    pub train_fraction: f64,
    pub calibration_fraction: f64,
    /// Explicit scene list; when non-empty it replaces the preset.
    pub specs: Vec<SceneSpec>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            preset: Preset::Spray,
            scenes: 20,
            rho: None,
            azimuth_resolution_deg: None,
            train_fraction: 0.6,
            calibration_fraction: 0.2,
            specs: Vec::new(),
        }
    }
}

impl SimulateConfig {
    /// Scene specs for a run; scene `i` of a preset uses seed `seed + i`.
    pub fn scene_specs(&self, seed: u64) -> Vec<SceneSpec> {
        if !self.specs.is_empty() {
            return self.specs.clone();
        }
        (0..self.scenes as u64)
            .map(|i| {
                let mut spec = self.preset.scene(seed.wrapping_add(i));
                if let Some(rho) = self.rho {
                    spec.weather.rho = rho;
                }
                if let Some(deg) = self.azimuth_resolution_deg {
                    spec.sensor.azimuth_resolution = deg.to_radians();
                }
                spec
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    /// Fixed threshold; when absent it is calibrated on the calibration split.
    pub tau: Option<f64>,
    pub target_tpr: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            tau: None,
            target_tpr: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// TPR used for the FPR-at-TPR row.
    pub target_tpr: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { target_tpr: 0.95 }
    }
}

/// The full run configuration. Every section and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub features: FeatureParams,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub filter: FilterConfig,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.features.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        self.filter.validate().map_err(cfg)?;
        self.data.class_map.build()?;
        let s = &self.simulate;
        if !(s.train_fraction > 0.0
            && s.calibration_fraction >= 0.0
            && s.train_fraction + s.calibration_fraction < 1.0)
        {
            return Err(Error::Config(
                "simulate fractions must be positive and leave room for a test split".into(),
            ));
        }
        if let Some(rho) = s.rho {
            if !(0.0..=0.5).contains(&rho) {
                return Err(Error::Config(format!(
                    "simulate.rho {rho} outside [0, 0.5]"
                )));
            }
        }
        if let Some(tau) = self.score.tau {
            if !tau.is_finite() {
                return Err(Error::Config("score.tau must be finite".into()));
            }
        }
        for t in [self.score.target_tpr, self.evaluate.target_tpr] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("target TPR {t} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a TOML run configuration, applying defaults for missing keys and
/// rejecting unknown ones.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
