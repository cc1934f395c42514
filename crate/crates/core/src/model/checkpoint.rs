use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureNormalizer, FeatureParams, FEATURE_WIDTH};
use super::network::ModelParams;
use crate::energy::EnergyLossConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "lidar-energy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to score a scan: parameters, feature settings and
/// normalization, and the energy configuration used in training.
///
/// Serialized as JSON. Floats are written in shortest round-trip form, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: ModelParams,
    pub features: FeatureParams,
    pub normalizer: FeatureNormalizer,
    pub energy: EnergyLossConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        features: FeatureParams,
        normalizer: FeatureNormalizer,
        energy: EnergyLossConfig,
        seed: u64,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params,
            features,
            normalizer,
            energy,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Version(format!("unreadable checkpoint: {e}")))?;
        ck.check()?;
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Version(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version(format!(
                "checkpoint version {} (supported: {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.params.layout.input != FEATURE_WIDTH
            || self.normalizer.mean.len() != FEATURE_WIDTH
            || self.normalizer.std.len() != FEATURE_WIDTH
        {
            return Err(Error::Version(format!(
                "checkpoint expects {} input channels, this build extracts {FEATURE_WIDTH}",
                self.params.layout.input
            )));
        }
        if self.params.theta.len() != self.params.layout.param_count() {
            return Err(Error::Version(
                "parameter count does not match layout".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
