//! On-disk formats.
//!
//! * `.bin` scans: consecutive records of four little-endian f32 values
//!   `x, y, z, intensity`, 16 bytes per point.
//! * `.label` files: one little-endian u32 per point; the lower 16 bits are
//!   the semantic id, mapped to classes through a [`ClassMap`].
//! * score dumps: CSV with header `point_index,energy,decision,label`.
//! * run configuration: TOML, see [`RunConfig`].
//! * dataset directories: `scans/<id>.bin`, `labels/<id>.label` and a
//!   `split.json` listing scan ids per split.

mod config;
mod labels;
mod scan;
mod scores;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    load_config, parse_config, ClassMapConfig, ClassMapPreset, DataConfig, EvaluateConfig,
    RunConfig, ScoreConfig, SimulateConfig,
};
pub use labels::{
    decode_labels, read_class_ids, read_labels, write_class_ids, write_labels, ClassMap,
    UnknownIdPolicy,
};
pub use scan::{decode_scan, encode_scan, read_scan, write_scan, POINT_BYTES};
pub use scores::{read_scores, write_scores, ScoreRow, SCORE_HEADER};

use crate::cloud::{LabelSet, PointCloud};
use crate::error::{Error, Result};

/// One scan of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanRecord {
    pub id: String,
    pub scan_path: PathBuf,
    pub label_path: Option<PathBuf>,
}

impl ScanRecord {
    pub fn read(&self, map: &ClassMap) -> Result<(PointCloud, Option<LabelSet>)> {
        let cloud = read_scan(&self.scan_path)?;
        let labels = match &self.label_path {
            Some(p) => {
                let l = read_labels(p, map)?;
                l.check_len(cloud.len()).map_err(|_| {
                    Error::Consistency(format!(
                        "scan {}: {} points but {} labels",
                        self.id,
                        cloud.len(),
                        l.len()
                    ))
                })?;
                Some(l)
            }
            None => None,
        };
        Ok((cloud, labels))
    }
}

/// Scan ids per split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub calibration: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn scans_dir(root: &Path) -> PathBuf {
    root.join("scans")
}

pub fn labels_dir(root: &Path) -> PathBuf {
    root.join("labels")
}

pub fn split_path(root: &Path) -> PathBuf {
    root.join("split.json")
}

/// Record for scan `id` under `root`; the label path is set when the file
/// exists.
pub fn scan_record(root: &Path, id: &str) -> ScanRecord {
    let label = labels_dir(root).join(format!("{id}.label"));
    ScanRecord {
        id: id.to_string(),
        scan_path: scans_dir(root).join(format!("{id}.bin")),
        label_path: label.exists().then_some(label),
    }
}

/// All scans under `root/scans`, sorted by id.
pub fn list_scans(root: &Path) -> Result<Vec<ScanRecord>> {
    let dir = scans_dir(root);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids.iter().map(|id| scan_record(root, id)).collect())
}
