use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::LabelSet;
use crate::error::{Error, Result};

/// What to do with a raw semantic id missing from the class map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownIdPolicy {
    #[default]
    Error,
    /// Map to inlier class 1.
    Background,
}

/// Mapping from raw semantic ids (lower 16 bits of a label word) to classes
/// `1..=inlier_classes` or the outlier class `inlier_classes + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub inlier_classes: u32,
    pub ids: BTreeMap<u16, u32>,
    pub unknown: UnknownIdPolicy,
}

impl ClassMap {
    pub fn new(
        inlier_classes: u32,
        ids: BTreeMap<u16, u32>,
        unknown: UnknownIdPolicy,
    ) -> Result<Self> {
        if inlier_classes == 0 {
            return Err(Error::invalid("class map needs at least one inlier class"));
        }
        for (&raw, &class) in &ids {
            if class == 0 || class > inlier_classes + 1 {
                return Err(Error::invalid(format!(
                    "raw id {raw} maps to class {class}, outside 1..={}",
                    inlier_classes + 1
                )));
            }
        }
        Ok(ClassMap {
            inlier_classes,
            ids,
            unknown,
        })
    }

    /// Raw ids equal class ids: background 1, vehicle 2, weather 3. This is
    /// what the synthetic generator writes.
    pub fn identity() -> Self {
        let ids = (1..=3u16).map(|c| (c, c as u32)).collect();
        ClassMap::new(2, ids, UnknownIdPolicy::Error).unwrap()
    }

    /// Best guess for SemanticSpray-style label files: 0 background,
    /// 1 vehicle (foreground), 2 spray. Not verified against the dataset
    /// toolkit; supply an explicit map for real data.
    pub fn semantic_spray_guess() -> Self {
        let ids = [(0u16, 1u32), (1, 2), (2, 3)].into_iter().collect();
        ClassMap::new(2, ids, UnknownIdPolicy::Error).unwrap()
    }

    pub fn map(&self, raw: u32) -> Option<u32> {
        let id = (raw & 0xffff) as u16;
        match self.ids.get(&id) {
            Some(&c) => Some(c),
            None => match self.unknown {
                UnknownIdPolicy::Error => None,
                UnknownIdPolicy::Background => Some(1),
            },
        }
    }
}

pub fn decode_labels(bytes: &[u8], path: &Path, map: &ClassMap) -> Result<LabelSet> {
    if !bytes.len().is_multiple_of(4) {
        let offset = bytes.len() - bytes.len() % 4;
        return Err(Error::format(
            path,
            format!("truncated label word at byte offset {offset}"),
        ));
    }
    let mut labels = Vec::with_capacity(bytes.len() / 4);
    for (i, w) in bytes.chunks_exact(4).enumerate() {
        let raw = u32::from_le_bytes(w.try_into().unwrap());
        let class = map.map(raw).ok_or_else(|| {
            Error::format(
                path,
                format!("unknown semantic id {} at point {i}", raw & 0xffff),
            )
        })?;
        labels.push(class);
    }
    LabelSet::new(labels, map.inlier_classes)
}

/// Reads a `.label` file of little-endian u32 words.
pub fn read_labels(path: &Path, map: &ClassMap) -> Result<LabelSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, path, map)
}

/// Writes class ids as raw words; reading back with [`ClassMap::identity`]
/// (or any map sending each id to itself) reproduces the set.
pub fn write_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    let mut out = Vec::with_capacity(labels.len() * 4);
    for &l in labels.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes raw u32 class words, used for semantic predictions.
pub fn write_class_ids(path: &Path, ids: &[u32]) -> Result<()> {
    let out: Vec<u8> = ids.iter().flat_map(|l| l.to_le_bytes()).collect();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_class_ids(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            path,
            format!(
                "truncated label word at byte offset {}",
                bytes.len() - bytes.len() % 4
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| u32::from_le_bytes(w.try_into().unwrap()))
        .collect())
}
