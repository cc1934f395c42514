//! Steps shared by the commands: loading scans, feature extraction,
//! training and scoring.

use std::path::Path;

use lidar_energy::energy::{point_energy_with, tau_for_inlier_tpr};
use lidar_energy::io::{scan_record, ClassMap, RunConfig};
use lidar_energy::model::{
    features_for, finetune, forward, initial_params, predict_semantics, pretrain_from, Checkpoint,
    FeatureNormalizer, FeatureParams, PointFeatures, TrainReport, TrainingScan, FEATURE_WIDTH,
};
use lidar_energy::{EnergyField, Error, LabelSet, PointCloud, Result, Threshold};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub struct LoadedScan {
    pub id: String,
    pub cloud: PointCloud,
    pub labels: Option<LabelSet>,
}

/// Reads the given scans from a dataset directory, in the order of `ids`.
pub fn load_scans(root: &Path, ids: &[String], map: &ClassMap) -> Result<Vec<LoadedScan>> {
    ids.par_iter()
        .map(|id| {
            let (cloud, labels) = scan_record(root, id).read(map)?;
            Ok(LoadedScan {
                id: id.clone(),
                cloud,
                labels,
            })
        })
        .collect()
}

/// Like [`load_scans`] but every scan must have a label file.
pub fn load_labelled(
    root: &Path,
    ids: &[String],
    map: &ClassMap,
) -> Result<Vec<(LoadedScan, LabelSet)>> {
    load_scans(root, ids, map)?
        .into_iter()
        .map(|mut s| match s.labels.take() {
            Some(l) => Ok((s, l)),
            None => Err(Error::Consistency(format!(
                "scan {} has no label file",
                s.id
            ))),
        })
        .collect()
}

/// Raw features; an empty cloud gives an empty feature matrix.
pub fn raw_features(cloud: &PointCloud, params: &FeatureParams) -> Result<PointFeatures> {
    if cloud.is_empty() {
        return PointFeatures::from_rows(Vec::new(), 0);
    }
    features_for(cloud, params)
}

pub fn raw_features_all(
    clouds: &[&PointCloud],
    params: &FeatureParams,
) -> Result<Vec<PointFeatures>> {
    clouds.par_iter().map(|c| raw_features(c, params)).collect()
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub pretrain: TrainReport,
    pub finetune: TrainReport,
}

const PRETRAIN_PICK_SALT: u64 = 0x5049_434b;

/// Indices of the scans used for pretraining: a seeded uniform sample of
/// `round(fraction * n)` scans, at least one.
pub fn pretrain_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ PRETRAIN_PICK_SALT));
    let take = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    let mut picked = idx[..take].to_vec();
    picked.sort_unstable();
    picked
}

/// Full training protocol on labelled raw features: fit the normalizer,
/// pretrain on the inlier points of a scan subset, then fine-tune on all
/// scans with the energy loss.
pub fn train_model(raw: &[(PointFeatures, LabelSet)], cfg: &RunConfig) -> Result<TrainOutcome> {
    let tc = &cfg.train;
    tc.validate()?;
    let normalizer = FeatureNormalizer::fit(raw.iter().map(|(f, _)| f))?;
    let scans: Vec<TrainingScan> = raw
        .iter()
        .map(|(f, l)| TrainingScan::new(normalizer.apply(f), l.clone()))
        .collect::<Result<_>>()?;
    let pre: Vec<TrainingScan> = pretrain_subset(scans.len(), tc.pretrain_fraction, tc.seed)
        .into_iter()
        .map(|i| scans[i].inliers_only())
        .collect();
    let init = initial_params(&scans, tc)?;
    let (params, pre_report) = pretrain_from(init, &pre, tc)?;
    let (params, ft_report) = finetune(&params, &scans, tc)?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(params, cfg.features, normalizer, tc.energy, tc.seed),
        pretrain: pre_report,
        finetune: ft_report,
    })
}

/// Energies and semantic predictions for one scan.
pub struct ScanScores {
    pub energies: EnergyField,
    pub semantics: Vec<u32>,
}

/// Energies only; used for calibration.
pub fn energies(ck: &Checkpoint, raw: &PointFeatures) -> Result<EnergyField> {
    if raw.rows() == 0 {
        return Ok(EnergyField(Vec::new()));
    }
    let logits = forward(&ck.normalizer.apply(raw), &ck.params)?;
    Ok(point_energy_with(&logits, ck.energy.include_abstention))
}

pub fn score(ck: &Checkpoint, raw: &PointFeatures, tau: Threshold) -> Result<ScanScores> {
    if raw.width() != FEATURE_WIDTH {
        return Err(Error::Version(format!(
            "features have {} channels, checkpoint expects {FEATURE_WIDTH}",
            raw.width()
        )));
    }
    if raw.rows() == 0 {
        return Ok(ScanScores {
            energies: EnergyField(Vec::new()),
            semantics: Vec::new(),
        });
    }
    let logits = forward(&ck.normalizer.apply(raw), &ck.params)?;
    let energies = point_energy_with(&logits, ck.energy.include_abstention);
    let semantics = predict_semantics(&logits, &energies, tau)?;
    Ok(ScanScores {
        energies,
        semantics,
    })
}

/// Threshold accepting `target` of the inlier points of the calibration
/// scans.
pub fn calibrate(
    ck: &Checkpoint,
    raw: &[(PointFeatures, LabelSet)],
    target: f64,
) -> Result<Threshold> {
    let per_scan: Vec<Vec<f64>> = raw
        .par_iter()
        .map(|(f, l)| {
            let e = energies(ck, f)?;
            Ok(e.0
                .iter()
                .zip(l.outlier_mask())
                .filter(|(_, out)| !out)
                .map(|(&v, _)| v)
                .collect())
        })
        .collect::<Result<_>>()?;
    let inliers: Vec<f64> = per_scan.into_iter().flatten().collect();
    tau_for_inlier_tpr(&inliers, target)
}
