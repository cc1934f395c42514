use lidar_energy::energy::classify;
use lidar_energy::io::{write_class_ids, write_scores};
use lidar_energy::model::{Checkpoint, PointFeatures};
use lidar_energy::{Error, LabelSet, Result, Threshold};
use rayon::prelude::*;

use super::{create_dir, data_dir, resolve_config, split_ids, ScoreArgs, SplitName};
use crate::manifest::RunManifest;
use crate::pipeline::{
    calibrate, load_labelled, load_scans, raw_features, raw_features_all, score as score_scan,
};

pub const SCORES_DIR: &str = "scores";
pub const PREDICTIONS_DIR: &str = "predictions";

pub fn score(args: &ScoreArgs) -> Result<RunManifest> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(t) = args.tau {
        cfg.score.tau = Some(t);
    }
    cfg.validate()?;
    let root = data_dir(&args.data, &cfg)?;
    let out = &args.common.out;
    create_dir(&out.join(SCORES_DIR))?;
    create_dir(&out.join(PREDICTIONS_DIR))?;
    let mut manifest = RunManifest::start("score", cfg.hash(), cfg.seed, out);
    manifest.inputs.extend(args.common.config.clone());
    manifest.inputs.push(root.clone());
    manifest.inputs.push(args.checkpoint.clone());

    let ck = Checkpoint::load(&args.checkpoint)?;
    let map = cfg.data.class_map.build()?;
    if ck.params.layout.inlier_classes as u32 != map.inlier_classes {
        return Err(Error::Version(format!(
            "checkpoint has {} inlier classes, class map has {}",
            ck.params.layout.inlier_classes, map.inlier_classes
        )));
    }

    let tau = match cfg.score.tau {
        Some(t) => {
            manifest
                .notes
                .insert("tau_source".into(), "explicit".into());
            Threshold(t)
        }
        None => {
            let ids = split_ids(&root, SplitName::Calibration)?;
            if ids.is_empty() {
                return Err(Error::Config(
                    "no tau given and the dataset has no calibration split".into(),
                ));
            }
            let scans = load_labelled(&root, &ids, &map)?;
            let clouds: Vec<_> = scans.iter().map(|(s, _)| &s.cloud).collect();
            let feats = raw_features_all(&clouds, &ck.features)?;
            let raw: Vec<(PointFeatures, LabelSet)> = feats
                .into_iter()
                .zip(scans.into_iter().map(|(_, l)| l))
                .collect();
            let tau = calibrate(&ck, &raw, cfg.score.target_tpr)?;
            manifest
                .notes
                .insert("tau_source".into(), "calibration".into());
            manifest.notes.insert(
                "calibration_target_tpr".into(),
                cfg.score.target_tpr.to_string(),
            );
            tau
        }
    };
    manifest.notes.insert("tau".into(), tau.0.to_string());

    let ids = split_ids(&root, args.split)?;
    let scans = load_scans(&root, &ids, &map)?;
    let results = scans
        .par_iter()
        .map(|s| {
            let raw = raw_features(&s.cloud, &ck.features)?;
            score_scan(&ck, &raw, tau)
        })
        .collect::<Result<Vec<_>>>()?;
    for (s, r) in scans.iter().zip(&results) {
        let decisions = classify(&r.energies, tau);
        write_scores(
            &out.join(SCORES_DIR).join(format!("{}.csv", s.id)),
            Some(&r.energies.0),
            &decisions,
            s.labels.as_ref().map(|l| l.labels()),
        )?;
        write_class_ids(
            &out.join(PREDICTIONS_DIR).join(format!("{}.label", s.id)),
            &r.semantics,
        )?;
    }
    manifest
        .notes
        .insert("scored_scans".into(), ids.len().to_string());
    manifest.finish()
}
