use std::fs::File;
use std::io::BufWriter;

use lidar_energy::model::PointFeatures;
use lidar_energy::{LabelSet, Result};

use super::{create_dir, csv_err, data_dir, resolve_config, split_ids, SplitName, TrainArgs};
use crate::manifest::RunManifest;
use crate::pipeline::{load_labelled, raw_features_all, train_model};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn train(args: &TrainArgs) -> Result<RunManifest> {
    let cfg = resolve_config(&args.common)?;
    let root = data_dir(&args.data, &cfg)?;
    let out = &args.common.out;
    create_dir(out)?;
    let mut manifest = RunManifest::start("train", cfg.hash(), cfg.seed, out);
    manifest.inputs.extend(args.common.config.clone());
    manifest.inputs.push(root.clone());

    let map = cfg.data.class_map.build()?;
    let ids = split_ids(&root, SplitName::Train)?;
    let scans = load_labelled(&root, &ids, &map)?;
    let clouds: Vec<_> = scans.iter().map(|(s, _)| &s.cloud).collect();
    let feats = raw_features_all(&clouds, &cfg.features)?;
    let raw: Vec<(PointFeatures, LabelSet)> = feats
        .into_iter()
        .zip(scans.into_iter().map(|(_, l)| l))
        .collect();

    let outcome = train_model(&raw, &cfg)?;
    outcome.checkpoint.save(&out.join(CHECKPOINT_FILE))?;

    let log_path = out.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(super::io_err(&log_path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = csv_err(&log_path);
    w.write_record([
        "phase",
        "epoch",
        "loss",
        "mean_inlier_energy",
        "mean_outlier_energy",
    ])
    .map_err(&err)?;
    for (phase, report) in [
        ("pretrain", &outcome.pretrain),
        ("finetune", &outcome.finetune),
    ] {
        for e in &report.epochs {
            w.write_record([
                phase.to_string(),
                e.epoch.to_string(),
                e.loss.to_string(),
                opt(e.mean_inlier_energy),
                opt(e.mean_outlier_energy),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(super::io_err(&log_path))?;

    manifest
        .notes
        .insert("train_scans".into(), ids.len().to_string());
    if let Some(gap) = outcome.finetune.last().and_then(|e| e.energy_gap()) {
        manifest
            .notes
            .insert("final_energy_gap".into(), gap.to_string());
    }
    manifest.finish()
}
