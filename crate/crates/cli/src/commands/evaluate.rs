use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use lidar_energy::io::{labels_dir, read_class_ids, read_labels, read_scores, ClassMap, ScoreRow};
use lidar_energy::metrics::{
    aupr, auroc, fpr_at_tpr, iou_per_class, precision_recall, ScoredLabels,
};
use lidar_energy::{Error, Result};

use super::score::{PREDICTIONS_DIR, SCORES_DIR};
use super::{create_dir, csv_err, data_dir, io_err, resolve_config, EvaluateArgs};
use crate::manifest::RunManifest;

pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_HEADER: [&str; 4] = ["metric", "value", "dataset", "config_hash"];
/// Value written for a metric that is undefined on the data.
pub const UNDEFINED: &str = "undefined";

/// One evaluated scan: dump rows, true classes and optional semantic
/// predictions.
pub struct EvaluatedScan {
    pub rows: Vec<ScoreRow>,
    pub truth: Vec<u32>,
    pub semantics: Option<Vec<u32>>,
}

/// Pooled metrics as `(name, value)` pairs; `None` marks undefined values.
pub fn pooled_metrics(
    scans: &[EvaluatedScan],
    map: &ClassMap,
    target_tpr: f64,
) -> Result<Vec<(String, Option<f64>)>> {
    let outlier = map.inlier_classes + 1;
    let truth: Vec<bool> = scans
        .iter()
        .flat_map(|s| s.truth.iter().map(|&c| c == outlier))
        .collect();
    let predicted: Vec<bool> = scans
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.decision.is_outlier()))
        .collect();
    let mut out: Vec<(String, Option<f64>)> = vec![
        ("points".into(), Some(truth.len() as f64)),
        (
            "outlier_points".into(),
            Some(truth.iter().filter(|&&t| t).count() as f64),
        ),
    ];

    let energies: Option<Vec<f64>> = scans
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.energy))
        .collect();
    if let Some(energies) = energies {
        let data = ScoredLabels::new(energies, truth.clone())?;
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        out.push(("auroc".into(), defined(auroc(&data))?));
        out.push(("aupr".into(), defined(aupr(&data))?));
        let name = if target_tpr == 0.95 {
            "fpr95".to_string()
        } else {
            format!("fpr_at_tpr_{target_tpr}")
        };
        out.push((name, defined(fpr_at_tpr(&data, target_tpr))?));
    }

    let (p, r) = precision_recall(&predicted, &truth)?;
    out.push(("precision".into(), p));
    out.push(("recall".into(), r));

    if scans.iter().all(|s| s.semantics.is_some()) && !scans.is_empty() {
        let pred: Vec<u32> = scans
            .iter()
            .flat_map(|s| s.semantics.as_ref().unwrap().iter().copied())
            .collect();
        let all_truth: Vec<u32> = scans.iter().flat_map(|s| s.truth.iter().copied()).collect();
        let iou = iou_per_class(&pred, &all_truth, outlier)?;
        for (c, v) in iou.per_class.iter().enumerate() {
            out.push((format!("iou_class_{}", c + 1), *v));
        }
        out.push(("miou".into(), iou.miou));
    }
    Ok(out)
}

fn dump_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<RunManifest> {
    let cfg = resolve_config(&args.common)?;
    let root = data_dir(&args.data, &cfg)?;
    let out = &args.common.out;
    create_dir(out)?;
    let hash = cfg.hash();
    let mut manifest = RunManifest::start("evaluate", hash.clone(), cfg.seed, out);
    manifest.inputs.extend(args.common.config.clone());
    manifest.inputs.push(root.clone());
    manifest.inputs.push(args.input.clone());

    let map = cfg.data.class_map.build()?;
    let scores_dir = args.input.join(SCORES_DIR);
    let pred_dir = args.input.join(PREDICTIONS_DIR);
    let ids = dump_ids(&scores_dir)?;
    let missing: Vec<&String> = ids
        .iter()
        .filter(|id| !labels_dir(&root).join(format!("{id}.label")).exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Consistency(format!(
            "no label file for scan(s): {}",
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    let mut scans = Vec::with_capacity(ids.len());
    for id in &ids {
        let rows = read_scores(&scores_dir.join(format!("{id}.csv")))?;
        let truth = read_labels(&labels_dir(&root).join(format!("{id}.label")), &map)?;
        if truth.len() != rows.len() {
            return Err(Error::Consistency(format!(
                "scan {id}: dump has {} rows, labels have {}",
                rows.len(),
                truth.len()
            )));
        }
        let pred_path = pred_dir.join(format!("{id}.label"));
        let semantics = if pred_path.exists() {
            let p = read_class_ids(&pred_path)?;
            if p.len() != rows.len() {
                return Err(Error::Consistency(format!(
                    "scan {id}: {} predictions for {} points",
                    p.len(),
                    rows.len()
                )));
            }
            Some(p)
        } else {
            None
        };
        scans.push(EvaluatedScan {
            rows,
            truth: truth.labels().to_vec(),
            semantics,
        });
    }

    let metrics = pooled_metrics(&scans, &map, cfg.evaluate.target_tpr)?;
    let dataset = cfg.data.name.clone().unwrap_or_else(|| {
        root.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| root.display().to_string())
    });
    let path = out.join(REPORT_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(REPORT_HEADER).map_err(csv_err(&path))?;
    for (name, value) in &metrics {
        let v = value
            .map(|v| v.to_string())
            .unwrap_or_else(|| UNDEFINED.to_string());
        w.write_record([name.as_str(), &v, &dataset, &hash])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    manifest.notes.insert("scans".into(), ids.len().to_string());
    manifest.finish()
}
