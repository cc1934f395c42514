use lidar_energy::io::{labels_dir, scans_dir, split_path, write_labels, write_scan, Split};
use lidar_energy::synth::{generate, split};
use lidar_energy::{Error, Result};
use rayon::prelude::*;

use super::{create_dir, resolve_config, SimulateArgs};
use crate::manifest::RunManifest;

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:04}")
}

pub fn simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let cfg = resolve_config(&args.common)?;
    let out = &args.common.out;
    let mut manifest = RunManifest::start("simulate", cfg.hash(), cfg.seed, out);
    manifest.inputs.extend(args.common.config.clone());

    let specs = cfg.simulate.scene_specs(cfg.seed);
    let scenes = specs
        .par_iter()
        .map(generate)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Config(format!("scene generation: {e}")))?;

    create_dir(&scans_dir(out))?;
    create_dir(&labels_dir(out))?;
    let ids: Vec<String> = (0..scenes.len()).map(scene_id).collect();
    for (id, scene) in ids.iter().zip(&scenes) {
        write_scan(&scans_dir(out).join(format!("{id}.bin")), &scene.cloud)?;
        write_labels(&labels_dir(out).join(format!("{id}.label")), &scene.labels)?;
    }
    let specs_path = out.join("scenes.json");
    let text = serde_json::to_string_pretty(&specs).expect("specs serialize");
    std::fs::write(&specs_path, text + "\n").map_err(super::io_err(&specs_path))?;

    let s = &cfg.simulate;
    let n = ids.len();
    let (mut train, rest) = if n == 0 {
        (Vec::new(), Vec::new())
    } else {
        split(ids, s.train_fraction, cfg.seed)?
    };
    let n_cal = ((n as f64 * s.calibration_fraction).round() as usize).min(rest.len());
    let mut calibration = rest[..n_cal].to_vec();
    let mut test = rest[n_cal..].to_vec();
    train.sort();
    calibration.sort();
    test.sort();
    Split {
        train,
        calibration,
        test,
    }
    .save(&split_path(out))?;

    manifest.notes.insert("scenes".into(), n.to_string());
    manifest.finish()
}
