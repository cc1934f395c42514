use lidar_energy::filters;
use lidar_energy::io::write_scores;
use lidar_energy::Result;
use rayon::prelude::*;

use super::score::SCORES_DIR;
use super::{create_dir, data_dir, resolve_config, split_ids, FilterArgs};
use crate::manifest::RunManifest;
use crate::pipeline::load_scans;

pub fn filter(args: &FilterArgs) -> Result<RunManifest> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(v) = args.variant {
        cfg.filter.variant = v;
    }
    let root = data_dir(&args.data, &cfg)?;
    let out = &args.common.out;
    create_dir(&out.join(SCORES_DIR))?;
    let mut manifest = RunManifest::start("filter", cfg.hash(), cfg.seed, out);
    manifest.inputs.extend(args.common.config.clone());
    manifest.inputs.push(root.clone());

    let map = cfg.data.class_map.build()?;
    let ids = split_ids(&root, args.split)?;
    let scans = load_scans(&root, &ids, &map)?;
    let decisions = scans
        .par_iter()
        .map(|s| {
            if s.cloud.is_empty() {
                Ok(Vec::new())
            } else {
                filters::run(&s.cloud, &cfg.filter)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    for (s, d) in scans.iter().zip(&decisions) {
        write_scores(
            &out.join(SCORES_DIR).join(format!("{}.csv", s.id)),
            None,
            d,
            s.labels.as_ref().map(|l| l.labels()),
        )?;
    }
    manifest
        .notes
        .insert("variant".into(), cfg.filter.variant.to_string());
    manifest
        .notes
        .insert("filtered_scans".into(), ids.len().to_string());
    manifest.finish()
}
