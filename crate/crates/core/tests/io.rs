use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lidar_energy::energy::Decision;
use lidar_energy::io::*;
use lidar_energy::{Error, LabelSet, Point, PointCloud};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn le_floats(vals: &[f32]) -> Vec<u8> {
    vals.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn two_point_scan_decodes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    fs::write(&path, le_floats(&[1.0, 2.0, 3.0, 0.5, 4.0, 5.0, 6.0, 1.0])).unwrap();
    let cloud = read_scan(&path).unwrap();
    assert_eq!(
        cloud.points(),
        &[
            Point::new(1.0, 2.0, 3.0, 0.5),
            Point::new(4.0, 5.0, 6.0, 1.0)
        ]
    );
}

#[test]
fn empty_scan_file_is_empty_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.bin");
    fs::write(&path, b"").unwrap();
    assert!(read_scan(&path).unwrap().is_empty());
}

#[test]
fn truncated_scan_reports_offset() {
    let mut bytes = le_floats(&[1.0, 2.0, 3.0, 0.5]);
    bytes.extend_from_slice(&[0, 0, 0]);
    let err = decode_scan(&bytes, Path::new("t.bin")).unwrap_err();
    match err {
        Error::Format { msg, .. } => assert!(msg.contains("byte offset 16"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_finite_scan_value_reports_point() {
    let bytes = le_floats(&[1.0, 2.0, 3.0, 0.5, 0.0, f32::NAN, 0.0, 0.0]);
    let err = decode_scan(&bytes, Path::new("n.bin")).unwrap_err();
    match err {
        Error::Format { msg, .. } => assert!(msg.contains("point 1"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn intensity_is_clamped_on_read() {
    let bytes = le_floats(&[0.0, 0.0, 0.0, 7.5, 0.0, 0.0, 0.0, -1.0]);
    let cloud = decode_scan(&bytes, Path::new("c.bin")).unwrap();
    assert_eq!(cloud[0].intensity, 1.0);
    assert_eq!(cloud[1].intensity, 0.0);
}

#[test]
fn scan_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Point> = (0..1000)
        .map(|_| {
            Point::new(
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-3.0..8.0),
                rng.random_range(0.0..1.0),
            )
        })
        .collect();
    let cloud = PointCloud::new(points).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.bin");
    write_scan(&path, &cloud).unwrap();
    let back = read_scan(&path).unwrap();
    for (a, b) in cloud.iter().zip(back.iter()) {
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert_eq!(a.z.to_bits(), b.z.to_bits());
        assert_eq!(a.intensity.to_bits(), b.intensity.to_bits());
    }
    assert_eq!(fs::read(&path).unwrap(), encode_scan(&back));
}

fn words(ids: &[u32]) -> Vec<u8> {
    ids.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn semantic_spray_style_map_gives_three_classes() {
    let map = ClassMap::semantic_spray_guess();
    // Upper 16 bits carry instance ids and are ignored.
    let raw = [0u32, 1, 2, 0x0005_0001, 0x0001_0002, 0];
    let labels = decode_labels(&words(&raw), Path::new("l.label"), &map).unwrap();
    assert_eq!(labels.labels(), &[1, 2, 3, 2, 3, 1]);
    assert_eq!(labels.outlier_count(), 2);
}

#[test]
fn all_zero_labels_map_to_background() {
    let ids: BTreeMap<u16, u32> = [(0, 1)].into_iter().collect();
    let map = ClassMap::new(2, ids, UnknownIdPolicy::Error).unwrap();
    let labels = decode_labels(&words(&[0; 7]), Path::new("z.label"), &map).unwrap();
    assert!(labels.labels().iter().all(|&l| l == 1));
}

#[test]
fn unknown_ids_follow_policy() {
    let mut map = ClassMap::identity();
    let err = decode_labels(&words(&[1, 9]), Path::new("u.label"), &map).unwrap_err();
    assert!(
        matches!(err, Error::Format { ref msg, .. } if msg.contains("point 1")),
        "{err}"
    );
    map.unknown = UnknownIdPolicy::Background;
    let labels = decode_labels(&words(&[1, 9]), Path::new("u.label"), &map).unwrap();
    assert_eq!(labels.labels(), &[1, 1]);
}

#[test]
fn truncated_label_file_rejected() {
    let err = decode_labels(
        &[1, 0, 0, 0, 2],
        Path::new("t.label"),
        &ClassMap::identity(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Format { ref msg, .. } if msg.contains("byte offset 4")));
}

#[test]
fn label_length_mismatch_is_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(scans_dir(root)).unwrap();
    fs::create_dir_all(labels_dir(root)).unwrap();
    let cloud = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0, 0.1); 3]).unwrap();
    write_scan(&scans_dir(root).join("s.bin"), &cloud).unwrap();
    write_labels(
        &labels_dir(root).join("s.label"),
        &LabelSet::new(vec![1, 2], 2).unwrap(),
    )
    .unwrap();
    let rec = scan_record(root, "s");
    assert!(matches!(
        rec.read(&ClassMap::identity()),
        Err(Error::Consistency(_))
    ));
}

#[test]
fn label_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels = LabelSet::new((0..500).map(|_| rng.random_range(1..=3)).collect(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.label");
    write_labels(&path, &labels).unwrap();
    assert_eq!(read_labels(&path, &ClassMap::identity()).unwrap(), labels);
}

#[test]
fn three_point_dump_has_four_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let d = [Decision::Inlier, Decision::Outlier, Decision::Inlier];
    write_scores(&path, Some(&[-1.0, 2.0, -3.5]), &d, Some(&[1, 3, 2])).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "point_index,energy,decision,label");
    assert_eq!(lines[2], "1,2,outlier,3");
}

#[test]
fn dump_without_labels_has_empty_label_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_scores(&path, Some(&[0.25]), &[Decision::Inlier], None).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1), Some("0,0.25,inlier,"));
    let rows = read_scores(&path).unwrap();
    assert_eq!(rows[0].label, None);
}

#[test]
fn dump_length_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let err = write_scores(&path, Some(&[0.0, 1.0]), &[Decision::Inlier], None).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)));
}

proptest! {
    #[test]
    fn dump_energies_round_trip(energies in prop::collection::vec(-1e6f64..1e6, 0..60)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let d: Vec<Decision> = energies
            .iter()
            .map(|&e| if e > 0.0 { Decision::Outlier } else { Decision::Inlier })
            .collect();
        write_scores(&path, Some(&energies), &d, None).unwrap();
        let rows = read_scores(&path).unwrap();
        prop_assert_eq!(rows.len(), energies.len());
        for (r, &e) in rows.iter().zip(&energies) {
            let back = r.energy.unwrap();
            prop_assert!((back - e).abs() <= 1e-9);
            prop_assert_eq!(back.to_bits(), e.to_bits());
        }
    }
}

#[test]
fn paper_margins_from_config() {
    let cfg = parse_config(
        "[train.energy]\nm_in = -5.0\nm_out = 5.0\nlambda = 0.1\n",
        Path::new("c.toml"),
    )
    .unwrap();
    assert_eq!(cfg.train.energy.m_in, -5.0);
    assert_eq!(cfg.train.energy.m_out, 5.0);
    assert_eq!(cfg.train.energy.lambda, 0.1);
}

#[test]
fn empty_config_is_all_defaults() {
    let cfg = parse_config("", Path::new("c.toml")).unwrap();
    assert_eq!(cfg, RunConfig::default());
    cfg.validate().unwrap();
}

#[test]
fn misspelled_key_rejected_with_line() {
    let err = parse_config(
        "seed = 1\n[train]\nlearning_rat = 0.1\n",
        Path::new("c.toml"),
    )
    .unwrap_err();
    match err {
        Error::Config(msg) => {
            assert!(msg.contains("learning_rat"), "{msg}");
            assert!(msg.contains("line 3"), "{msg}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_values_rejected() {
    for text in [
        "[train.energy]\nm_in = 5.0\nm_out = -5.0\n",
        "[simulate]\nrho = 0.7\n",
        "[score]\ntarget_tpr = 1.5\n",
        "[data.class_map.ids]\n\"x\" = 1\n",
    ] {
        assert!(
            matches!(
                parse_config(text, Path::new("c.toml")),
                Err(Error::Config(_))
            ),
            "{text}"
        );
    }
}

#[test]
fn config_hash_ignores_key_order() {
    let a = parse_config(
        "seed = 4\n[train]\nepochs_pretrain = 2\nlearning_rate = 0.01\n",
        Path::new("a"),
    )
    .unwrap();
    let b = parse_config(
        "[train]\nlearning_rate = 0.01\nepochs_pretrain = 2\n\n[simulate]\n",
        Path::new("b"),
    )
    .map(|mut c| {
        c.seed = 4;
        c
    })
    .unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = parse_config(
        "seed = 5\n[train]\nepochs_pretrain = 2\nlearning_rate = 0.01\n",
        Path::new("c"),
    )
    .unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn load_config_reads_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "seed = 11\n[filter]\nvariant = \"sor\"\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(
        cfg.filter.variant,
        lidar_energy::filters::FilterVariant::Sor
    );
    assert!(matches!(
        load_config(&dir.path().join("missing.toml")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn split_file_round_trip_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(scans_dir(root)).unwrap();
    for id in ["b", "a", "c"] {
        write_scan(
            &scans_dir(root).join(format!("{id}.bin")),
            &PointCloud::empty(),
        )
        .unwrap();
    }
    let ids: Vec<String> = list_scans(root)
        .unwrap()
        .into_iter()
        .map(|r| r.id)
        .collect();
    assert_eq!(ids, ["a", "b", "c"]);
    let split = Split {
        train: vec!["a".into()],
        calibration: vec!["b".into()],
        test: vec!["c".into()],
    };
    split.save(&split_path(root)).unwrap();
    assert_eq!(Split::load(&split_path(root)).unwrap(), split);
}
