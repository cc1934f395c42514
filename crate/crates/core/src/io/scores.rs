use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::energy::Decision;
use crate::error::{Error, Result};

pub const SCORE_HEADER: [&str; 4] = ["point_index", "energy", "decision", "label"];

/// One row of a score dump. Filter dumps carry no energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub point_index: usize,
    pub energy: Option<f64>,
    pub decision: Decision,
    pub label: Option<u32>,
}

fn decision_str(d: Decision) -> &'static str {
    match d {
        Decision::Inlier => "inlier",
        Decision::Outlier => "outlier",
    }
}

/// Writes a per-point CSV dump. Energies use the shortest representation
/// that parses back to the same double.
pub fn write_scores(
    path: &Path,
    energies: Option<&[f64]>,
    decisions: &[Decision],
    labels: Option<&[u32]>,
) -> Result<()> {
    let n = decisions.len();
    if energies.is_some_and(|e| e.len() != n) || labels.is_some_and(|l| l.len() != n) {
        return Err(Error::Consistency(format!(
            "score dump columns differ in length ({n} decisions)"
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(SCORE_HEADER).map_err(csv_err)?;
    for i in 0..n {
        let energy = energies.map(|e| e[i].to_string()).unwrap_or_default();
        let label = labels.map(|l| l[i].to_string()).unwrap_or_default();
        w.write_record([
            i.to_string().as_str(),
            &energy,
            decision_str(decisions[i]),
            &label,
        ])
        .map_err(csv_err)?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    let header = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if header.iter().ne(SCORE_HEADER) {
        return Err(Error::format(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let bad = |what: &str| Error::format(path, format!("line {}: bad {what}", line + 2));
        let point_index = rec[0].parse().map_err(|_| bad("point_index"))?;
        if point_index != rows.len() {
            return Err(bad("point_index order"));
        }
        let energy = match &rec[1] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("energy"))?),
        };
        let decision = match &rec[2] {
            "inlier" => Decision::Inlier,
            "outlier" => Decision::Outlier,
            _ => return Err(bad("decision")),
        };
        let label = match &rec[3] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("label"))?),
        };
        rows.push(ScoreRow {
            point_index,
            energy,
            decision,
            label,
        });
    }
    Ok(rows)
}
