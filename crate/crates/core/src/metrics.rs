//! Detection and segmentation metrics. Outliers are the positive class
//! throughout, and a higher score means more outlier-like.

use crate::error::{Error, Result};

/// Scores paired with binary ground truth (`true` = outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    positive: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, positive: Vec<bool>) -> Result<Self> {
        if scores.len() != positive.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                positive.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("NaN score"));
        }
        Ok(ScoredLabels { scores, positive })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn positive(&self) -> &[bool] {
        &self.positive
    }

    pub fn positives(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Appends another set, as when pooling points across scans.
    pub fn extend(&mut self, other: &ScoredLabels) {
        self.scores.extend_from_slice(&other.scores);
        self.positive.extend_from_slice(&other.positive);
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let p = self.positives();
        let n = self.negatives();
        if p == 0 || n == 0 {
            return Err(Error::UndefinedMetric(format!(
                "needs positives and negatives, got {p} and {n}"
            )));
        }
        Ok((p, n))
    }

    /// Cumulative `(tp, fp)` after admitting each distinct score, highest
    /// first. Tied scores enter together.
    fn sweep(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        let mut i = 0;
        while i < order.len() {
            let s = self.scores[order[i]];
            while i < order.len() && self.scores[order[i]] == s {
                if self.positive[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            out.push((tp, fp));
        }
        out
    }
}

/// Area under the ROC curve, computed as the Mann-Whitney statistic with
/// ties worth one half.
pub fn auroc(data: &ScoredLabels) -> Result<f64> {
    let (p, n) = data.require_both()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    // Twice the positive rank sum, so tied average ranks stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = data.scores[order[i]];
        let mut j = i;
        while j < order.len() && data.scores[order[j]] == s {
            j += 1;
        }
        // Ranks i+1..=j share the average (i + 1 + j) / 2.
        let twice_avg = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&o| data.positive[o]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j;
    }
    let p128 = p as u128;
    let twice_u = twice_rank_sum - p128 * (p128 + 1);
    Ok(twice_u as f64 / 2.0 / (p as f64 * n as f64))
}

/// Area under the precision-recall curve by step-wise summation over the
/// distinct thresholds: `sum (R_t - R_{t-1}) * P_t`.
pub fn aupr(data: &ScoredLabels) -> Result<f64> {
    let p = data.positives();
    if p == 0 {
        return Err(Error::UndefinedMetric("no positives".into()));
    }
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in data.sweep() {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            area += (tp - prev_tp) as f64 / p as f64 * precision;
        }
        prev_tp = tp;
    }
    Ok(area)
}

/// False positive rate at the first threshold, sweeping from high to low,
/// whose true positive rate reaches `tpr_target`.
pub fn fpr_at_tpr(data: &ScoredLabels, tpr_target: f64) -> Result<f64> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::invalid(format!(
            "target TPR must lie in (0, 1], got {tpr_target}"
        )));
    }
    let (p, n) = data.require_both()?;
    for (tp, fp) in data.sweep() {
        if tp as f64 / p as f64 >= tpr_target {
            return Ok(fp as f64 / n as f64);
        }
    }
    unreachable!("the last threshold admits every positive")
}

/// FPR at 95% TPR.
pub fn fpr95(data: &ScoredLabels) -> Result<f64> {
    fpr_at_tpr(data, 0.95)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Counts from predicted and true outlier flags.
    pub fn from_flags(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::invalid(format!(
                "{} predictions but {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no true positives to find.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// `(precision, recall)` with outliers positive; 0/0 is `None`.
pub fn precision_recall(predicted: &[bool], truth: &[bool]) -> Result<(Option<f64>, Option<f64>)> {
    let c = ConfusionCounts::from_flags(predicted, truth)?;
    Ok((c.precision(), c.recall()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// IoU of classes `1..=class_count`; `None` for classes absent from both
    /// prediction and truth.
    pub per_class: Vec<Option<f64>>,
    /// Mean over present classes.
    pub miou: Option<f64>,
}

/// Per-class intersection over union for class ids `1..=class_count`.
pub fn iou_per_class(pred: &[u32], truth: &[u32], class_count: u32) -> Result<IouReport> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let c = class_count as usize;
    let mut inter = vec![0usize; c];
    let mut union = vec![0usize; c];
    for (&p, &t) in pred.iter().zip(truth) {
        let in_range = |v: u32| (1..=class_count).contains(&v);
        if in_range(p) && p == t {
            inter[p as usize - 1] += 1;
            union[p as usize - 1] += 1;
            continue;
        }
        if in_range(p) {
            union[p as usize - 1] += 1;
        }
        if in_range(t) {
            union[t as usize - 1] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = inter
        .iter()
        .zip(&union)
        .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(IouReport { per_class, miou })
}
