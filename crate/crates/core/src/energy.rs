//! Point energy scores, the hinge energy loss with count weighting, the
//! classification NLL term, and the thresholded decision rule.
//!
//! The energy of a point is the negative log-sum-exp of its inlier-class
//! logits. Training pushes inlier energies below `m_in` and outlier
//! energies above `m_out`; at inference a single threshold separates them.

use serde::{Deserialize, Serialize};

use crate::cloud::LabelSet;
use crate::error::{Error, Result};

/// Row-major `N x C` classifier outputs. The first `K` columns are the
/// inlier-class logits; `C` is either `K` or `K + 1`, the extra column
/// being the abstention logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitField {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    inlier_classes: usize,
}

impl LogitField {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize, inlier_classes: usize) -> Result<Self> {
        if inlier_classes == 0 {
            return Err(Error::invalid(
                "a logit field needs at least one inlier class",
            ));
        }
        if cols != inlier_classes && cols != inlier_classes + 1 {
            return Err(Error::invalid(format!(
                "{cols} columns incompatible with {inlier_classes} inlier classes"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values for a {rows}x{cols} field",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite logit at row {}",
                i / cols.max(1)
            )));
        }
        Ok(LogitField {
            values,
            rows,
            cols,
            inlier_classes,
        })
    }

    /// A field with an abstention column: `cols = K + 1`.
    pub fn with_abstention(values: Vec<f64>, rows: usize, inlier_classes: usize) -> Result<Self> {
        Self::new(values, rows, inlier_classes + 1, inlier_classes)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn inlier_classes(&self) -> usize {
        self.inlier_classes
    }

    pub fn has_abstention(&self) -> bool {
        self.cols == self.inlier_classes + 1
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-point energy scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyField(pub Vec<f64>);

impl EnergyField {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Hinge energy loss configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyLossConfig {
    pub m_in: f64,
    pub m_out: f64,
    pub lambda: f64,
    /// Divide each hinge sum by `1 + member count` instead of 1.
    pub use_count_weights: bool,
    /// Include the abstention logit in the energy sum.
    pub include_abstention: bool,
}

impl Default for EnergyLossConfig {
    fn default() -> Self {
        EnergyLossConfig {
            m_in: -5.0,
            m_out: 5.0,
            lambda: 0.1,
            use_count_weights: true,
            include_abstention: false,
        }
    }
}

impl EnergyLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_in.is_finite() && self.m_out.is_finite() && self.lambda.is_finite()) {
            return Err(Error::invalid("energy margins and lambda must be finite"));
        }
        if self.m_in >= self.m_out {
            return Err(Error::invalid(format!(
                "m_in ({}) must be below m_out ({})",
                self.m_in, self.m_out
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Threshold(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Inlier,
    Outlier,
}

impl Decision {
    pub fn is_outlier(self) -> bool {
        self == Decision::Outlier
    }
}

/// `log(sum(exp(v)))` with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Writes `softmax(v)` into `out`.
pub fn softmax_into(v: &[f64], out: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Columns entering the energy sum for a field.
#[inline]
pub(crate) fn energy_columns(logits: &LogitField, include_abstention: bool) -> usize {
    if include_abstention {
        logits.cols()
    } else {
        logits.inlier_classes()
    }
}

/// Point energy over the `K` inlier-class logits.
pub fn point_energy(logits: &LogitField) -> EnergyField {
    point_energy_with(logits, false)
}

/// Point energy, optionally summing over the abstention logit too.
pub fn point_energy_with(logits: &LogitField, include_abstention: bool) -> EnergyField {
    let k = energy_columns(logits, include_abstention);
    EnergyField(
        (0..logits.rows())
            .map(|i| -log_sum_exp(&logits.row(i)[..k]))
            .collect(),
    )
}

/// `(1 + #inliers, 1 + #outliers)`.
pub fn count_weights(labels: &LabelSet) -> (f64, f64) {
    let out = labels.outlier_count();
    let inl = labels.len() - out;
    (1.0 + inl as f64, 1.0 + out as f64)
}

fn group_weights(labels: &LabelSet, cfg: &EnergyLossConfig) -> (f64, f64) {
    if cfg.use_count_weights {
        count_weights(labels)
    } else {
        (1.0, 1.0)
    }
}

fn check_pair(n: usize, labels: &LabelSet) -> Result<()> {
    if n != labels.len() {
        return Err(Error::invalid(format!(
            "{n} scores paired with {} labels",
            labels.len()
        )));
    }
    Ok(())
}

/// Squared hinge energy loss.
///
/// `sum_in max(0, E - m_in)^2 / w_in + sum_out max(0, m_out - E)^2 / w_out`,
/// where the weights are the count weights when enabled and 1 otherwise.
/// Summation runs in point order.
pub fn energy_loss(
    energies: &EnergyField,
    labels: &LabelSet,
    cfg: &EnergyLossConfig,
) -> Result<f64> {
    check_pair(energies.len(), labels)?;
    let (w_in, w_out) = group_weights(labels, cfg);
    let mut s_in = 0.0;
    let mut s_out = 0.0;
    for (i, &e) in energies.0.iter().enumerate() {
        if labels.is_outlier(i) {
            let h = (cfg.m_out - e).max(0.0);
            s_out += h * h;
        } else {
            let h = (e - cfg.m_in).max(0.0);
            s_in += h * h;
        }
    }
    Ok(s_in / w_in + s_out / w_out)
}

/// Derivative of [`energy_loss`] with respect to each point energy.
pub fn energy_loss_grad(
    energies: &EnergyField,
    labels: &LabelSet,
    cfg: &EnergyLossConfig,
) -> Result<Vec<f64>> {
    check_pair(energies.len(), labels)?;
    let (w_in, w_out) = group_weights(labels, cfg);
    Ok(energies
        .0
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            if labels.is_outlier(i) {
                -2.0 * (cfg.m_out - e).max(0.0) / w_out
            } else {
                2.0 * (e - cfg.m_in).max(0.0) / w_in
            }
        })
        .collect())
}

/// Mean softmax negative log-likelihood over inlier-labelled points, with the
/// softmax taken over every column. Zero when there are no inliers.
pub fn nll_loss(logits: &LogitField, labels: &LabelSet) -> Result<f64> {
    check_pair(logits.rows(), labels)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..logits.rows() {
        if labels.is_outlier(i) {
            continue;
        }
        let y = labels.labels()[i] as usize - 1;
        if y >= logits.cols() {
            return Err(Error::invalid(format!(
                "label {} has no logit column",
                y + 1
            )));
        }
        let row = logits.row(i);
        sum += log_sum_exp(row) - row[y];
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `nll_loss + lambda * energy_loss`.
pub fn total_loss(logits: &LogitField, labels: &LabelSet, cfg: &EnergyLossConfig) -> Result<f64> {
    let nll = nll_loss(logits, labels)?;
    let energies = point_energy_with(logits, cfg.include_abstention);
    Ok(nll + cfg.lambda * energy_loss(&energies, labels, cfg)?)
}

/// Inlier iff `E <= tau`.
pub fn classify(energies: &EnergyField, tau: Threshold) -> Vec<Decision> {
    energies
        .0
        .iter()
        .map(|&e| {
            if e <= tau.0 {
                Decision::Inlier
            } else {
                Decision::Outlier
            }
        })
        .collect()
}

/// Smallest threshold accepting at least `target_rate` of the given inlier
/// energies, i.e. the `ceil(rate * n)`-th order statistic.
pub fn tau_for_inlier_tpr(inlier_energies: &[f64], target_rate: f64) -> Result<Threshold> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::invalid(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if inlier_energies.is_empty() {
        return Err(Error::invalid("no inlier energies to calibrate on"));
    }
    if inlier_energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("non-finite energy in calibration set"));
    }
    let mut sorted = inlier_energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let accepts = |k: usize| k as f64 / n as f64 >= target_rate;
    let mut k = ((target_rate * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && accepts(k - 1) {
        k -= 1;
    }
    while k < n && !accepts(k) {
        k += 1;
    }
    Ok(Threshold(sorted[k - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[u32]) -> LabelSet {
        LabelSet::new(v.to_vec(), 2).unwrap()
    }

    fn cfg(weights: bool) -> EnergyLossConfig {
        EnergyLossConfig {
            use_count_weights: weights,
            ..Default::default()
        }
    }

    #[test]
    fn field_validation() {
        assert!(LogitField::new(vec![0.0; 6], 2, 3, 2).is_ok());
        assert!(LogitField::new(vec![0.0; 6], 2, 3, 1).is_err());
        assert!(LogitField::new(vec![0.0; 5], 2, 3, 2).is_err());
        assert!(LogitField::new(vec![0.0, f64::NAN, 0.0], 1, 3, 2).is_err());
        assert!(LogitField::new(vec![], 0, 1, 0).is_err());
    }

    #[test]
    fn energy_of_simple_fields() {
        let f = LogitField::new(vec![3.0], 1, 1, 1).unwrap();
        assert_eq!(point_energy(&f).0, vec![-3.0]);
        let f = LogitField::new(vec![0.0, 0.0], 1, 2, 2).unwrap();
        assert!((point_energy(&f).0[0] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn abstention_excluded_unless_requested() {
        let f = LogitField::with_abstention(vec![0.0, 0.0, 50.0], 1, 2).unwrap();
        assert!((point_energy(&f).0[0] + std::f64::consts::LN_2).abs() < 1e-15);
        let with = point_energy_with(&f, true).0[0];
        assert!((with + 50.0).abs() < 1e-12);
    }

    #[test]
    fn count_weight_arithmetic() {
        assert_eq!(count_weights(&labels(&[1, 1, 2, 3])), (4.0, 2.0));
        assert_eq!(count_weights(&labels(&[1; 10])), (11.0, 1.0));
        assert_eq!(count_weights(&labels(&[])), (1.0, 1.0));
    }

    #[test]
    fn hinge_terms() {
        let c = cfg(true);
        let e = EnergyField(vec![-6.0]);
        assert_eq!(energy_loss(&e, &labels(&[1]), &c).unwrap(), 0.0);
        let e = EnergyField(vec![-3.0]);
        assert_eq!(energy_loss(&e, &labels(&[1]), &c).unwrap(), 2.0);
        let e = EnergyField(vec![2.0]);
        assert_eq!(energy_loss(&e, &labels(&[3]), &c).unwrap(), 4.5);
        let e = EnergyField(vec![2.0]);
        assert_eq!(energy_loss(&e, &labels(&[3]), &cfg(false)).unwrap(), 9.0);
        assert!(energy_loss(&e, &labels(&[3, 1]), &c).is_err());
    }

    #[test]
    fn nll_examples() {
        let f = LogitField::with_abstention(vec![10.0, -10.0, -10.0], 1, 2).unwrap();
        let exact = (1.0 + 2.0 * (-20.0f64).exp()).ln();
        assert!((nll_loss(&f, &labels(&[1])).unwrap() - exact).abs() < 1e-15);
        assert!(nll_loss(&f, &labels(&[1])).unwrap() < 1e-8);
        let f = LogitField::with_abstention(vec![0.0; 3], 1, 2).unwrap();
        assert!((nll_loss(&f, &labels(&[1])).unwrap() - 3f64.ln()).abs() < 1e-15);
        // Outliers carry no classification term.
        assert_eq!(nll_loss(&f, &labels(&[3])).unwrap(), 0.0);
        assert!(nll_loss(&f, &labels(&[1, 1])).is_err());
    }

    #[test]
    fn total_without_energy_is_nll() {
        let f = LogitField::with_abstention(vec![0.3, -1.0, 2.0, 0.1, 0.2, 0.3], 2, 2).unwrap();
        let l = labels(&[2, 3]);
        let c = EnergyLossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(total_loss(&f, &l, &c).unwrap(), nll_loss(&f, &l).unwrap());
    }

    #[test]
    fn decision_rule_boundary() {
        let tau = Threshold(-0.25);
        let d = classify(&EnergyField(vec![-5.1, -0.25, 3.0]), tau);
        assert_eq!(
            d,
            vec![Decision::Inlier, Decision::Inlier, Decision::Outlier]
        );
    }

    #[test]
    fn tau_examples() {
        assert_eq!(
            tau_for_inlier_tpr(&[-5.0, -4.0, -3.0, -2.0], 0.5)
                .unwrap()
                .0,
            -4.0
        );
        assert_eq!(tau_for_inlier_tpr(&[-5.0; 7], 0.3).unwrap().0, -5.0);
        assert_eq!(tau_for_inlier_tpr(&[-5.0; 7], 0.99).unwrap().0, -5.0);
        assert!(tau_for_inlier_tpr(&[], 0.5).is_err());
        assert!(tau_for_inlier_tpr(&[1.0], 1.0).is_err());
        assert!(tau_for_inlier_tpr(&[1.0], 0.0).is_err());
    }

    #[test]
    fn validate_rejects_inverted_margins() {
        let c = EnergyLossConfig {
            m_in: 5.0,
            m_out: -5.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(EnergyLossConfig::default().validate().is_ok());
    }

    fn row_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-30.0f64..30.0, 1..8)
    }

    proptest! {
        #[test]
        fn shift_lowers_energy_by_shift(row in row_strategy(), c in -100.0f64..100.0) {
            let k = row.len();
            let a = point_energy(&LogitField::new(row.clone(), 1, k, k).unwrap()).0[0];
            let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
            let b = point_energy(&LogitField::new(shifted, 1, k, k).unwrap()).0[0];
            prop_assert!(((b - a) + c).abs() < 1e-9);
        }

        #[test]
        fn raising_a_logit_lowers_energy(row in row_strategy(), j in any::<prop::sample::Index>(), d in 1e-3f64..10.0) {
            let k = row.len();
            let j = j.index(k);
            let a = point_energy(&LogitField::new(row.clone(), 1, k, k).unwrap()).0[0];
            let mut up = row.clone();
            up[j] += d;
            let b = point_energy(&LogitField::new(up, 1, k, k).unwrap()).0[0];
            prop_assert!(b <= a);
            if row.iter().all(|&v| v <= row[j]) {
                prop_assert!(b < a);
            }
        }

        #[test]
        fn huge_logits_stay_finite(row in prop::collection::vec(-1e4f64..1e4, 1..8)) {
            let k = row.len();
            let e = point_energy(&LogitField::new(row, 1, k, k).unwrap()).0[0];
            prop_assert!(e.is_finite());
        }

        #[test]
        fn loss_zero_iff_margins_met(
            es in prop::collection::vec(-10.0f64..10.0, 1..30),
            ls in prop::collection::vec(1u32..4, 30),
            weights in any::<bool>(),
        ) {
            let l = LabelSet::new(ls[..es.len()].to_vec(), 2).unwrap();
            let c = cfg(weights);
            let loss = energy_loss(&EnergyField(es.clone()), &l, &c).unwrap();
            let met = es.iter().enumerate().all(|(i, &e)| if l.is_outlier(i) { e >= c.m_out } else { e <= c.m_in });
            prop_assert!(loss.is_finite() && loss >= 0.0);
            prop_assert_eq!(loss == 0.0, met);
        }

        #[test]
        fn decisions_survive_monotone_maps(es in prop::collection::vec(-10.0f64..10.0, 1..40), tau in -10.0f64..10.0) {
            let f = |x: f64| x.exp() * 3.0 + x;
            let a = classify(&EnergyField(es.clone()), Threshold(tau));
            let b = classify(&EnergyField(es.iter().map(|&e| f(e)).collect()), Threshold(f(tau)));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn tau_is_minimal_accepting_order_statistic(
            es in prop::collection::vec(-20.0f64..20.0, 1..300),
            rate in 0.01f64..0.99,
        ) {
            let tau = tau_for_inlier_tpr(&es, rate).unwrap().0;
            let n = es.len() as f64;
            let accepted = es.iter().filter(|&&e| e <= tau).count() as f64;
            prop_assert!(accepted / n >= rate);
            // Any smaller energy value accepts too few.
            let below = es.iter().filter(|&&e| e < tau).count() as f64;
            prop_assert!(below / n < rate);
        }
    }
}
