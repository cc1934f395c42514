//! Two-phase training: classification-only pretraining on inlier points,
//! then energy fine-tuning on mixed scans with an abstention column.
//!
//! Each scan is one full-batch Adam step. Scan order is reshuffled every
//! epoch from the run seed, so identical inputs give identical trajectories.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{PointFeatures, FEATURE_WIDTH};
use super::network::{forward, loss_and_grad, Layout, ModelParams};
use super::optim::{Adam, AdamParams};
use crate::cloud::LabelSet;
use crate::energy::{point_energy_with, EnergyLossConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    /// Fraction of training scans used for pretraining.
    pub pretrain_fraction: f64,
    pub energy: EnergyLossConfig,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs_pretrain: 30,
            epochs_finetune: 20,
            hidden: vec![64, 64],
            pretrain_fraction: 0.2,
            energy: EnergyLossConfig::default(),
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.pretrain_fraction > 0.0 && self.pretrain_fraction <= 1.0) {
            return Err(Error::invalid("pretrain fraction must lie in (0, 1]"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        self.energy.validate()
    }
}

/// Standardized features of one scan with its labels.
#[derive(Debug, Clone)]
pub struct TrainingScan {
    pub features: PointFeatures,
    pub labels: LabelSet,
}

impl TrainingScan {
    pub fn new(features: PointFeatures, labels: LabelSet) -> Result<Self> {
        labels.check_len(features.rows())?;
        Ok(TrainingScan { features, labels })
    }

    /// The same scan with outlier-labelled rows dropped.
    pub fn inliers_only(&self) -> TrainingScan {
        let keep: Vec<bool> = self.labels.outlier_mask().iter().map(|o| !o).collect();
        TrainingScan {
            features: self.features.select(&keep),
            labels: self.labels.select(&keep),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-scan loss over the epoch's steps.
    pub loss: f64,
    /// Pooled means after the epoch; `None` when no such points exist.
    pub mean_inlier_energy: Option<f64>,
    pub mean_outlier_energy: Option<f64>,
}

impl EpochStats {
    pub fn energy_gap(&self) -> Option<f64> {
        Some(self.mean_outlier_energy? - self.mean_inlier_energy?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

const PRETRAIN_SALT: u64 = 0x5052_4554;
const FINETUNE_SALT: u64 = 0x4649_4e45;

fn inlier_classes(scans: &[TrainingScan]) -> Result<u32> {
    let first = scans
        .first()
        .ok_or_else(|| Error::invalid("no training scans"))?
        .labels
        .inlier_classes();
    if scans.iter().any(|s| s.labels.inlier_classes() != first) {
        return Err(Error::invalid("scans disagree on the inlier class count"));
    }
    Ok(first)
}

/// Pooled mean energy of inlier and outlier points.
pub fn mean_energies(
    params: &ModelParams,
    scans: &[TrainingScan],
    include_abstention: bool,
) -> Result<(Option<f64>, Option<f64>)> {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for scan in scans {
        if scan.features.rows() == 0 {
            continue;
        }
        let logits = forward(&scan.features, params)?;
        let e = point_energy_with(&logits, include_abstention);
        for (i, &ei) in e.0.iter().enumerate() {
            if scan.labels.is_outlier(i) {
                s_out += ei;
                n_out += 1;
            } else {
                s_in += ei;
                n_in += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok((mean(s_in, n_in), mean(s_out, n_out)))
}

fn run_epochs(
    mut params: ModelParams,
    scans: &[TrainingScan],
    epochs: usize,
    loss_cfg: &EnergyLossConfig,
    cfg: &TrainConfig,
    salt: u64,
    phase: &str,
) -> Result<(ModelParams, TrainReport)> {
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
    let mut order: Vec<usize> = (0..scans.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &s in &order {
            let scan = &scans[s];
            if scan.features.rows() == 0 {
                continue;
            }
            let (loss, grad) = loss_and_grad(&scan.features, &params, &scan.labels, loss_cfg)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "{phase} epoch {epoch}, scan {s}: non-finite loss or gradient"
                )));
            }
            adam.step(&mut params.theta, &grad);
            if !params.is_finite() {
                return Err(Error::Divergence(format!(
                    "{phase} epoch {epoch}, scan {s}: non-finite parameters"
                )));
            }
            loss_sum += loss;
        }
        let (mean_in, mean_out) = mean_energies(&params, scans, loss_cfg.include_abstention)?;
        report.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / scans.len().max(1) as f64,
            mean_inlier_energy: mean_in,
            mean_outlier_energy: mean_out,
        });
    }
    Ok((params, report))
}

/// Fresh model for the scans' class count, initialized from `cfg.seed`.
pub fn initial_params(scans: &[TrainingScan], cfg: &TrainConfig) -> Result<ModelParams> {
    let k = inlier_classes(scans)?;
    let layout = Layout::new(FEATURE_WIDTH, cfg.hidden.clone(), k as usize)?;
    ModelParams::init(layout, cfg.seed)
}

/// Classification-only training on inlier scans from a fresh initialization.
pub fn pretrain(scans: &[TrainingScan], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let params = initial_params(scans, cfg)?;
    pretrain_from(params, scans, cfg)
}

/// Classification-only training starting from `params`.
pub fn pretrain_from(
    params: ModelParams,
    scans: &[TrainingScan],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    inlier_classes(scans)?;
    if let Some(i) = scans.iter().position(|s| s.labels.outlier_count() > 0) {
        return Err(Error::invalid(format!(
            "pretraining scan {i} contains outlier labels"
        )));
    }
    let loss_cfg = EnergyLossConfig {
        lambda: 0.0,
        ..cfg.energy
    };
    run_epochs(
        params,
        scans,
        cfg.epochs_pretrain,
        &loss_cfg,
        cfg,
        PRETRAIN_SALT,
        "pretrain",
    )
}

/// Adds the abstention column (if missing) and trains on the total loss.
pub fn finetune(
    params: &ModelParams,
    scans: &[TrainingScan],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let k = inlier_classes(scans)?;
    if k as usize != params.layout.inlier_classes {
        return Err(Error::invalid(format!(
            "scans have {k} inlier classes, model has {}",
            params.layout.inlier_classes
        )));
    }
    run_epochs(
        params.widen_abstention(),
        scans,
        cfg.epochs_finetune,
        &cfg.energy,
        cfg,
        FINETUNE_SALT,
        "finetune",
    )
}
