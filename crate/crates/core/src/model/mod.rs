//! Point-wise classifier, its training, and semantic prediction with energy
//! override.

mod checkpoint;
mod features;
mod network;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use features::{
    extract_features, features_for, FeatureNormalizer, FeatureParams, PointFeatures, FEATURE_NAMES,
    FEATURE_WIDTH,
};
pub use network::{channel_gate, forward, loss, loss_and_grad, GateState, Layout, ModelParams};
pub use optim::{Adam, AdamParams};
pub use train::{
    finetune, initial_params, mean_energies, pretrain, pretrain_from, EpochStats, TrainConfig,
    TrainReport, TrainingScan,
};

use crate::energy::{EnergyField, LogitField, Threshold};
use crate::error::{Error, Result};

/// Semantic class per point: the arg-max column mapped to class
/// `column + 1` (the abstention column maps to the outlier class), replaced
/// by the outlier class wherever the energy exceeds `tau`.
pub fn predict_semantics(
    logits: &LogitField,
    energies: &EnergyField,
    tau: Threshold,
) -> Result<Vec<u32>> {
    if logits.rows() != energies.len() {
        return Err(Error::invalid(format!(
            "{} logit rows but {} energies",
            logits.rows(),
            energies.len()
        )));
    }
    let outlier = logits.inlier_classes() as u32 + 1;
    Ok((0..logits.rows())
        .map(|i| {
            if energies.0[i] > tau.0 {
                return outlier;
            }
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32 + 1
        })
        .collect())
}
