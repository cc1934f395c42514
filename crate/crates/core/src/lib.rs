//! Energy-based point-wise outlier detection for LiDAR point clouds in
//! adverse weather.
//!
//! A small point-wise classifier produces per-class logits; the negative
//! log-sum-exp of the inlier logits is an energy score that is low for
//! regular scene points and, after hinge fine-tuning, high for spray, snow
//! and fog returns. Thresholding the energy gives inlier/outlier decisions.
//!
//! Modules:
//! * [`cloud`]: points, labels, voxel grid, neighbor index
//! * [`energy`]: energy score, losses, decision rule, threshold calibration
//! * [`model`]: features, gated MLP with analytic gradients, training
//! * [`filters`]: ROR, SOR, DROR and DSOR baselines
//! * [`metrics`]: AUROC, AUPR, FPR at TPR, precision/recall, IoU
//! * [`synth`]: synthetic weather scenes
//! * [`io`]: scan, label, score and config files

pub mod cloud;
pub mod energy;
pub mod error;
pub mod filters;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synth;

pub use cloud::{LabelSet, Point, PointCloud};
pub use energy::{Decision, EnergyField, EnergyLossConfig, LogitField, Threshold};
pub use error::{Error, Result};
