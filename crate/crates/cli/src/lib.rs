//! Command implementations behind the `lidar-energy` binary.
//!
//! Each command writes its outputs and a `manifest.json` into `--out`.
//! Scans are processed in parallel; outputs are ordered by scan id, so the
//! thread count never changes a written byte (manifest timestamps aside).

pub mod commands;
pub mod exit;
pub mod manifest;
pub mod pipeline;

pub use commands::{run, Cli, Command};
pub use manifest::RunManifest;
