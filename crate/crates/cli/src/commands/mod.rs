mod evaluate;
mod filter;
mod score;
mod simulate;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lidar_energy::filters::FilterVariant;
use lidar_energy::io::{list_scans, load_config, split_path, RunConfig, Split};
use lidar_energy::{Error, Result};

pub use evaluate::{evaluate, pooled_metrics, EvaluatedScan};
pub use filter::filter;
pub use score::score;
pub use simulate::simulate;
pub use train::train;

use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "lidar-energy",
    version,
    about = "Energy-based weather outlier detection for LiDAR scans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset.
    Simulate(SimulateArgs),
    /// Pretrain and fine-tune a model on the training split.
    Train(TrainArgs),
    /// Write per-point energies and decisions for a split.
    Score(ScoreArgs),
    /// Run a classical filter and write its decisions.
    Filter(FilterArgs),
    /// Compute pooled metrics for score or filter dumps.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset directory; overrides `data.dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Calibration,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Fixed energy threshold; otherwise calibrated on the calibration split.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Scans to score. Without a split file every scan is scored.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides `filter.variant`.
    #[arg(long)]
    pub variant: Option<FilterVariant>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory of a `score` or `filter` run.
    #[arg(long)]
    pub input: PathBuf,
}

pub fn run(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Filter(a) => filter(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

/// Loads the configuration (or defaults) and applies the seed override.
/// The training seed always follows the run seed.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// The dataset location is an input, not configuration: the flag does not
/// touch `cfg`, so the config hash stays independent of where data lives.
fn data_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.data.dir.clone())
        .ok_or_else(|| Error::Config("no dataset directory: pass --data or set data.dir".into()))
}

/// Scan ids of one split, sorted. Without a split file, all scans.
fn split_ids(root: &Path, which: SplitName) -> Result<Vec<String>> {
    let path = split_path(root);
    let mut ids = if which == SplitName::All || !path.exists() {
        list_scans(root)?.into_iter().map(|r| r.id).collect()
    } else {
        let split = Split::load(&path)?;
        match which {
            SplitName::Train => split.train,
            SplitName::Calibration => split.calibration,
            SplitName::Test => split.test,
            SplitName::All => unreachable!(),
        }
    };
    ids.sort();
    Ok(ids)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}
