//! Process exit codes.

use lidar_energy::Error;

pub const SUCCESS: i32 = 0;
/// Command-line usage error (reported by the argument parser).
pub const USAGE: i32 = 2;
pub const CONFIG: i32 = 3;
pub const IO: i32 = 4;
/// Malformed or inconsistent data: bad files, label/scan mismatches,
/// invalid arguments.
pub const DATA: i32 = 5;
pub const DIVERGENCE: i32 = 6;
/// Checkpoint incompatible with this build.
pub const CHECKPOINT: i32 = 7;

pub fn code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => CONFIG,
        Error::Io { .. } => IO,
        Error::Divergence(_) => DIVERGENCE,
        Error::Version(_) => CHECKPOINT,
        Error::InvalidArgument(_)
        | Error::OutOfRange { .. }
        | Error::UndefinedMetric(_)
        | Error::Format { .. }
        | Error::Consistency(_) => DATA,
    }
}
