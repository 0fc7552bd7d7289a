//! Offline evaluation: correspondence tracking within and across
//! demonstrations, trajectory transfer error, and the synthetic episodes that
//! supply exact ground truth for both.

mod episode;
mod metrics;
mod protocol;
mod report;

use thiserror::Error;

pub use episode::{
    generate_synthetic_episode, scene_matches, CompositeSource, GroundTruth, MotionScale, OffsetConfig,
    SecondaryConfig, ShapeConfig, ShapeKind, SyntheticEpisodeConfig, SyntheticSource, GRASPS_FILE,
    GROUND_TRUTH_FILE,
};
pub use metrics::{tracking_metrics, trajectory_errors, TrackingMetrics, TrajectoryErrorMetrics};
pub use protocol::{run_offline_eval, EvalOptions, Protocol};
pub use report::{round9, Report, TrackingRow, TrajectoryRow, MEAN_ROW};

use crate::bundle::BundleError;
use crate::correspond::CorrespondError;
use crate::demo::DemoError;
use crate::warp::WarpError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory lengths differ or are zero: predicted {pred}, ground truth {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("protocol {protocol} needs at least {need} bundles, got {have}")]
    InsufficientBundles {
        protocol: &'static str,
        have: usize,
        need: usize,
    },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Correspond(#[from] CorrespondError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Warp(#[from] WarpError),
}
