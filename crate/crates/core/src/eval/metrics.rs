use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::correspond::{CorrespondenceSet, Mask};
use crate::geom::{pose_error, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Percentage of matches whose target lands in the target mask.
    pub inlier_rate: f64,
    pub inlier_count: usize,
    pub total: usize,
    pub runtime_seconds: f64,
    /// Set when there were no matches to score.
    pub degenerate: bool,
}

/// Counts matches whose rounded target pixel is set in `target_mask`.
pub fn tracking_metrics(c: &CorrespondenceSet, target_mask: &Mask, runtime: f64) -> Result<TrackingMetrics, EvalError> {
    let mut inside = 0usize;
    for (i, m) in c.matches.iter().enumerate() {
        match target_mask.contains(m.u2, m.v2) {
            Some(true) => inside += 1,
            Some(false) => {}
            None => {
                return Err(EvalError::DimensionMismatch(format!(
                    "match {i} target ({}, {}) outside {}x{} mask",
                    m.u2,
                    m.v2,
                    target_mask.width(),
                    target_mask.height()
                )))
            }
        }
    }
    let total = c.len();
    Ok(TrackingMetrics {
        inlier_rate: if total == 0 { 0.0 } else { 100.0 * inside as f64 / total as f64 },
        inlier_count: inside,
        total,
        runtime_seconds: runtime,
        degenerate: total == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrorMetrics {
    pub mean_rot_err: f64,
    pub mean_trans_err: f64,
    /// `(rotation rad, translation m)` per step.
    pub per_step: Vec<(f64, f64)>,
}

pub fn trajectory_errors(pred: &[Pose], gt: &[Pose]) -> Result<TrajectoryErrorMetrics, EvalError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let per_step: Vec<(f64, f64)> = pred.iter().zip(gt).map(|(p, g)| pose_error(p, g)).collect();
    let n = per_step.len() as f64;
    Ok(TrajectoryErrorMetrics {
        mean_rot_err: per_step.iter().map(|e| e.0).sum::<f64>() / n,
        mean_trans_err: per_step.iter().map(|e| e.1).sum::<f64>() / n,
        per_step,
    })
}
