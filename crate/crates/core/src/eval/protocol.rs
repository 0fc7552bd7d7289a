use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{tracking_metrics, trajectory_errors, TrackingMetrics};
use super::report::{round9, Report, TrackingRow, TrajectoryRow};
use super::{EvalError, GroundTruth};
use crate::bundle::EpisodeBundle;
use crate::correspond::{filter_by_mask, lift_correspondences};
use crate::demo::{extract_trajectory, CorrespondenceSource, DemoTrajectory, FrameRef};
use crate::geom::Pose;
use crate::registration::{fit_rigid_ransac, RansacParams};
use crate::seed::derive_seed;
use crate::warp::{estimate_demo_to_live, warp_trajectory, WarpConfig, WarpError, DEFAULT_MARGIN};

const DETECTION: &str = "gt_mask";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Consecutive frames within each bundle.
    #[serde(alias = "intra_demo")]
    Intra,
    /// First frames of every ordered pair of bundles.
    #[serde(alias = "inter_demo")]
    Inter,
    /// Transfer of each bundle's trajectory into every other bundle.
    Trajectory,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Intra => "intra",
            Self::Inter => "inter",
            Self::Trajectory => "trajectory",
        }
    }

    fn min_bundles(&self) -> usize {
        match self {
            Self::Intra => 1,
            _ => 2,
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "intra" | "intra_demo" => Ok(Self::Intra),
            "inter" | "inter_demo" => Ok(Self::Inter),
            "trajectory" => Ok(Self::Trajectory),
            _ => Err(format!("unknown protocol {s:?}; expected intra, inter or trajectory")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ransac: RansacParams,
    pub warp: WarpConfig,
    pub margin: u32,
    /// Record wall-clock runtime; off gives reproducible report bytes.
    pub measure_runtime: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ransac: RansacParams::default(),
            warp: WarpConfig::default(),
            margin: DEFAULT_MARGIN,
            measure_runtime: true,
        }
    }
}

fn first_kept(b: &EpisodeBundle) -> usize {
    b.kept_frames().first().copied().unwrap_or(0)
}

/// Tracking precision of `src -> dst` restricted to the source object mask.
/// The timed region covers correspondence acquisition and registration.
fn track(
    src: FrameRef<'_>,
    dst: FrameRef<'_>,
    backend: &dyn CorrespondenceSource,
    params: &RansacParams,
) -> Result<TrackingMetrics, EvalError> {
    let src_mask = src.bundle.mask(src.index)?;
    let dst_mask = dst.bundle.mask(dst.index)?;
    let (depth_src, depth_dst) = (src.bundle.depth(src.index)?, dst.bundle.depth(dst.index)?);
    let start = Instant::now();
    let c = backend.correspondences(src, dst)?;
    let filtered = filter_by_mask(&c, &src_mask)?;
    let pairs = lift_correspondences(&filtered, &depth_src, &depth_dst, src.bundle.intrinsics())?;
    if let Err(e) = fit_rigid_ransac(&pairs, params) {
        log::debug!("registration {} -> {} failed: {e}", src.index, dst.index);
    }
    let runtime = start.elapsed().as_secs_f64();
    tracking_metrics(&filtered, &dst_mask, runtime)
}

fn tracking_row(protocol: Protocol, method: &str, pair: String, m: &TrackingMetrics, runtime: bool) -> TrackingRow {
    TrackingRow {
        protocol: protocol.as_str().into(),
        method: method.into(),
        detection: DETECTION.into(),
        pair,
        n: 1,
        total: m.total as f64,
        inlier_rate_pct: round9(m.inlier_rate),
        inlier_count: m.inlier_count as f64,
        runtime_s: runtime.then(|| round9(m.runtime_seconds)),
        degenerate: m.degenerate as usize,
    }
}

fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn pair_seed(params: &RansacParams, tags: &[u64]) -> RansacParams {
    params.with_seed(derive_seed(params.seed, tags))
}

/// Ground-truth steps of `b`: the sidecar when present, else its extraction.
fn reference_steps(b: &EpisodeBundle, extracted: &Result<DemoTrajectory, String>) -> Result<Vec<Pose>, String> {
    match b.read_sidecar::<GroundTruth>() {
        Ok(Some(gt)) => Ok(gt.relative_poses),
        Ok(None) => extracted.as_ref().map(|t| t.relative_poses.clone()).map_err(Clone::clone),
        Err(e) => Err(e.to_string()),
    }
}

fn transfer(
    a: &EpisodeBundle,
    traj: &DemoTrajectory,
    b: &EpisodeBundle,
    backend: &dyn CorrespondenceSource,
    opts: &EvalOptions,
    params: &RansacParams,
) -> Result<Vec<Pose>, WarpError> {
    let (fa, fb) = (FrameRef::new(a, first_kept(a)), FrameRef::new(b, first_kept(b)));
    let obj = estimate_demo_to_live(fa, fb, &a.mask(fa.index)?, backend, params, opts.margin)?;
    let goal = if opts.warp.use_secondary {
        let mask = a.secondary_mask(fa.index)?.ok_or_else(|| {
            WarpError::MissingGoalPose(format!("{} has no secondary mask", a.root().display()))
        })?;
        let p = pair_seed(params, &[2]);
        Some(estimate_demo_to_live(fa, fb, &mask, backend, &p, opts.margin)?.pose)
    } else {
        None
    };
    warp_trajectory(&traj.relative_poses, &obj.pose, goal.as_ref(), &opts.warp)
}

/// Runs one evaluation protocol over `bundles`. Rows come out in bundle and
/// frame order, followed by a `mean` row.
pub fn run_offline_eval(
    bundles: &[EpisodeBundle],
    protocol: Protocol,
    backend: &dyn CorrespondenceSource,
    opts: &EvalOptions,
) -> Result<Report, EvalError> {
    if bundles.len() < protocol.min_bundles() {
        return Err(EvalError::InsufficientBundles {
            protocol: protocol.as_str(),
            have: bundles.len(),
            need: protocol.min_bundles(),
        });
    }
    let method = backend.name();
    let names: Vec<String> = bundles.iter().map(EpisodeBundle::name).collect();
    match protocol {
        Protocol::Intra => {
            let tasks: Vec<(usize, usize, usize)> = bundles
                .iter()
                .enumerate()
                .flat_map(|(bi, b)| {
                    b.kept_frames()
                        .windows(2)
                        .map(|w| (bi, w[0], w[1]))
                        .collect::<Vec<_>>()
                })
                .collect();
            let rows = tasks
                .par_iter()
                .map(|&(bi, a, c)| {
                    let b = &bundles[bi];
                    let p = pair_seed(&opts.ransac, &[bi as u64, a as u64, c as u64]);
                    let m = track(FrameRef::new(b, a), FrameRef::new(b, c), backend, &p)?;
                    let pair = format!("{}:{a}->{c}", names[bi]);
                    Ok(tracking_row(protocol, method, pair, &m, opts.measure_runtime))
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(with_tracking_mean(rows))
        }
        Protocol::Inter => {
            let rows = ordered_pairs(bundles.len())
                .par_iter()
                .map(|&(i, j)| {
                    let (a, b) = (&bundles[i], &bundles[j]);
                    let p = pair_seed(&opts.ransac, &[i as u64, j as u64]);
                    let m = track(FrameRef::new(a, first_kept(a)), FrameRef::new(b, first_kept(b)), backend, &p)?;
                    let pair = format!("{}->{}", names[i], names[j]);
                    Ok(tracking_row(protocol, method, pair, &m, opts.measure_runtime))
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(with_tracking_mean(rows))
        }
        Protocol::Trajectory => {
            let extracted: Vec<Result<DemoTrajectory, String>> = bundles
                .par_iter()
                .enumerate()
                .map(|(i, b)| {
                    extract_trajectory(b, backend, &pair_seed(&opts.ransac, &[i as u64]))
                        .map_err(|e| e.to_string())
                })
                .collect();
            let references: Vec<Result<Vec<Pose>, String>> = bundles
                .iter()
                .zip(&extracted)
                .map(|(b, e)| reference_steps(b, e))
                .collect();
            let rows: Vec<TrajectoryRow> = ordered_pairs(bundles.len())
                .par_iter()
                .map(|&(i, j)| {
                    let p = pair_seed(&opts.ransac, &[i as u64, j as u64]);
                    let result = extracted[i]
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|t| transfer(&bundles[i], t, &bundles[j], backend, opts, &p).map_err(|e| e.to_string()))
                        .and_then(|pred| {
                            let gt = references[j].as_ref().map_err(Clone::clone)?;
                            trajectory_errors(&pred, gt).map_err(|e| e.to_string())
                        });
                    let pair = format!("{}->{}", names[i], names[j]);
                    if let Err(e) = &result {
                        log::warn!("trajectory transfer {pair} failed: {e}");
                    }
                    let ok = result.ok();
                    TrajectoryRow {
                        protocol: protocol.as_str().into(),
                        method: method.into(),
                        detection: DETECTION.into(),
                        pair,
                        n: ok.is_some() as usize,
                        failures: ok.is_none() as usize,
                        rot_err_rad: ok.as_ref().map(|m| round9(m.mean_rot_err)),
                        trans_err_m: ok.as_ref().map(|m| round9(m.mean_trans_err)),
                    }
                })
                .collect();
            let mut rows = rows;
            if let Some(m) = TrajectoryRow::mean_of(&rows) {
                rows.push(m);
            }
            Ok(Report::Trajectory(rows))
        }
    }
}

fn with_tracking_mean(mut rows: Vec<TrackingRow>) -> Report {
    if let Some(m) = TrackingRow::mean_of(&rows) {
        rows.push(m);
    }
    Report::Tracking(rows)
}
