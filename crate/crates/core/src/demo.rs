//! Demonstration trajectory extraction: per-step camera-frame object motion,
//! the canonical object frame at grasp time, the hand anchor in that frame,
//! and secondary-object selection by proximity.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleError, EpisodeBundle};
use crate::correspond::{
    filter_by_mask, lift_correspondences, load_correspondences, pixel_index, CorrespondError,
    CorrespondenceSet, DepthImage, Mask,
};
use crate::geom::{CameraIntrinsics, Point3, Pose};
use crate::registration::{fit_rigid_ransac, RansacParams, RegistrationError, RegistrationResult};
use crate::seed::derive_seed;
use crate::spatial::min_dist_sq;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Correspond(#[from] CorrespondError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error("step {step} (frame {from} -> {to}) failed")]
    StepFailed {
        step: usize,
        from: usize,
        to: usize,
        #[source]
        source: Box<DemoError>,
    },
    #[error("mask is empty: {0}")]
    EmptyMask(String),
    #[error("no valid depth inside the {0} mask")]
    InvalidDepth(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl DemoError {
    /// Index of the failing step, if this is a step failure.
    pub fn failed_step(&self) -> Option<usize> {
        match self {
            Self::StepFailed { step, .. } => Some(*step),
            _ => None,
        }
    }
}

/// One frame of one bundle.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub bundle: &'a EpisodeBundle,
    pub index: usize,
}

impl<'a> FrameRef<'a> {
    pub fn new(bundle: &'a EpisodeBundle, index: usize) -> Self {
        Self { bundle, index }
    }
}

/// Anything that can produce pixel matches between two frames.
pub trait CorrespondenceSource: Sync {
    fn name(&self) -> &str;

    fn correspondences(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<CorrespondenceSet, BundleError>;
}

/// Reads the correspondence files listed in a bundle manifest. Only pairs
/// within one bundle are available.
#[derive(Debug, Clone, Copy, Default)]
pub struct FileSource;

impl CorrespondenceSource for FileSource {
    fn name(&self) -> &str {
        "files"
    }

    fn correspondences(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<CorrespondenceSet, BundleError> {
        if src.bundle.root() != dst.bundle.root() {
            return Err(BundleError::MissingCorrespondences {
                path: dst.bundle.root().to_path_buf(),
                src: src.index,
                dst: dst.index,
            });
        }
        src.bundle.correspondences(src.index, dst.index)
    }
}

/// Always returns the same externally produced file, whatever the frames.
#[derive(Debug, Clone)]
pub struct ExplicitFile(pub PathBuf);

impl CorrespondenceSource for ExplicitFile {
    fn name(&self) -> &str {
        "files"
    }

    fn correspondences(&self, _: FrameRef<'_>, _: FrameRef<'_>) -> Result<CorrespondenceSet, BundleError> {
        Ok(load_correspondences(&self.0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub from: usize,
    pub to: usize,
    pub matches: usize,
    pub lifted: usize,
    pub inlier_count: usize,
    pub inlier_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrajectory {
    /// Bundle the trajectory was extracted from, as given by the caller.
    pub bundle: String,
    /// Kept frame indices; `relative_poses[k]` maps frame `frames[k]` to `frames[k + 1]`.
    pub frames: Vec<usize>,
    pub relative_poses: Vec<Pose>,
    pub object_canonical_pose: Pose,
    /// Hand position in the canonical object frame; absent without a hand mask.
    pub hand_anchor: Option<Point3>,
    pub grasp_frame_index: usize,
    pub per_step: Vec<StepStats>,
}

/// Correspondences from `src` to `dst`, restricted to `src_mask`, lifted and
/// registered. Returns the registration and match counts.
pub fn register_frames(
    backend: &dyn CorrespondenceSource,
    src: FrameRef<'_>,
    dst: FrameRef<'_>,
    src_mask: &Mask,
    params: &RansacParams,
) -> Result<(RegistrationResult, usize, usize), DemoError> {
    let c = backend.correspondences(src, dst)?;
    let filtered = filter_by_mask(&c, src_mask)?;
    let depth_src = src.bundle.depth(src.index)?;
    let depth_dst = dst.bundle.depth(dst.index)?;
    let pairs = lift_correspondences(&filtered, &depth_src, &depth_dst, src.bundle.intrinsics())?;
    let result = fit_rigid_ransac(&pairs, params)?;
    Ok((result, c.len(), pairs.len()))
}

fn extract_step(
    bundle: &EpisodeBundle,
    backend: &dyn CorrespondenceSource,
    params: &RansacParams,
    from: usize,
    to: usize,
) -> Result<(Pose, StepStats), DemoError> {
    let mask = bundle.mask(from)?;
    let step_params = params.with_seed(derive_seed(params.seed, &[from as u64, to as u64]));
    let (r, matches, lifted) = register_frames(
        backend,
        FrameRef::new(bundle, from),
        FrameRef::new(bundle, to),
        &mask,
        &step_params,
    )?;
    let stats = StepStats {
        from,
        to,
        matches,
        lifted,
        inlier_count: r.inlier_count(),
        inlier_rate: r.inlier_rate(),
    };
    Ok((r.pose, stats))
}

/// Registers every consecutive pair of kept frames. Steps run in parallel;
/// the first failing step (in frame order) is reported.
pub fn extract_trajectory(
    bundle: &EpisodeBundle,
    backend: &dyn CorrespondenceSource,
    params: &RansacParams,
) -> Result<DemoTrajectory, DemoError> {
    params.validate()?;
    let frames = bundle.kept_frames();
    if frames.len() < 2 {
        return Err(DemoError::EmptyInput(format!(
            "{} kept frames; at least 2 needed",
            frames.len()
        )));
    }
    let steps: Vec<Result<(Pose, StepStats), DemoError>> = frames
        .par_windows(2)
        .enumerate()
        .map(|(step, w)| {
            extract_step(bundle, backend, params, w[0], w[1]).map_err(|e| DemoError::StepFailed {
                step,
                from: w[0],
                to: w[1],
                source: Box::new(e),
            })
        })
        .collect();
    let mut relative_poses = Vec::with_capacity(steps.len());
    let mut per_step = Vec::with_capacity(steps.len());
    for s in steps {
        let (pose, stats) = s?;
        relative_poses.push(pose);
        per_step.push(stats);
    }

    let grasp = bundle.manifest().grasp_frame_index;
    let k = bundle.intrinsics();
    let depth = bundle.depth(grasp)?;
    let object_canonical_pose = canonical_pose(&depth, &bundle.mask(grasp)?, k)?;
    let hand_anchor = match bundle.hand_mask(grasp)? {
        Some(hand) => Some(extract_hand_anchor(&depth, k, &hand, &object_canonical_pose)?),
        None => None,
    };
    Ok(DemoTrajectory {
        bundle: bundle.root().display().to_string(),
        frames,
        relative_poses,
        object_canonical_pose,
        hand_anchor,
        grasp_frame_index: grasp,
        per_step,
    })
}

/// Camera-frame points of every valid-depth pixel set in `mask`.
pub fn mask_cloud(depth: &DepthImage, mask: &Mask, k: &CameraIntrinsics) -> Result<Vec<Point3>, DemoError> {
    if mask.dims() != (depth.width(), depth.height()) {
        return Err(CorrespondError::DimensionMismatch(format!(
            "mask {:?} vs depth {}x{}",
            mask.dims(),
            depth.width(),
            depth.height()
        ))
        .into());
    }
    mask.pixels()
        .filter_map(|(x, y)| depth.valid_at(x, y).map(|d| (x, y, d)))
        .map(|(x, y, d)| k.backproject(x as f64, y as f64, d).map_err(|e| CorrespondError::from(e).into()))
        .collect()
}

/// Identity rotation at the centroid of the mask-lifted object points.
pub fn canonical_pose(depth: &DepthImage, mask: &Mask, k: &CameraIntrinsics) -> Result<Pose, DemoError> {
    if mask.is_empty() {
        return Err(DemoError::EmptyMask("object".into()));
    }
    let cloud = mask_cloud(depth, mask, k)?;
    if cloud.is_empty() {
        return Err(DemoError::InvalidDepth("object".into()));
    }
    let sum = cloud.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
    Ok(Pose::from_translation(sum / cloud.len() as f64))
}

/// Hand position in the canonical object frame: the rounded centroid pixel of
/// `hand` lifted with `depth`, or, when that pixel has no valid depth, the
/// nearest valid-depth pixel of the mask (first in row-major order on ties).
pub fn extract_hand_anchor(
    depth: &DepthImage,
    k: &CameraIntrinsics,
    hand: &Mask,
    canonical: &Pose,
) -> Result<Point3, DemoError> {
    let (cu, cv) = hand
        .centroid()
        .ok_or_else(|| DemoError::EmptyMask("hand".into()))?;
    let (cx, cy) = pixel_index(cu, cv, hand.width(), hand.height())
        .ok_or_else(|| DemoError::InvalidDepth("hand".into()))?;
    let (x, y, d) = match depth.valid_at(cx, cy).filter(|_| hand.get(cx, cy)) {
        Some(d) => (cx, cy, d),
        None => {
            let d2 = |x: u32, y: u32| {
                let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
                dx * dx + dy * dy
            };
            let mut best: Option<(i64, u32, u32, f64)> = None;
            for (x, y) in hand.pixels() {
                if let Some(d) = depth.valid_at(x, y) {
                    if best.is_none_or(|b| d2(x, y) < b.0) {
                        best = Some((d2(x, y), x, y, d));
                    }
                }
            }
            let (_, x, y, d) = best.ok_or_else(|| DemoError::InvalidDepth("hand".into()))?;
            (x, y, d)
        }
    };
    let p = k
        .backproject(x as f64, y as f64, d)
        .map_err(CorrespondError::from)?;
    Ok(canonical.inverse().apply(&p))
}

/// Index of the candidate cloud closest to `object` (minimum point-to-point
/// distance); the lowest index wins ties.
pub fn select_secondary_mask(object: &[Point3], candidates: &[Vec<Point3>]) -> Result<usize, DemoError> {
    if object.is_empty() {
        return Err(DemoError::EmptyInput("object cloud".into()));
    }
    if candidates.is_empty() {
        return Err(DemoError::EmptyInput("no candidate clouds".into()));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let d = min_dist_sq(object, c).ok_or_else(|| DemoError::EmptyInput(format!("candidate {i}")))?;
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    Ok(best.expect("candidates nonempty").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn hand_anchor_examples() {
        // Hand centroid at pixel (70, 50) with depth 1 lifts to (0.2, 0, 1).
        let depth = DepthImage::filled(100, 100, 1.0);
        let hand = Mask::rect(100, 100, 69, 49, 71, 51);
        let a = extract_hand_anchor(&depth, &k(), &hand, &Pose::identity()).unwrap();
        assert_relative_eq!(a, Point3::new(0.2, 0.0, 1.0), epsilon = 1e-12);
        let c = Pose::from_translation(Vector3::new(0.2, 0.0, 1.0));
        let a = extract_hand_anchor(&depth, &k(), &hand, &c).unwrap();
        assert_relative_eq!(a, Point3::origin(), epsilon = 1e-12);
    }

    #[test]
    fn hand_anchor_falls_back_to_nearest_valid_pixel() {
        let mut depth = DepthImage::filled(100, 100, 1.0);
        depth.set(70, 50, 0.0);
        let hand = Mask::rect(100, 100, 69, 49, 71, 51);
        let a = extract_hand_anchor(&depth, &k(), &hand, &Pose::identity()).unwrap();
        // (70, 49) is the first distance-1 pixel in row-major order.
        assert_relative_eq!(a, Point3::new(0.2, -0.01, 1.0), epsilon = 1e-12);
        let empty = DepthImage::filled(100, 100, 0.0);
        assert!(matches!(
            extract_hand_anchor(&empty, &k(), &hand, &Pose::identity()),
            Err(DemoError::InvalidDepth(_))
        ));
        assert!(matches!(
            extract_hand_anchor(&depth, &k(), &Mask::empty(100, 100), &Pose::identity()),
            Err(DemoError::EmptyMask(_))
        ));
    }

    #[test]
    fn canonical_pose_is_mask_centroid() {
        let depth = DepthImage::filled(100, 100, 2.0);
        let mask = Mask::rect(100, 100, 40, 50, 60, 50);
        let c = canonical_pose(&depth, &mask, &k()).unwrap();
        assert_eq!(c.quaternion(), [1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(c.translation(), Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        assert!(canonical_pose(&depth, &Mask::empty(100, 100), &k()).is_err());
    }

    #[test]
    fn secondary_selection_examples() {
        let object = vec![Point3::new(0.0, 0.0, 1.0), Point3::new(0.1, 0.0, 1.0)];
        let far = vec![Point3::new(5.0, 0.0, 1.0)];
        let contact = vec![Point3::new(3.0, 0.0, 1.0), Point3::new(0.1, 0.0, 1.0)];
        assert_eq!(select_secondary_mask(&object, &[far.clone(), contact, far.clone()]).unwrap(), 1);
        let at = |d: f64| vec![Point3::new(0.1 + d, 0.0, 1.0)];
        assert_eq!(select_secondary_mask(&object, &[at(0.05), at(0.02)]).unwrap(), 1);
        assert_eq!(select_secondary_mask(&object, &[far.clone(), at(0.03), far, at(0.03)]).unwrap(), 1);
        assert!(select_secondary_mask(&[], &[at(0.0)]).is_err());
        assert!(select_secondary_mask(&object, &[]).is_err());
        assert!(select_secondary_mask(&object, &[vec![]]).is_err());
    }
}
