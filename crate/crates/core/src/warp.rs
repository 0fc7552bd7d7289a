//! Transferring a demonstrated trajectory into a live scene.
//!
//! Every demo step is right-composed with the demo-to-live object pose. With a
//! secondary object the same is done with its demo-to-live pose and the two
//! branches are blended per step by a Gaussian weight that starts at 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleError, EpisodeBundle};
use crate::correspond::{filter_by_mask, lift_correspondences_indexed, CorrespondError, CorrespondenceSet, Mask};
use crate::demo::{mask_cloud, CorrespondenceSource, DemoError, DemoTrajectory, FrameRef};
use crate::geom::{compose, slerp_pose, Point3, Pose};
use crate::registration::{fit_rigid_ransac, RansacParams, RegistrationError};
use crate::seed::derive_seed;
use crate::spatial::{dist_sq, PointGrid};

pub const DEFAULT_SIGMA: f64 = 0.5;
pub const DEFAULT_MARGIN: u32 = 5;
pub const DEFAULT_MAX_OBJ_DIST: f64 = 0.01;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("no correspondences to build a re-detection box from")]
    EmptyCorrespondences,
    #[error("secondary-object pose unavailable: {0}")]
    MissingGoalPose(String),
    #[error("none of {count} grasps lies within {max_obj_dist} m of the object")]
    NoGraspOnObject { count: usize, max_obj_dist: f64 },
    #[error("invalid warp configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Correspond(#[from] CorrespondError),
}

/// Composition convention for applying the demo-to-live pose to demo steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `step ∘ offset`.
    #[default]
    RightCompose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub sigma: f64,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub use_secondary: bool,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            convention: Convention::RightCompose,
            use_secondary: false,
        }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<(), WarpError> {
        if self.sigma.is_finite() && self.sigma > 0.0 {
            Ok(())
        } else {
            Err(WarpError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrasp")]
pub struct GraspCandidate {
    pub pose: Pose,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawGrasp {
    pose: Pose,
    score: f64,
}

impl TryFrom<RawGrasp> for GraspCandidate {
    type Error = String;

    fn try_from(r: RawGrasp) -> Result<Self, String> {
        if r.score.is_finite() {
            Ok(Self {
                pose: r.pose,
                score: r.score,
            })
        } else {
            Err(format!("grasp score must be finite, got {}", r.score))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspFile {
    pub grasps: Vec<GraspCandidate>,
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Box around all target pixels of `c`, grown by `margin` and clipped to the
/// `width x height` image.
pub fn redetect_bbox(c: &CorrespondenceSet, width: u32, height: u32, margin: u32) -> Result<(Mask, BBox), WarpError> {
    if c.is_empty() {
        return Err(WarpError::EmptyCorrespondences);
    }
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for m in &c.matches {
        u0 = u0.min(m.u2);
        v0 = v0.min(m.v2);
        u1 = u1.max(m.u2);
        v1 = v1.max(m.v2);
    }
    let clip = |x: f64, hi: u32| x.clamp(0.0, (hi - 1) as f64) as u32;
    let m = margin as f64;
    let b = BBox {
        x0: clip(u0.floor() - m, width),
        y0: clip(v0.floor() - m, height),
        x1: clip(u1.ceil() + m, width),
        y1: clip(v1.ceil() + m, height),
    };
    Ok((Mask::rect(width, height, b.x0, b.y0, b.x1, b.y1), b))
}

/// Demo-to-live pose of one object plus what was learned along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveEstimate {
    pub pose: Pose,
    pub redetection: Mask,
    pub bbox: BBox,
    pub matches: usize,
    pub lifted: usize,
    pub inlier_count: usize,
    /// Live-frame points of the RANSAC inliers.
    pub live_points: Vec<Point3>,
}

/// Registers the masked part of a demo frame against a live frame. The
/// re-detection box spans the targets of the consensus matches.
pub fn estimate_demo_to_live(
    demo: FrameRef<'_>,
    live: FrameRef<'_>,
    demo_mask: &Mask,
    backend: &dyn CorrespondenceSource,
    params: &RansacParams,
    margin: u32,
) -> Result<LiveEstimate, WarpError> {
    let c = backend.correspondences(demo, live)?;
    let filtered = filter_by_mask(&c, demo_mask)?;
    let lifted = lift_correspondences_indexed(
        &filtered,
        &demo.bundle.depth(demo.index)?,
        &live.bundle.depth(live.index)?,
        demo.bundle.intrinsics(),
    )?;
    if lifted.pairs.len() < params.sample_size {
        return Err(RegistrationError::NoConsensus {
            found: lifted.pairs.len(),
            required: params.sample_size,
        }
        .into());
    }
    let r = fit_rigid_ransac(&lifted.pairs, params)?;
    let k = live.bundle.intrinsics();
    let inlier_matches = CorrespondenceSet::new(filtered.source_frame.clone(), filtered.target_frame.clone())
        .with_matches(
            lifted
                .match_index
                .iter()
                .zip(&r.inlier_mask)
                .filter(|(_, &b)| b)
                .map(|(&i, _)| filtered.matches[i])
                .collect(),
        );
    let (redetection, bbox) = redetect_bbox(&inlier_matches, k.width, k.height, margin)?;
    let live_points = lifted
        .pairs
        .dst()
        .iter()
        .zip(&r.inlier_mask)
        .filter(|(_, &b)| b)
        .map(|(p, _)| *p)
        .collect();
    Ok(LiveEstimate {
        pose: r.pose,
        redetection,
        bbox,
        matches: c.len(),
        lifted: lifted.pairs.len(),
        inlier_count: r.inlier_count(),
        live_points,
    })
}

/// Unnormalized Gaussian weight with standard deviation `sigma * (len - 1)`;
/// exactly 1 at `t = 0`.
pub fn mixing_weight(t: usize, len: usize, sigma: f64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    let s = sigma * (len as f64 - 1.0);
    (-((t * t) as f64) / (2.0 * s * s)).exp()
}

/// Per-step weights of the object branch for a trajectory of `steps` steps.
pub fn mixing_schedule(steps: usize, sigma: f64) -> Vec<f64> {
    (0..steps).map(|t| mixing_weight(t, steps, sigma)).collect()
}

/// Warps demo steps by the object pose and, with a secondary object, blends
/// toward the steps warped by the goal pose. The mixing horizon is the number
/// of steps.
pub fn warp_trajectory(
    steps: &[Pose],
    t_obj: &Pose,
    t_goal: Option<&Pose>,
    cfg: &WarpConfig,
) -> Result<Vec<Pose>, WarpError> {
    cfg.validate()?;
    if steps.is_empty() {
        return Err(WarpError::InvalidConfig("trajectory has no steps".into()));
    }
    let goal = match (cfg.use_secondary, t_goal) {
        (true, None) => {
            return Err(WarpError::MissingGoalPose(
                "secondary warping requested without a goal pose".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(WarpError::InvalidConfig(
                "goal pose given but secondary warping is disabled".into(),
            ))
        }
        (_, g) => g,
    };
    let alpha = mixing_schedule(steps.len(), cfg.sigma);
    Ok(steps
        .iter()
        .zip(alpha)
        .map(|(s, a)| {
            let obj = compose(s, t_obj);
            match goal {
                Some(g) => slerp_pose(&obj, &compose(s, g), a),
                None => obj,
            }
        })
        .collect())
}

/// Absolute poses from an initial pose and relative steps; one more pose than steps.
pub fn accumulate_trajectory(initial: &Pose, steps: &[Pose]) -> Vec<Pose> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(*initial);
    for s in steps {
        let next = compose(s, out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// Grasps within `max_obj_dist` of the object cloud, then the one nearest the
/// hand anchor; ties go to the higher score, then the lower index.
pub fn select_grasp(
    grasps: &[GraspCandidate],
    object_cloud: &[Point3],
    hand_anchor: &Point3,
    max_obj_dist: f64,
) -> Result<(usize, GraspCandidate), WarpError> {
    if grasps.is_empty() {
        return Err(WarpError::InvalidConfig("grasp list is empty".into()));
    }
    let none = || WarpError::NoGraspOnObject {
        count: grasps.len(),
        max_obj_dist,
    };
    let grid = PointGrid::new(object_cloud).ok_or_else(none)?;
    let limit = max_obj_dist * max_obj_dist;
    let mut best: Option<(f64, usize)> = None;
    for (i, g) in grasps.iter().enumerate() {
        let p = Point3::from(g.pose.translation());
        if grid.nearest_dist_sq(&p) > limit {
            continue;
        }
        let d = dist_sq(&p, hand_anchor);
        let better = match best {
            None => true,
            Some((bd, bi)) => d < bd || (d == bd && g.score > grasps[bi].score),
        };
        if better {
            best = Some((d, i));
        }
    }
    let (_, i) = best.ok_or_else(none)?;
    Ok((i, grasps[i]))
}

/// Hand anchor (canonical object frame) to the live camera frame.
pub fn transform_hand_anchor(anchor: &Point3, canonical: &Pose, t_obj: &Pose) -> Point3 {
    t_obj.apply(&canonical.apply(anchor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub warp: WarpConfig,
    pub ransac: RansacParams,
    pub margin: u32,
    pub max_obj_dist: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            warp: WarpConfig::default(),
            ransac: RansacParams::default(),
            margin: DEFAULT_MARGIN,
            max_obj_dist: DEFAULT_MAX_OBJ_DIST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    pub pose: Pose,
    pub matches: usize,
    pub lifted: usize,
    pub inlier_count: usize,
    pub redetection_box: BBox,
}

impl From<&LiveEstimate> for EstimateDiagnostics {
    fn from(e: &LiveEstimate) -> Self {
        Self {
            pose: e.pose,
            matches: e.matches,
            lifted: e.lifted,
            inlier_count: e.inlier_count,
            redetection_box: e.bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub object: EstimateDiagnostics,
    pub secondary: Option<EstimateDiagnostics>,
    pub hand_anchor_live: Point3,
    pub selected_grasp_index: Option<usize>,
}

/// Output file of trajectory generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedTrajectory {
    pub relative: Vec<Pose>,
    pub absolute: Vec<Pose>,
    pub selected_grasp: Option<Pose>,
    pub alpha: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn first_kept(b: &EpisodeBundle) -> Result<usize, WarpError> {
    b.kept_frames()
        .first()
        .copied()
        .ok_or_else(|| WarpError::InvalidConfig(format!("{} has no kept frames", b.root().display())))
}

const OBJECT_TAG: u64 = 1;
const SECONDARY_TAG: u64 = 2;

/// Full in-situ step: demo-to-live estimation on the first kept frames,
/// warping, accumulation from the live canonical pose, and grasp selection
/// when the live bundle lists grasps.
pub fn generate(
    traj: &DemoTrajectory,
    demo: &EpisodeBundle,
    live: &EpisodeBundle,
    backend: &dyn CorrespondenceSource,
    opts: &GenerateOptions,
) -> Result<WarpedTrajectory, WarpError> {
    opts.warp.validate()?;
    let (d0, l0) = (first_kept(demo)?, first_kept(live)?);
    let (demo_ref, live_ref) = (FrameRef::new(demo, d0), FrameRef::new(live, l0));

    let goal_masks = if opts.warp.use_secondary {
        let demo_mask = demo.secondary_mask(d0)?.ok_or_else(|| {
            WarpError::MissingGoalPose(format!(
                "demo frame {d0} of {} has no secondary_mask; add one or drop --use-secondary",
                demo.root().display()
            ))
        })?;
        if live.secondary_mask(l0)?.is_none() {
            return Err(WarpError::MissingGoalPose(format!(
                "live frame {l0} of {} has no secondary_mask; add one or drop --use-secondary",
                live.root().display()
            )));
        }
        Some(demo_mask)
    } else {
        None
    };

    let seeded = |tag| opts.ransac.with_seed(derive_seed(opts.ransac.seed, &[tag]));
    let obj = estimate_demo_to_live(
        demo_ref,
        live_ref,
        &demo.mask(d0)?,
        backend,
        &seeded(OBJECT_TAG),
        opts.margin,
    )?;
    let goal = match &goal_masks {
        Some(m) => Some(estimate_demo_to_live(
            demo_ref,
            live_ref,
            m,
            backend,
            &seeded(SECONDARY_TAG),
            opts.margin,
        )?),
        None => None,
    };

    let relative = warp_trajectory(
        &traj.relative_poses,
        &obj.pose,
        goal.as_ref().map(|g| &g.pose),
        &opts.warp,
    )?;
    let initial = compose(&obj.pose, &traj.object_canonical_pose);
    let absolute = accumulate_trajectory(&initial, &relative);
    let anchor = traj.hand_anchor.unwrap_or_else(Point3::origin);
    let hand_anchor_live = transform_hand_anchor(&anchor, &traj.object_canonical_pose, &obj.pose);

    let (mut selected_grasp, mut selected_grasp_index) = (None, None);
    if let Some(file) = live.read_grasps::<GraspFile>()? {
        let mut cloud = mask_cloud(&live.depth(l0)?, &live.mask(l0)?, live.intrinsics())?;
        if cloud.is_empty() {
            cloud = obj.live_points.clone();
        }
        let (i, g) = select_grasp(&file.grasps, &cloud, &hand_anchor_live, opts.max_obj_dist)?;
        selected_grasp = Some(g.pose);
        selected_grasp_index = Some(i);
    }

    Ok(WarpedTrajectory {
        alpha: mixing_schedule(relative.len(), opts.warp.sigma),
        relative,
        absolute,
        selected_grasp,
        diagnostics: Diagnostics {
            object: (&obj).into(),
            secondary: goal.as_ref().map(Into::into),
            hand_anchor_live,
            selected_grasp_index,
        },
    })
}
