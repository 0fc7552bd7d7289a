//! Synthetic episodes: a scripted object path in front of a static container,
//! rendered to an on-disk bundle with an exact ground-truth sidecar.
//!
//! Episodes built from one config share a base path; the seed only picks the
//! planted object/container offsets and the noise. Per-episode steps are the
//! base steps warped by the planted offsets, so bundles of one family are
//! related by exactly the transfer the warp module performs.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall, UnitSphere};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::bundle::{
    to_json_pretty, write_file, BundleError, EpisodeBundle, FrameRecord, Manifest, FORMAT_VERSION,
};
use crate::correspond::{
    correspondences_to_json, render_frame, synthesize_matches, CorrespondenceSet, Mask, SyntheticNoiseParams,
};
use crate::demo::{CorrespondenceSource, FrameRef};
use crate::geom::{compose, CameraIntrinsics, Point3, Pose};
use crate::seed::derive_seed;
use crate::warp::{warp_trajectory, GraspCandidate, GraspFile, WarpConfig};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GRASPS_FILE: &str = "grasps.json";

const FRAME_TAG: u64 = 0x4652;
const MATCH_TAG: u64 = 0x4d41;
const OFFSET_TAG: u64 = 0x4f46;
const GRASP_TAG: u64 = 0x4752;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Cylinder,
    Blob,
}

/// Surface samples of a solid centered on its own origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub kind: ShapeKind,
    /// Box: edge lengths. Cylinder: diameter, height (along y), unused.
    /// Blob: ellipsoid diameters before the surface ripple.
    pub size: [f64; 3],
    /// Approximate distance between neighbouring samples, meters.
    pub spacing: f64,
}

fn steps(len: f64, spacing: f64) -> usize {
    ((len / spacing).round() as usize).max(1)
}

fn lin(len: f64, n: usize, i: usize) -> f64 {
    -len / 2.0 + len * i as f64 / n as f64
}

impl ShapeConfig {
    pub fn sample(&self) -> Vec<Point3> {
        let s = self.spacing;
        let [a, b, c] = self.size;
        let mut pts = Vec::new();
        match self.kind {
            ShapeKind::Box => {
                let (na, nb, nc) = (steps(a, s), steps(b, s), steps(c, s));
                for i in 0..=na {
                    for j in 0..=nb {
                        for sign in [-1.0, 1.0] {
                            pts.push(Point3::new(lin(a, na, i), lin(b, nb, j), sign * c / 2.0));
                        }
                    }
                }
                for i in 0..=na {
                    for k in 1..nc {
                        for sign in [-1.0, 1.0] {
                            pts.push(Point3::new(lin(a, na, i), sign * b / 2.0, lin(c, nc, k)));
                        }
                    }
                }
                for j in 1..nb {
                    for k in 1..nc {
                        for sign in [-1.0, 1.0] {
                            pts.push(Point3::new(sign * a / 2.0, lin(b, nb, j), lin(c, nc, k)));
                        }
                    }
                }
            }
            ShapeKind::Cylinder => {
                let r = a / 2.0;
                let na = steps(2.0 * PI * r, s);
                let nh = steps(b, s);
                for i in 0..na {
                    let th = 2.0 * PI * i as f64 / na as f64;
                    for j in 0..=nh {
                        pts.push(Point3::new(r * th.cos(), lin(b, nh, j), r * th.sin()));
                    }
                }
                for ring in 0..steps(r, s) {
                    let rr = r * ring as f64 / steps(r, s) as f64;
                    let n = steps(2.0 * PI * rr, s);
                    for i in 0..n {
                        let th = 2.0 * PI * i as f64 / n as f64;
                        for sign in [-1.0, 1.0] {
                            pts.push(Point3::new(rr * th.cos(), sign * b / 2.0, rr * th.sin()));
                        }
                    }
                }
            }
            ShapeKind::Blob => {
                let mean_r = (a + b + c) / 6.0;
                let n = ((4.0 * PI * mean_r * mean_r) / (s * s)).round().max(8.0) as usize;
                let golden = PI * (3.0 - 5f64.sqrt());
                for i in 0..n {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let rad = (1.0 - y * y).sqrt();
                    let th = golden * i as f64;
                    let dir = Vector3::new(rad * th.cos(), y, rad * th.sin());
                    let ripple = 1.0 + 0.12 * (3.0 * th).sin() * (2.0 * y.acos()).cos();
                    pts.push(Point3::new(
                        dir.x * a / 2.0 * ripple,
                        dir.y * b / 2.0 * ripple,
                        dir.z * c / 2.0 * ripple,
                    ));
                }
            }
        }
        pts
    }

    fn validate(&self, what: &str) -> Result<(), EvalError> {
        let sizes_ok = match self.kind {
            ShapeKind::Cylinder => self.size[..2].iter().all(|&x| x.is_finite() && x > 0.0),
            _ => self.size.iter().all(|&x| x.is_finite() && x > 0.0),
        };
        if !sizes_ok || !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(EvalError::ConfigInvalid(format!("{what} shape has non-positive size or spacing")));
        }
        let max = self.size.iter().cloned().fold(0.0, f64::max);
        if max / self.spacing > 2000.0 {
            return Err(EvalError::ConfigInvalid(format!("{what} spacing too fine for its size")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionScale {
    /// Per-step translation of the base path, meters.
    pub translation_m: f64,
    /// Per-step rotation of the base path, radians.
    pub rotation_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondaryConfig {
    pub shape: ShapeConfig,
    /// Camera-frame center before the planted offset.
    pub position: [f64; 3],
}

/// Bounds of the per-episode planted offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetConfig {
    pub object_translation_m: f64,
    pub object_rotation_rad: f64,
    pub secondary_translation_m: f64,
    pub secondary_rotation_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEpisodeConfig {
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub object: ShapeConfig,
    /// Camera-frame center of the object path.
    pub object_position: [f64; 3],
    pub motion: MotionScale,
    pub secondary: Option<SecondaryConfig>,
    pub offsets: OffsetConfig,
    /// Noise levels; the seed field is ignored in favour of the episode seed.
    pub noise: SyntheticNoiseParams,
    pub grasp_frame_index: usize,
    pub hand_radius_px: f64,
    pub grasp_count: usize,
    /// Mixing used to derive per-episode ground-truth steps.
    pub warp: WarpConfig,
}

impl Default for SyntheticEpisodeConfig {
    fn default() -> Self {
        Self {
            frames: 11,
            intrinsics: CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).expect("valid"),
            object: ShapeConfig {
                kind: ShapeKind::Box,
                size: [0.08, 0.06, 0.1],
                spacing: 0.0015,
            },
            object_position: [0.0, 0.0, 0.55],
            motion: MotionScale {
                translation_m: 0.05,
                rotation_rad: 0.15,
            },
            secondary: Some(SecondaryConfig {
                shape: ShapeConfig {
                    kind: ShapeKind::Box,
                    size: [0.14, 0.1, 0.08],
                    spacing: 0.003,
                },
                position: [0.13, 0.08, 0.75],
            }),
            offsets: OffsetConfig {
                object_translation_m: 0.015,
                object_rotation_rad: 0.0,
                secondary_translation_m: 0.015,
                secondary_rotation_rad: 0.0,
            },
            noise: SyntheticNoiseParams::default(),
            grasp_frame_index: 0,
            hand_radius_px: 4.0,
            grasp_count: 8,
            warp: WarpConfig::default(),
        }
    }
}

impl SyntheticEpisodeConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::ConfigInvalid(m.to_string()));
        if self.frames < 2 {
            return bad("frames must be at least 2");
        }
        if self.grasp_frame_index >= self.frames {
            return bad("grasp_frame_index must be below frames");
        }
        self.intrinsics
            .validate()
            .map_err(|e| EvalError::ConfigInvalid(e.to_string()))?;
        self.object.validate("object")?;
        if let Some(s) = &self.secondary {
            s.shape.validate("secondary")?;
            if !s.position.iter().all(|x| x.is_finite()) {
                return bad("secondary position must be finite");
            }
        }
        if !self.object_position.iter().all(|x| x.is_finite()) || self.object_position[2] <= 0.0 {
            return bad("object_position must be finite and in front of the camera");
        }
        let m = &self.motion;
        let o = &self.offsets;
        for v in [
            m.translation_m,
            m.rotation_rad,
            o.object_translation_m,
            o.object_rotation_rad,
            o.secondary_translation_m,
            o.secondary_rotation_rad,
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad("motion scales and offsets must be finite and nonnegative");
            }
        }
        if !(self.hand_radius_px.is_finite() && self.hand_radius_px >= 0.0) {
            return bad("hand_radius_px must be nonnegative");
        }
        if self.warp.use_secondary && self.secondary.is_none() {
            return bad("warp.use_secondary needs a secondary object");
        }
        self.warp
            .validate()
            .map_err(|e| EvalError::ConfigInvalid(e.to_string()))?;
        self.noise
            .validate()
            .map_err(|e| EvalError::ConfigInvalid(e.to_string()))
    }

    fn secondary_base(&self) -> Option<Pose> {
        self.secondary
            .map(|s| Pose::from_translation(Vector3::from(s.position)))
    }

    /// Initial object pose and the T-1 base steps shared by every seed.
    pub fn base_path(&self) -> (Pose, Vec<Pose>) {
        let n = self.frames - 1;
        let m = &self.motion;
        let heading = |k: usize| 2.0 * PI * k as f64 / n as f64;
        let mut centers = vec![Vector3::zeros()];
        let mut disp = Vec::with_capacity(n);
        for k in 0..n {
            let phi = heading(k);
            let d = Vector3::new(phi.cos(), phi.sin(), 0.25 * (2.0 * phi).sin()).normalize() * m.translation_m;
            disp.push(d);
            centers.push(centers[k] + d);
        }
        let mean = centers[..n.max(1)].iter().sum::<Vector3<f64>>() / n.max(1) as f64;
        let p = Vector3::from(self.object_position);
        let shift = Vector3::new(p.x - mean.x, p.y - mean.y, p.z);
        let steps = (0..n)
            .map(|k| {
                let phi = heading(k);
                let axis = Unit::new_normalize(Vector3::new(0.3 * phi.cos(), 0.3 * phi.sin(), 1.0));
                let r = UnitQuaternion::from_axis_angle(&axis, m.rotation_rad);
                let c = centers[k] + shift;
                Pose::from_parts(r, c + disp[k] - r * c)
            })
            .collect();
        (Pose::from_translation(centers[0] + shift), steps)
    }
}

/// Exact scene description of one synthetic episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub config: SyntheticEpisodeConfig,
    /// Object frame to camera frame, per frame.
    pub object_poses: Vec<Pose>,
    pub secondary_pose: Option<Pose>,
    /// Camera-frame object motion between consecutive frames.
    pub relative_poses: Vec<Pose>,
    pub base_steps: Vec<Pose>,
    /// Last object pose relative to the first.
    pub total_motion: Pose,
    pub object_offset: Pose,
    pub secondary_offset: Option<Pose>,
    /// Camera-frame hand point at the grasp frame.
    pub hand_point: Option<Point3>,
    /// Indices of planted outlier matches, per consecutive frame pair.
    pub outliers: Vec<Vec<usize>>,
}

impl GroundTruth {
    fn clouds(&self) -> Vec<Vec<Point3>> {
        let mut c = vec![self.config.object.sample()];
        if let Some(s) = &self.config.secondary {
            c.push(s.shape.sample());
        }
        c
    }

    fn poses_at(&self, frame: usize) -> Vec<Pose> {
        let mut p = vec![self.object_poses[frame]];
        p.extend(self.secondary_pose);
        p
    }
}

fn sample_offset(rng: &mut ChaCha8Rng, center: Vector3<f64>, max_t: f64, max_r: f64) -> Pose {
    let t: [f64; 3] = UnitBall.sample(rng);
    let t = Vector3::from(t) * max_t;
    let rot = if max_r > 0.0 {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), rng.random_range(0.0..=max_r))
    } else {
        UnitQuaternion::identity()
    };
    // rotate about `center`, then translate
    Pose::from_parts(rot, center + t - rot * center)
}

/// Matches between frame `ia` of episode `a` and frame `ib` of episode `b`,
/// which must share one scene layout.
pub fn scene_matches(
    a: &GroundTruth,
    ia: usize,
    b: &GroundTruth,
    ib: usize,
    noise: &SyntheticNoiseParams,
) -> Result<(CorrespondenceSet, Vec<bool>), EvalError> {
    let same_layout = a.config.object == b.config.object
        && a.config.secondary.map(|s| s.shape) == b.config.secondary.map(|s| s.shape)
        && a.config.intrinsics == b.config.intrinsics;
    if !same_layout {
        return Err(EvalError::ConfigInvalid(
            "bundles do not share a scene layout".into(),
        ));
    }
    if ia >= a.object_poses.len() || ib >= b.object_poses.len() {
        return Err(EvalError::ConfigInvalid(format!("frame index out of range ({ia}, {ib})")));
    }
    let clouds = a.clouds();
    let refs: Vec<&[Point3]> = clouds.iter().map(|c| c.as_slice()).collect();
    let k = &a.config.intrinsics;
    let (pa, pb) = (a.poses_at(ia), b.poses_at(ib));
    let src = render_frame(&refs, &pa, k, 0.0, 0)?;
    let dst = render_frame(&refs, &pb, k, 0.0, 0)?;
    let (na, nb) = (ia.to_string(), ib.to_string());
    let m = synthesize_matches(&refs, &pa, &pb, &src, &dst, k, noise, (&na, &nb))?;
    Ok((m.correspondences, m.outliers))
}

/// Regenerates correspondences from ground-truth sidecars, for any pair of
/// frames of bundles sharing a layout.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSource {
    pub seed: u64,
    /// Noise levels; `None` uses those of the source bundle's config.
    pub noise: Option<SyntheticNoiseParams>,
}

impl SyntheticSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, noise: None }
    }

    pub fn with_noise(seed: u64, noise: SyntheticNoiseParams) -> Self {
        Self {
            seed,
            noise: Some(noise),
        }
    }
}

fn sidecar(b: &EpisodeBundle) -> Result<GroundTruth, BundleError> {
    b.read_sidecar()?.ok_or_else(|| BundleError::Invalid {
        path: b.root().to_path_buf(),
        message: "no ground-truth sidecar; synthetic correspondences unavailable".into(),
    })
}

impl CorrespondenceSource for SyntheticSource {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn correspondences(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<CorrespondenceSet, BundleError> {
        let (a, b) = (sidecar(src.bundle)?, sidecar(dst.bundle)?);
        let levels = self.noise.unwrap_or(a.config.noise);
        let noise = SyntheticNoiseParams {
            seed: derive_seed(self.seed, &[MATCH_TAG, a.seed, src.index as u64, b.seed, dst.index as u64]),
            ..levels
        };
        scene_matches(&a, src.index, &b, dst.index, &noise)
            .map(|(c, _)| c)
            .map_err(|e| BundleError::Invalid {
                path: dst.bundle.root().to_path_buf(),
                message: e.to_string(),
            })
    }
}

/// Uses `within` for frames of one bundle and `across` otherwise.
pub struct CompositeSource<'a> {
    pub within: &'a dyn CorrespondenceSource,
    pub across: &'a dyn CorrespondenceSource,
    pub label: String,
}

impl<'a> CompositeSource<'a> {
    pub fn new(within: &'a dyn CorrespondenceSource, across: &'a dyn CorrespondenceSource) -> Self {
        let label = format!("{}+{}", within.name(), across.name());
        Self { within, across, label }
    }
}

impl CorrespondenceSource for CompositeSource<'_> {
    fn name(&self) -> &str {
        &self.label
    }

    fn correspondences(&self, src: FrameRef<'_>, dst: FrameRef<'_>) -> Result<CorrespondenceSet, BundleError> {
        if src.bundle.root() == dst.bundle.root() {
            self.within.correspondences(src, dst)
        } else {
            self.across.correspondences(src, dst)
        }
    }
}

fn disk(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> Mask {
    Mask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// Renders an episode into `dir` (created if needed) and returns the loaded
/// bundle. Identical `(cfg, seed)` produce byte-identical files.
pub fn generate_synthetic_episode(
    cfg: &SyntheticEpisodeConfig,
    seed: u64,
    dir: &Path,
) -> Result<EpisodeBundle, EvalError> {
    cfg.validate()?;
    let io = |e: std::io::Error| EvalError::Correspond(crate::correspond::CorrespondError::io(dir, e));
    std::fs::create_dir_all(dir).map_err(io)?;

    let (x0, base_steps) = cfg.base_path();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[OFFSET_TAG]));
    let object_offset = sample_offset(
        &mut rng,
        x0.translation(),
        cfg.offsets.object_translation_m,
        cfg.offsets.object_rotation_rad,
    );
    let secondary_offset = cfg.secondary_base().map(|y0| {
        sample_offset(
            &mut rng,
            y0.translation(),
            cfg.offsets.secondary_translation_m,
            cfg.offsets.secondary_rotation_rad,
        )
    });
    let secondary_pose = cfg
        .secondary_base()
        .zip(secondary_offset)
        .map(|(y0, n)| compose(&n, &y0));
    let goal = secondary_offset.filter(|_| cfg.warp.use_secondary);
    let relative_poses = warp_trajectory(&base_steps, &object_offset, goal.as_ref(), &cfg.warp)
        .map_err(|e| EvalError::ConfigInvalid(e.to_string()))?;
    let mut object_poses = vec![compose(&object_offset, &x0)];
    for s in &relative_poses {
        let next = compose(s, object_poses.last().expect("nonempty"));
        object_poses.push(next);
    }
    let total_motion = compose(&object_poses[cfg.frames - 1], &object_poses[0].inverse());

    let mut gt = GroundTruth {
        seed,
        config: cfg.clone(),
        object_poses,
        secondary_pose,
        relative_poses,
        base_steps,
        total_motion,
        object_offset,
        secondary_offset,
        hand_point: None,
        outliers: Vec::new(),
    };

    let clouds = gt.clouds();
    let refs: Vec<&[Point3]> = clouds.iter().map(|c| c.as_slice()).collect();
    let k = &cfg.intrinsics;
    let mut frames = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let r = render_frame(
            &refs,
            &gt.poses_at(f),
            k,
            cfg.noise.depth_sigma,
            derive_seed(seed, &[FRAME_TAG, f as u64]),
        )?;
        let mut rec = FrameRecord {
            depth: format!("depth_{f:02}.f32"),
            mask: format!("mask_{f:02}.pgm"),
            secondary_mask: None,
            hand_mask: None,
            correspondences_next: None,
            bridges: Vec::new(),
            discarded: false,
        };
        r.depth.write(&dir.join(&rec.depth))?;
        r.masks[0].write(&dir.join(&rec.mask))?;
        if r.masks.len() > 1 {
            let name = format!("secondary_{f:02}.pgm");
            r.masks[1].write(&dir.join(&name))?;
            rec.secondary_mask = Some(name);
        }
        if f == cfg.grasp_frame_index {
            if let Some((cu, cv)) = r.masks[0].centroid() {
                let (px, py) = (crate::geom::round_pixel(cu) as f64, crate::geom::round_pixel(cv) as f64);
                let name = format!("hand_{f:02}.pgm");
                disk(k.width, k.height, px, py, cfg.hand_radius_px).write(&dir.join(&name))?;
                rec.hand_mask = Some(name);
                gt.hand_point = r
                    .depth
                    .valid_at(px as u32, py as u32)
                    .map(|d| k.backproject(px, py, d))
                    .transpose()
                    .map_err(crate::correspond::CorrespondError::from)?;
            }
        }
        frames.push(rec);
    }

    for f in 0..cfg.frames - 1 {
        let noise = SyntheticNoiseParams {
            seed: derive_seed(seed, &[MATCH_TAG, seed, f as u64, seed, f as u64 + 1]),
            ..cfg.noise
        };
        let (c, outliers) = scene_matches(&gt, f, &gt, f + 1, &noise)?;
        let name = format!("corr_{f:02}.json");
        write_file(&dir.join(&name), correspondences_to_json(&c).as_bytes())?;
        frames[f].correspondences_next = Some(name);
        gt.outliers
            .push(outliers.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect());
    }

    let grasps = grasp_candidates(&gt, &clouds[0], seed);
    write_file(&dir.join(GRASPS_FILE), to_json_pretty(&grasps).as_bytes())?;
    write_file(&dir.join(GROUND_TRUTH_FILE), to_json_pretty(&gt).as_bytes())?;
    let manifest = Manifest {
        format: FORMAT_VERSION,
        intrinsics: *k,
        frames,
        grasp_frame_index: cfg.grasp_frame_index,
        ground_truth: Some(GROUND_TRUTH_FILE.into()),
        grasps: Some(GRASPS_FILE.into()),
    };
    let bundle = EpisodeBundle::new(dir.to_path_buf(), manifest)?;
    bundle.write_manifest()?;
    Ok(bundle)
}

/// Grasps on object surface points at frame 0 plus two far from it.
fn grasp_candidates(gt: &GroundTruth, cloud: &[Point3], seed: u64) -> GraspFile {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[GRASP_TAG]));
    let pose0 = gt.object_poses[0];
    let n = gt.config.grasp_count;
    let mut grasps: Vec<GraspCandidate> = (0..n)
        .map(|j| {
            let p = pose0.apply(&cloud[j * cloud.len() / n.max(1)]);
            GraspCandidate {
                pose: Pose::from_parts(pose0.rotation(), p.coords),
                score: rng.random_range(0.0..1.0),
            }
        })
        .collect();
    for dz in [0.3, -0.3] {
        let p = pose0.translation() + Vector3::new(0.0, 0.0, dz);
        grasps.push(GraspCandidate {
            pose: Pose::from_parts(pose0.rotation(), p),
            score: rng.random_range(0.0..1.0),
        });
    }
    GraspFile { grasps }
}
