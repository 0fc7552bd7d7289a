//! Z-buffered rendering of point clouds and ground-truth correspondences.
//!
//! Each cloud is splatted into its nearest pixel. A pixel stores the depth of
//! its nearest point (its owner); masks are exact silhouettes of the owners.
//! A point yields a match only when it owns its pixel in both frames, so with
//! zero noise every match lifts back to the exact point pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CorrespondError, CorrespondenceSet, DepthImage, Mask, Match};
use crate::geom::{CameraIntrinsics, Point3, Pose};
use crate::seed::derive_seed;

const NO_OWNER: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNoiseParams {
    /// Standard deviation of target pixel jitter, pixels.
    pub pixel_sigma: f64,
    /// Fraction of matches whose target is replaced by a random pixel.
    pub outlier_fraction: f64,
    /// Standard deviation of per-pixel depth noise, meters.
    pub depth_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticNoiseParams {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.2,
            outlier_fraction: 0.2,
            depth_sigma: 0.001,
            seed: 0,
        }
    }
}

impl SyntheticNoiseParams {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            pixel_sigma: 0.0,
            outlier_fraction: 0.0,
            depth_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorrespondError> {
        let ok = self.pixel_sigma.is_finite()
            && self.pixel_sigma >= 0.0
            && self.depth_sigma.is_finite()
            && self.depth_sigma >= 0.0
            && (0.0..1.0).contains(&self.outlier_fraction);
        if ok {
            Ok(())
        } else {
            Err(CorrespondError::InvalidParams(format!(
                "noise parameters out of range: {self:?}"
            )))
        }
    }
}

/// A rendered view of several rigid clouds.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub depth: DepthImage,
    /// One silhouette per cloud, in input order.
    pub masks: Vec<Mask>,
    owner: Vec<u64>,
}

impl RenderedFrame {
    /// `(cloud, point)` owning pixel `(x, y)`.
    pub fn owner(&self, x: u32, y: u32) -> Option<(usize, usize)> {
        let o = self.owner[y as usize * self.depth.width() as usize + x as usize];
        (o != NO_OWNER).then(|| ((o >> 32) as usize, (o & 0xffff_ffff) as usize))
    }
}

fn pack(cloud: usize, point: usize) -> u64 {
    ((cloud as u64) << 32) | point as u64
}

fn check_scene(clouds: &[&[Point3]], poses: &[Pose]) -> Result<(), CorrespondError> {
    if clouds.len() != poses.len() {
        return Err(CorrespondError::InvalidParams(format!(
            "{} clouds but {} poses",
            clouds.len(),
            poses.len()
        )));
    }
    if clouds.is_empty() || clouds.iter().any(|c| c.is_empty()) {
        return Err(CorrespondError::EmptyCloud);
    }
    Ok(())
}

/// Renders clouds (given in their own frames) placed at `poses` in the camera
/// frame. Depth noise is drawn per owned pixel in row-major order.
pub fn render_frame(
    clouds: &[&[Point3]],
    poses: &[Pose],
    k: &CameraIntrinsics,
    depth_sigma: f64,
    seed: u64,
) -> Result<RenderedFrame, CorrespondError> {
    check_scene(clouds, poses)?;
    let (w, h) = (k.width, k.height);
    let n = k.pixel_count();
    let mut zbuf = vec![f64::INFINITY; n];
    let mut owner = vec![NO_OWNER; n];
    for (ci, (cloud, pose)) in clouds.iter().zip(poses).enumerate() {
        for (pi, p) in cloud.iter().enumerate() {
            let q = pose.apply(p);
            if !(q.z > 0.0) {
                return Err(CorrespondError::BehindCamera {
                    cloud: ci,
                    index: pi,
                    z: q.z,
                });
            }
            let Some((u, v)) = k.project(&q) else { continue };
            let Some((x, y)) = super::pixel_index(u, v, w, h) else {
                continue;
            };
            let idx = y as usize * w as usize + x as usize;
            if q.z < zbuf[idx] {
                zbuf[idx] = q.z;
                owner[idx] = pack(ci, pi);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (depth_sigma > 0.0).then(|| Normal::new(0.0, depth_sigma).expect("sigma > 0"));
    let mut depth = DepthImage::filled(w, h, 0.0);
    let mut masks = vec![Mask::empty(w, h); clouds.len()];
    for idx in 0..n {
        if owner[idx] == NO_OWNER {
            continue;
        }
        let (x, y) = ((idx % w as usize) as u32, (idx / w as usize) as u32);
        let noise = normal.map_or(0.0, |d| d.sample(&mut rng));
        depth.set(x, y, (zbuf[idx] + noise) as f32);
        masks[(owner[idx] >> 32) as usize].set(x, y, true);
    }
    Ok(RenderedFrame {
        depth,
        masks,
        owner,
    })
}

/// Ground-truth matches between two renderings of the same clouds.
#[derive(Debug, Clone)]
pub struct SyntheticMatches {
    pub correspondences: CorrespondenceSet,
    /// `true` where the target pixel was replaced by a random one.
    pub outliers: Vec<bool>,
    /// Index of the cloud each match was drawn from.
    pub cloud_of_match: Vec<usize>,
}

/// Enumerates points owning their pixel in both frames (source row-major
/// order), jitters targets by `pixel_sigma`, then replaces exactly
/// `floor(outlier_fraction * N)` targets with uniform in-bounds pixels.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_matches(
    clouds: &[&[Point3]],
    src_poses: &[Pose],
    dst_poses: &[Pose],
    src: &RenderedFrame,
    dst: &RenderedFrame,
    k: &CameraIntrinsics,
    noise: &SyntheticNoiseParams,
    frames: (&str, &str),
) -> Result<SyntheticMatches, CorrespondError> {
    noise.validate()?;
    check_scene(clouds, src_poses)?;
    check_scene(clouds, dst_poses)?;
    let (w, h) = (k.width, k.height);
    let mut matches = Vec::new();
    let mut cloud_of_match = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let Some((ci, pi)) = src.owner(x, y) else { continue };
            let p = &clouds[ci][pi];
            let (Some((u1, v1)), Some((u2, v2))) = (
                k.project(&src_poses[ci].apply(p)),
                k.project(&dst_poses[ci].apply(p)),
            ) else {
                continue;
            };
            let Some((x2, y2)) = super::pixel_index(u2, v2, w, h) else {
                continue;
            };
            if dst.owner(x2, y2) != Some((ci, pi)) || !k.contains(u1, v1) || !k.contains(u2, v2) {
                continue;
            }
            matches.push(Match::exact(u1, v1, u2, v2));
            cloud_of_match.push(ci);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let (max_u, max_v) = ((w - 1) as f64, (h - 1) as f64);
    if noise.pixel_sigma > 0.0 {
        let jitter = Normal::new(0.0, noise.pixel_sigma).expect("sigma > 0");
        for m in &mut matches {
            m.u2 = (m.u2 + jitter.sample(&mut rng)).clamp(0.0, max_u);
            m.v2 = (m.v2 + jitter.sample(&mut rng)).clamp(0.0, max_v);
        }
    }
    let n = matches.len();
    let n_out = (noise.outlier_fraction * n as f64).floor() as usize;
    let mut outliers = vec![false; n];
    let mut chosen = rand::seq::index::sample(&mut rng, n, n_out).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        outliers[i] = true;
        matches[i].u2 = rng.random_range(0.0..=max_u);
        matches[i].v2 = rng.random_range(0.0..=max_v);
    }
    Ok(SyntheticMatches {
        correspondences: CorrespondenceSet::new(frames.0, frames.1).with_matches(matches),
        outliers,
        cloud_of_match,
    })
}

/// Everything produced for one moving cloud seen before and after `motion`.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub correspondences: CorrespondenceSet,
    pub depth_src: DepthImage,
    pub depth_dst: DepthImage,
    pub mask_src: Mask,
    pub mask_dst: Mask,
    pub outliers: Vec<bool>,
}

/// Renders `cloud` (camera frame) before and after `motion` and returns the
/// two depth images, exact masks, and noisy correspondences.
pub fn synthesize_correspondences(
    cloud: &[Point3],
    motion: &Pose,
    k: &CameraIntrinsics,
    noise: &SyntheticNoiseParams,
) -> Result<SyntheticPair, CorrespondError> {
    noise.validate()?;
    let clouds = [cloud];
    let src_poses = [Pose::identity()];
    let dst_poses = [*motion];
    let src = render_frame(&clouds, &src_poses, k, noise.depth_sigma, derive_seed(noise.seed, &[1]))?;
    let dst = render_frame(&clouds, &dst_poses, k, noise.depth_sigma, derive_seed(noise.seed, &[2]))?;
    let match_noise = SyntheticNoiseParams {
        seed: derive_seed(noise.seed, &[3]),
        ..*noise
    };
    let m = synthesize_matches(&clouds, &src_poses, &dst_poses, &src, &dst, k, &match_noise, ("src", "dst"))?;
    let RenderedFrame {
        depth: depth_src,
        masks: mut masks_src,
        ..
    } = src;
    let RenderedFrame {
        depth: depth_dst,
        masks: mut masks_dst,
        ..
    } = dst;
    Ok(SyntheticPair {
        correspondences: m.correspondences,
        depth_src,
        depth_dst,
        mask_src: masks_src.remove(0),
        mask_dst: masks_dst.remove(0),
        outliers: m.outliers,
    })
}

/// Regular grid of points on the `z = depth` plane covering `half_extent`
/// meters in x and y; handy for tests and benchmarks.
pub fn plane_cloud(depth: f64, half_extent: f64, spacing: f64) -> Vec<Point3> {
    let n = (2.0 * half_extent / spacing).round() as i64;
    let mut pts = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            pts.push(Point3::new(
                -half_extent + i as f64 * spacing,
                -half_extent + j as f64 * spacing,
                depth,
            ));
        }
    }
    pts
}
