//! Least-squares rigid registration of 3D point pairs, with a RANSAC wrapper.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point3, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no consensus: best hypothesis has {found} inliers, {required} required")]
    NoConsensus { found: usize, required: usize },
    #[error("too few point pairs: have {have}, need at least {need}")]
    TooFewPairs { have: usize, need: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Source/destination point pairs with optional nonnegative weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointPairSet {
    src: Vec<Point3>,
    dst: Vec<Point3>,
    weights: Option<Vec<f64>>,
}

impl PointPairSet {
    pub fn new(src: Vec<Point3>, dst: Vec<Point3>) -> Result<Self, RegistrationError> {
        if src.len() != dst.len() {
            return Err(RegistrationError::InvalidInput(format!(
                "{} source points but {} destination points",
                src.len(),
                dst.len()
            )));
        }
        if src.iter().chain(dst.iter()).any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(RegistrationError::InvalidInput("non-finite point".into()));
        }
        Ok(Self {
            src,
            dst,
            weights: None,
        })
    }

    pub fn with_weights(
        src: Vec<Point3>,
        dst: Vec<Point3>,
        weights: Vec<f64>,
    ) -> Result<Self, RegistrationError> {
        let mut set = Self::new(src, dst)?;
        if weights.len() != set.src.len() {
            return Err(RegistrationError::InvalidInput(format!(
                "{} weights for {} pairs",
                weights.len(),
                set.src.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RegistrationError::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        set.weights = Some(weights);
        Ok(set)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Point3, Point3)>) -> Self {
        let (src, dst) = pairs.into_iter().unzip();
        Self {
            src,
            dst,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[Point3] {
        &self.src
    }

    pub fn dst(&self) -> &[Point3] {
        &self.dst
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn subset(&self, indices: &[usize]) -> PointPairSet {
        PointPairSet {
            src: indices.iter().map(|&i| self.src[i]).collect(),
            dst: indices.iter().map(|&i| self.dst[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Weighted sum of squared residuals of `pose` over all pairs.
    pub fn objective(&self, pose: &Pose) -> f64 {
        (0..self.len())
            .map(|i| self.weight(i) * (pose.apply(&self.src[i]) - self.dst[i]).norm_squared())
            .sum()
    }

    fn residual_sq(&self, pose: &Pose, i: usize) -> f64 {
        (pose.apply(&self.src[i]) - self.dst[i]).norm_squared()
    }
}

/// Smallest-to-largest ratio of the source scatter's two leading singular
/// values below which the points count as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

/// Weighted least-squares rigid transform mapping `src` onto `dst`.
///
/// Cross-covariance SVD with the reflection case corrected, so the returned
/// rotation always has determinant +1.
pub fn fit_rigid_svd(pairs: &PointPairSet) -> Result<Pose, RegistrationError> {
    let n = pairs.len();
    let positive = (0..n).filter(|&i| pairs.weight(i) > 0.0).count();
    if positive < 3 {
        return Err(RegistrationError::DegenerateConfiguration(format!(
            "{positive} pairs with positive weight, need 3"
        )));
    }
    let total: f64 = (0..n).map(|i| pairs.weight(i)).sum();
    let mut src_c = Vector3::zeros();
    let mut dst_c = Vector3::zeros();
    for i in 0..n {
        let w = pairs.weight(i);
        src_c += pairs.src[i].coords * w;
        dst_c += pairs.dst[i].coords * w;
    }
    src_c /= total;
    dst_c /= total;

    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for i in 0..n {
        let w = pairs.weight(i);
        if w == 0.0 {
            continue;
        }
        let s = pairs.src[i].coords - src_c;
        let d = pairs.dst[i].coords - dst_c;
        scatter += s * s.transpose() * w;
        cross += s * d.transpose() * w;
    }

    let mut spread = scatter.singular_values().as_slice().to_vec();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] < COLLINEAR_RATIO * spread[0] {
        return Err(RegistrationError::DegenerateConfiguration(
            "source points are coincident or collinear".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(RegistrationError::DegenerateConfiguration(
            "SVD did not converge".into(),
        ));
    };
    let v = v_t.transpose();
    let mut d = Vector3::repeat(1.0);
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        d[smallest] = -1.0;
    }
    let rotation = v * Matrix3::from_diagonal(&d) * u.transpose();
    let translation = dst_c - rotation * src_c;
    let pose = Pose::from_rotation_matrix(&rotation, translation);
    if !pose.is_finite() {
        return Err(RegistrationError::DegenerateConfiguration(
            "non-finite solution".into(),
        ));
    }
    Ok(pose)
}

/// RANSAC settings. `min_inliers = None` means `max(6, 20% of pairs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Residual distance below which a pair counts as an inlier, meters.
    pub inlier_threshold: f64,
    pub sample_size: usize,
    pub min_inliers: Option<usize>,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold: 0.01,
            sample_size: 3,
            min_inliers: None,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.sample_size < 3 {
            return Err(RegistrationError::InvalidInput(
                "sample_size must be at least 3".into(),
            ));
        }
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return Err(RegistrationError::InvalidInput(
                "inlier_threshold must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(RegistrationError::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn min_inliers_for(&self, pair_count: usize) -> usize {
        self.min_inliers
            .unwrap_or_else(|| 6.max((pair_count as f64 * 0.2).ceil() as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps source points onto destination points.
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    pub rms_inlier_error: f64,
}

impl RegistrationResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inlier_rate(&self) -> f64 {
        if self.inlier_mask.is_empty() {
            0.0
        } else {
            self.inlier_count() as f64 / self.inlier_mask.len() as f64
        }
    }
}

/// Stop sampling once this fraction of pairs agrees with a hypothesis.
const EARLY_EXIT_RATIO: f64 = 0.99;
const MAX_REFITS: usize = 10;

/// Robust rigid fit: minimal-sample hypotheses scored by inlier count, then a
/// least-squares refit on the consensus set, repeated until the set settles.
///
/// Deterministic for a fixed `params.seed`.
pub fn fit_rigid_ransac(
    pairs: &PointPairSet,
    params: &RansacParams,
) -> Result<RegistrationResult, RegistrationError> {
    params.validate()?;
    let n = pairs.len();
    if n < params.sample_size {
        return Err(RegistrationError::TooFewPairs {
            have: n,
            need: params.sample_size,
        });
    }
    let candidates: Vec<usize> = (0..n).filter(|&i| pairs.weight(i) > 0.0).collect();
    if candidates.len() < params.sample_size {
        return Err(RegistrationError::TooFewPairs {
            have: candidates.len(),
            need: params.sample_size,
        });
    }
    let required = params.min_inliers_for(n).max(3);
    let thr_sq = params.inlier_threshold * params.inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    let mut sample_idx = Vec::with_capacity(params.sample_size);
    for _ in 0..params.max_iterations {
        sample_idx.clear();
        sample_idx.extend(
            rand::seq::index::sample(&mut rng, candidates.len(), params.sample_size)
                .iter()
                .map(|k| candidates[k]),
        );
        let Ok(hypothesis) = fit_rigid_svd(&pairs.subset(&sample_idx)) else {
            continue;
        };
        let mut count = 0;
        let mut cost = 0.0;
        let mut mask = vec![false; n];
        for (i, m) in mask.iter_mut().enumerate() {
            let r = pairs.residual_sq(&hypothesis, i);
            if r < thr_sq {
                *m = true;
                count += 1;
                cost += r;
            } else {
                cost += thr_sq;
            }
        }
        let better = match &best {
            None => true,
            Some((c, k, _)) => count > *c || (count == *c && cost < *k),
        };
        if better {
            best = Some((count, cost, mask));
        }
        if count as f64 >= EARLY_EXIT_RATIO * n as f64 {
            break;
        }
    }

    let Some((found, _, mut mask)) = best else {
        return Err(RegistrationError::DegenerateConfiguration(
            "every minimal sample was degenerate".into(),
        ));
    };
    if found < required {
        return Err(RegistrationError::NoConsensus { found, required });
    }

    let indices = |m: &[bool]| -> Vec<usize> { (0..n).filter(|&i| m[i]).collect() };
    let inliers_of = |pose: &Pose| -> Vec<bool> {
        (0..n).map(|i| pairs.residual_sq(pose, i) < thr_sq).collect()
    };
    let mut pose = fit_rigid_svd(&pairs.subset(&indices(&mask)))?;
    for _ in 0..MAX_REFITS {
        let next = inliers_of(&pose);
        if next == mask || next.iter().filter(|&&b| b).count() < 3 {
            break;
        }
        mask = next;
        pose = fit_rigid_svd(&pairs.subset(&indices(&mask)))?;
    }
    let mask = inliers_of(&pose);
    let count = mask.iter().filter(|&&b| b).count();
    if count < required {
        return Err(RegistrationError::NoConsensus {
            found: count,
            required,
        });
    }
    let sum_sq: f64 = (0..n)
        .filter(|&i| mask[i])
        .map(|i| pairs.residual_sq(&pose, i))
        .sum();
    Ok(RegistrationResult {
        pose,
        inlier_mask: mask,
        rms_inlier_error: (sum_sq / count as f64).sqrt(),
    })
}
