//! Rigid transforms, quaternion interpolation and the pinhole camera.
//!
//! A [`Pose`] is stored as a unit quaternion `[w, x, y, z]` plus a translation
//! in meters. Every constructor and every operation returning a pose leaves the
//! quaternion normalized and in canonical sign (`w >= 0`; when `w == 0` the
//! first nonzero vector component is positive), so two equal rotations always
//! serialize to the same bytes.

use std::fmt;

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in camera or object coordinates, meters.
pub type Point3 = nalgebra::Point3<f64>;

/// Squared-norm slack tolerated before a quaternion is renormalized.
const NORM_SLACK: f64 = 1e-14;

/// Slerp falls back to normalized lerp above this quaternion dot product.
const SLERP_LINEAR_DOT: f64 = 1.0 - 1e-9;

/// Depth readings beyond this range are treated as missing.
pub const MAX_VALID_DEPTH: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid depth {0}: must be finite and > 0")]
    InvalidDepth(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

/// Rigid transform in SE(3).
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Quaternion<f64>,
    translation: Vector3<f64>,
}

/// On-disk form, `{"t":[x,y,z],"q":[w,x,y,z]}`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    t: [f64; 3],
    q: [f64; 4],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeomError;

    fn try_from(repr: PoseRepr) -> Result<Self, Self::Error> {
        Pose::new(repr.q, repr.t)
    }
}

impl From<Pose> for PoseRepr {
    fn from(pose: Pose) -> Self {
        PoseRepr {
            t: pose.translation.into(),
            q: pose.quaternion(),
        }
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        let t = self.translation;
        write!(
            f,
            "Pose {{ q: [{}, {}, {}, {}], t: [{}, {}, {}] }}",
            q[0], q[1], q[2], q[3], t.x, t.y, t.z
        )
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Normalizes (only when the norm has drifted) and fixes the sign.
///
/// Idempotent: a quaternion that already satisfies both conditions is
/// returned bit-for-bit unchanged.
fn canonical(q: Quaternion<f64>) -> Quaternion<f64> {
    let n2 = q.norm_squared();
    let q = if (n2 - 1.0).abs() > NORM_SLACK {
        q / n2.sqrt()
    } else {
        q
    };
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else {
        [q.i, q.j, q.k]
            .into_iter()
            .find(|c| *c != 0.0)
            .is_some_and(|c| c < 0.0)
    };
    let q = if flip { -q } else { q };
    // Adding +0.0 turns -0.0 into 0.0 so serialization is stable.
    Quaternion::new(q.w + 0.0, q.i + 0.0, q.j + 0.0, q.k + 0.0)
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a `[w, x, y, z]` quaternion (normalized here) and a
    /// translation.
    pub fn new(q: [f64; 4], t: [f64; 3]) -> Result<Self, GeomError> {
        if q.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidPose("non-finite component".into()));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if quat.norm() < 1e-12 {
            return Err(GeomError::InvalidPose("zero-norm quaternion".into()));
        }
        Ok(Self {
            rotation: canonical(quat / quat.norm()),
            translation: Vector3::from(t),
        })
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(rotation.into_inner()),
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: t,
        }
    }

    /// Pure rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        if angle == 0.0 || axis.norm() == 0.0 {
            return Self::identity();
        }
        let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::from_parts(rot, Vector3::zeros())
    }

    /// Rotation from a rotation vector (axis scaled by angle) plus translation.
    pub fn from_rotation_vector(rotvec: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::from_parts(UnitQuaternion::from_scaled_axis(rotvec), t)
    }

    /// The caller guarantees `m` is a proper rotation matrix.
    pub fn from_rotation_matrix(m: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self::from_parts(UnitQuaternion::from_rotation_matrix(&rot), t)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.rotation;
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_unchecked(self.rotation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation().to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.rotation;
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation() * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v
    }

    /// `self ∘ other`: the returned pose applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: canonical(self.rotation * other.rotation),
            translation: self.rotation() * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation().inverse();
        Pose {
            rotation: canonical(inv.into_inner()),
            translation: -(inv * self.translation),
        }
    }

    /// 4x4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.quaternion()
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
    }
}

/// Free-function form of [`Pose::compose`].
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(a: &Pose) -> Pose {
    a.inverse()
}

/// Blends two poses: `alpha = 1` yields `a`, `alpha = 0` yields `b`.
///
/// Rotation follows the shortest great arc between the quaternions and the
/// translation is interpolated linearly. Nearly parallel quaternions are
/// blended with normalized lerp.
pub fn slerp_pose(a: &Pose, b: &Pose, alpha: f64) -> Pose {
    if alpha >= 1.0 || a == b {
        return *a;
    }
    if alpha <= 0.0 {
        return *b;
    }
    let qa = a.rotation;
    let mut qb = b.rotation;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    // weight alpha on `a`, (1 - alpha) on `b`
    let rotation = if dot > SLERP_LINEAR_DOT {
        let q = qb * (1.0 - alpha) + qa * alpha;
        q / q.norm()
    } else {
        let theta = dot.min(1.0).acos();
        let sin_theta = theta.sin();
        let wb = ((1.0 - alpha) * theta).sin() / sin_theta;
        let wa = (alpha * theta).sin() / sin_theta;
        qb * wb + qa * wa
    };
    Pose {
        rotation: canonical(rotation),
        translation: a.translation * alpha + b.translation * (1.0 - alpha),
    }
}

/// Angle-axis rotation distance (radians, in `[0, pi]`) and Euclidean
/// translation distance (meters) between two poses.
///
/// The rotation term equals `acos((trace(Ra Rb^T) - 1) / 2)`; it is evaluated
/// through the relative quaternion, which stays accurate near 0 and pi where
/// the arccos form loses about eight digits.
pub fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    let rot = if a.rotation == b.rotation {
        0.0
    } else {
        let rel = a.rotation * b.rotation.conjugate();
        2.0 * rel.imag().norm().atan2(rel.w.abs())
    };
    let trans = (a.translation - b.translation).norm();
    (rot.clamp(0.0, std::f64::consts::PI), trans)
}

/// Pinhole camera without distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = GeomError;

    fn try_from(r: IntrinsicsRepr) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeomError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3, GeomError> {
        backproject(u, v, depth, self)
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if !(p.z > 0.0) {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Whether real pixel coordinates fall inside `[0, w-1] x [0, h-1]`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Lifts a pixel with metric depth to a camera-frame point.
pub fn backproject(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3, GeomError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeomError::InvalidDepth(depth));
    }
    Ok(Point3::new(
        (u - k.cx) * depth / k.fx,
        (v - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Round-half-up to the nearest integer pixel index.
pub fn round_pixel(c: f64) -> i64 {
    (c + 0.5).floor() as i64
}
