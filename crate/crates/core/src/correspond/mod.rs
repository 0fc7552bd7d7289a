//! Pixel correspondences between frames: containers, mask filtering, lifting
//! to 3D point pairs, file I/O, and a synthetic generator with known motion.

mod image;
pub mod synth;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use image::{is_valid_depth, pixel_index, DepthImage, Mask};
pub use synth::{
    plane_cloud, SyntheticMatches,
    render_frame, synthesize_correspondences, synthesize_matches, RenderedFrame, SyntheticNoiseParams,
    SyntheticPair,
};

use crate::geom::{backproject, CameraIntrinsics, GeomError};
use crate::registration::PointPairSet;

#[derive(Debug, Error)]
pub enum CorrespondError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Malformed(Malformed),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point {index} of cloud {cloud} is behind the camera (z = {z})")]
    BehindCamera { cloud: usize, index: usize, z: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Parse failure with as much location information as is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Malformed {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed input")?;
        if let Some(p) = &self.path {
            write!(f, " {}", p.display())?;
        }
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at line {l}, column {c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl CorrespondError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::Malformed(Malformed {
            path: None,
            line: None,
            column: None,
            message: message.into(),
        })
    }

    pub fn from_json(path: &Path, err: serde_json::Error) -> Self {
        Self::Malformed(Malformed {
            path: Some(path.to_path_buf()),
            line: Some(err.line()),
            column: Some(err.column()),
            message: err.to_string(),
        })
    }

    /// Attaches a file path to a `Malformed` error that lacks one.
    pub fn at_path(self, path: &Path) -> Self {
        match self {
            Self::Malformed(mut m) if m.path.is_none() => {
                m.path = Some(path.to_path_buf());
                Self::Malformed(m)
            }
            other => other,
        }
    }
}

/// One pixel match from the source image `(u1, v1)` to the target `(u2, v2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatch")]
pub struct Match {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
    pub conf: f64,
}

#[derive(Deserialize)]
struct RawMatch {
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
    conf: f64,
}

impl TryFrom<RawMatch> for Match {
    type Error = String;

    fn try_from(r: RawMatch) -> Result<Self, Self::Error> {
        Match::new(r.u1, r.v1, r.u2, r.v2, r.conf)
    }
}

impl Match {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64, conf: f64) -> Result<Self, String> {
        if ![u1, v1, u2, v2].iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(format!(
                "pixel coordinates must be finite and nonnegative: ({u1}, {v1}) -> ({u2}, {v2})"
            ));
        }
        if !(0.0..=1.0).contains(&conf) {
            return Err(format!("confidence {conf} outside [0, 1]"));
        }
        Ok(Self {
            u1,
            v1,
            u2,
            v2,
            conf,
        })
    }

    pub fn exact(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self {
            u1,
            v1,
            u2,
            v2,
            conf: 1.0,
        }
    }
}

/// Matches between a source and a target frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub source_frame: String,
    pub target_frame: String,
    pub matches: Vec<Match>,
}

impl CorrespondenceSet {
    pub fn new(source_frame: impl Into<String>, target_frame: impl Into<String>) -> Self {
        Self {
            source_frame: source_frame.into(),
            target_frame: target_frame.into(),
            matches: Vec::new(),
        }
    }

    pub fn with_matches(mut self, matches: Vec<Match>) -> Self {
        self.matches = matches;
        self
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Checks every coordinate lies in `[0, w-1] x [0, h-1]` of its image.
    pub fn validate_bounds(&self, src: (u32, u32), dst: (u32, u32)) -> Result<(), CorrespondError> {
        let inside = |u: f64, v: f64, (w, h): (u32, u32)| u <= (w - 1) as f64 && v <= (h - 1) as f64;
        for (i, m) in self.matches.iter().enumerate() {
            if !inside(m.u1, m.v1, src) || !inside(m.u2, m.v2, dst) {
                return Err(CorrespondError::DimensionMismatch(format!(
                    "match {i} ({}, {}) -> ({}, {}) outside image bounds",
                    m.u1, m.v1, m.u2, m.v2
                )));
            }
        }
        Ok(())
    }
}

/// Keeps the matches whose rounded source pixel is set in `mask`, preserving
/// order. A source pixel outside the mask extent means the mask does not
/// belong to the source frame.
pub fn filter_by_mask(c: &CorrespondenceSet, mask: &Mask) -> Result<CorrespondenceSet, CorrespondError> {
    let mut kept = Vec::with_capacity(c.matches.len());
    for (i, m) in c.matches.iter().enumerate() {
        match mask.contains(m.u1, m.v1) {
            Some(true) => kept.push(*m),
            Some(false) => {}
            None => {
                return Err(CorrespondError::DimensionMismatch(format!(
                    "match {i} source pixel ({}, {}) outside {}x{} mask",
                    m.u1,
                    m.v1,
                    mask.width(),
                    mask.height()
                )))
            }
        }
    }
    Ok(CorrespondenceSet {
        source_frame: c.source_frame.clone(),
        target_frame: c.target_frame.clone(),
        matches: kept,
    })
}

/// 3D point pairs lifted from matches, with the index of the originating match.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPairs {
    pub pairs: PointPairSet,
    pub match_index: Vec<usize>,
}

/// Lifts matches to camera-frame 3D pairs using nearest-pixel depth lookup.
/// Matches with a missing or out-of-range depth at either end are dropped;
/// confidences become pair weights.
pub fn lift_correspondences(
    c: &CorrespondenceSet,
    depth_src: &DepthImage,
    depth_dst: &DepthImage,
    k: &CameraIntrinsics,
) -> Result<PointPairSet, CorrespondError> {
    lift_correspondences_indexed(c, depth_src, depth_dst, k).map(|l| l.pairs)
}

pub fn lift_correspondences_indexed(
    c: &CorrespondenceSet,
    depth_src: &DepthImage,
    depth_dst: &DepthImage,
    k: &CameraIntrinsics,
) -> Result<LiftedPairs, CorrespondError> {
    for (name, d) in [("source", depth_src), ("target", depth_dst)] {
        if (d.width(), d.height()) != (k.width, k.height) {
            return Err(CorrespondError::DimensionMismatch(format!(
                "{name} depth is {}x{}, intrinsics say {}x{}",
                d.width(),
                d.height(),
                k.width,
                k.height
            )));
        }
    }
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut weights = Vec::new();
    let mut match_index = Vec::new();
    for (i, m) in c.matches.iter().enumerate() {
        let (Some(d1), Some(d2)) = (depth_src.lookup(m.u1, m.v1)?, depth_dst.lookup(m.u2, m.v2)?)
        else {
            continue;
        };
        src.push(backproject(m.u1, m.v1, d1, k)?);
        dst.push(backproject(m.u2, m.v2, d2, k)?);
        weights.push(m.conf);
        match_index.push(i);
    }
    let pairs = PointPairSet::with_weights(src, dst, weights)
        .map_err(|e| CorrespondError::InvalidParams(e.to_string()))?;
    Ok(LiftedPairs { pairs, match_index })
}

pub fn load_correspondences(path: &Path) -> Result<CorrespondenceSet, CorrespondError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorrespondError::io(path, e))?;
    parse_correspondences(&text).map_err(|e| e.at_path(path))
}

pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, CorrespondError> {
    serde_json::from_str(text).map_err(|e| {
        CorrespondError::Malformed(Malformed {
            path: None,
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })
    })
}

/// JSON with one match per line so parse errors point at a useful line.
pub fn correspondences_to_json(c: &CorrespondenceSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{{\"source_frame\":{},\"target_frame\":{},\"matches\":[",
        serde_json::to_string(&c.source_frame).expect("string serializes"),
        serde_json::to_string(&c.target_frame).expect("string serializes"),
    ));
    for (i, m) in c.matches.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&serde_json::to_string(m).expect("match serializes"));
    }
    out.push_str("\n]}\n");
    out
}

pub fn store_correspondences(path: &Path, c: &CorrespondenceSet) -> Result<(), CorrespondError> {
    let mut f = std::fs::File::create(path).map_err(|e| CorrespondError::io(path, e))?;
    f.write_all(correspondences_to_json(c).as_bytes())
        .map_err(|e| CorrespondError::io(path, e))
}
