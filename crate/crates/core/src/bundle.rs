//! On-disk episode bundles: a directory holding `manifest.json`, per-frame
//! depth (raw f32) and mask (PGM) files, correspondence files, and optional
//! JSON sidecars. All paths inside the manifest are relative to the bundle.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspond::{load_correspondences, CorrespondError, CorrespondenceSet, DepthImage, Mask};
use crate::geom::CameraIntrinsics;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Correspond(#[from] CorrespondError),
    #[error("invalid bundle {}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("no correspondences from frame {src} to frame {dst} in {}", path.display())]
    MissingCorrespondences { path: PathBuf, src: usize, dst: usize },
}

/// Correspondences from a frame to a later, non-adjacent frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub target: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub depth: String,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondences_next: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bridges: Vec<Bridge>,
    #[serde(default)]
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<FrameRecord>,
    pub grasp_frame_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasps: Option<String>,
}

/// A loaded manifest plus the directory it was read from.
#[derive(Debug, Clone)]
pub struct EpisodeBundle {
    root: PathBuf,
    manifest: Manifest,
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CorrespondError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorrespondError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CorrespondError::from_json(path, e))
}

/// Pretty JSON with a trailing newline; the byte layout is stable.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorrespondError> {
    std::fs::write(path, bytes).map_err(|e| CorrespondError::io(path, e))
}

impl EpisodeBundle {
    /// Reads and validates `dir/manifest.json`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(CorrespondError::Malformed(crate::correspond::Malformed {
                path: Some(path),
                line: None,
                column: None,
                message: "bundle manifest not found".into(),
            })
            .into());
        }
        let manifest: Manifest = read_json(&path)?;
        Self::new(root, manifest)
    }

    pub fn new(root: PathBuf, manifest: Manifest) -> Result<Self, BundleError> {
        let b = Self { root, manifest };
        b.validate()?;
        Ok(b)
    }

    fn invalid(&self, message: impl Into<String>) -> BundleError {
        BundleError::Invalid {
            path: self.root.clone(),
            message: message.into(),
        }
    }

    fn validate(&self) -> Result<(), BundleError> {
        let m = &self.manifest;
        if m.format != FORMAT_VERSION {
            return Err(self.invalid(format!("unsupported format version {}", m.format)));
        }
        m.intrinsics
            .validate()
            .map_err(|e| self.invalid(e.to_string()))?;
        let n = m.frames.len();
        if n < 2 {
            return Err(self.invalid(format!("needs at least 2 frames, has {n}")));
        }
        if m.grasp_frame_index >= n {
            return Err(self.invalid(format!("grasp_frame_index {} out of range", m.grasp_frame_index)));
        }
        for (i, f) in m.frames.iter().enumerate() {
            if let Some(b) = f.bridges.iter().find(|b| b.target <= i + 1 || b.target >= n) {
                return Err(self.invalid(format!("frame {i} has bridge to invalid target {}", b.target)));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Final path component, used to label report rows.
    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.manifest.intrinsics
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &FrameRecord {
        &self.manifest.frames[i]
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Indices of frames not flagged as discarded.
    pub fn kept_frames(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.frame(i).discarded).collect()
    }

    pub fn depth(&self, i: usize) -> Result<DepthImage, BundleError> {
        let k = self.intrinsics();
        Ok(DepthImage::read(&self.path(&self.frame(i).depth), k.width, k.height)?)
    }

    fn read_mask(&self, rel: &str) -> Result<Mask, BundleError> {
        let path = self.path(rel);
        let mask = Mask::read(&path)?;
        let k = self.intrinsics();
        if mask.dims() != (k.width, k.height) {
            return Err(CorrespondError::DimensionMismatch(format!(
                "{} is {}x{}, intrinsics are {}x{}",
                path.display(),
                mask.width(),
                mask.height(),
                k.width,
                k.height
            ))
            .into());
        }
        Ok(mask)
    }

    pub fn mask(&self, i: usize) -> Result<Mask, BundleError> {
        self.read_mask(&self.frame(i).mask)
    }

    pub fn secondary_mask(&self, i: usize) -> Result<Option<Mask>, BundleError> {
        self.frame(i)
            .secondary_mask
            .as_deref()
            .map(|p| self.read_mask(p))
            .transpose()
    }

    pub fn hand_mask(&self, i: usize) -> Result<Option<Mask>, BundleError> {
        self.frame(i)
            .hand_mask
            .as_deref()
            .map(|p| self.read_mask(p))
            .transpose()
    }

    /// Correspondence file from frame `src` to frame `dst`: the `next` file
    /// when adjacent, otherwise a matching bridge.
    pub fn correspondence_path(&self, src: usize, dst: usize) -> Option<PathBuf> {
        let f = self.manifest.frames.get(src)?;
        if dst == src + 1 {
            if let Some(p) = &f.correspondences_next {
                return Some(self.path(p));
            }
        }
        f.bridges
            .iter()
            .find(|b| b.target == dst)
            .map(|b| self.path(&b.path))
    }

    pub fn correspondences(&self, src: usize, dst: usize) -> Result<CorrespondenceSet, BundleError> {
        let path = self
            .correspondence_path(src, dst)
            .ok_or_else(|| BundleError::MissingCorrespondences {
                path: self.root.clone(),
                src,
                dst,
            })?;
        Ok(load_correspondences(&path)?)
    }

    /// Parses the ground-truth sidecar, if the manifest names one.
    pub fn read_sidecar<T: DeserializeOwned>(&self) -> Result<Option<T>, BundleError> {
        self.manifest
            .ground_truth
            .as_deref()
            .map(|p| read_json(&self.path(p)).map_err(BundleError::from))
            .transpose()
    }

    pub fn read_grasps<T: DeserializeOwned>(&self) -> Result<Option<T>, BundleError> {
        self.manifest
            .grasps
            .as_deref()
            .map(|p| read_json(&self.path(p)).map_err(BundleError::from))
            .transpose()
    }

    /// Writes the manifest into the bundle directory.
    pub fn write_manifest(&self) -> Result<(), BundleError> {
        let path = self.root.join(MANIFEST_FILE);
        Ok(write_file(&path, to_json_pretty(&self.manifest).as_bytes())?)
    }

    /// Copy with frames outside `keep` flagged as discarded.
    pub fn with_only_frames(&self, keep: &[usize]) -> Self {
        let mut b = self.clone();
        for (i, f) in b.manifest.frames.iter_mut().enumerate() {
            f.discarded = f.discarded || !keep.contains(&i);
        }
        b
    }
}

/// `t` indices spread linearly over `0..n`, always including both ends.
pub fn subsample_indices(n: usize, t: usize) -> Vec<usize> {
    if t >= n {
        return (0..n).collect();
    }
    if t <= 1 {
        return vec![0];
    }
    (0..t)
        .map(|i| ((i * (n - 1)) as f64 / (t - 1) as f64).round() as usize)
        .collect()
}
