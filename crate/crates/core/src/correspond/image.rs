//! Depth images (raw little-endian f32, meters) and binary masks (PGM P5).

use std::path::Path;

use crate::correspond::CorrespondError;
use crate::geom::{round_pixel, MAX_VALID_DEPTH};

/// Row-major depth image in meters; 0 marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, CorrespondError> {
        if data.len() != width as usize * height as usize {
            return Err(CorrespondError::DimensionMismatch(format!(
                "depth buffer has {} values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f32) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    /// Depth at integer pixel `(x, y)` if it is a usable reading
    /// (finite, positive and within sensor range).
    pub fn valid_at(&self, x: u32, y: u32) -> Option<f64> {
        let d = self.get(x, y) as f64;
        is_valid_depth(d).then_some(d)
    }

    /// Nearest-pixel lookup for real coordinates; `Err` when the rounded
    /// pixel lies outside the image, `Ok(None)` for a missing reading.
    pub fn lookup(&self, u: f64, v: f64) -> Result<Option<f64>, CorrespondError> {
        let (x, y) = pixel_index(u, v, self.width, self.height).ok_or_else(|| {
            CorrespondError::DimensionMismatch(format!(
                "pixel ({u}, {v}) outside {}x{} depth image",
                self.width, self.height
            ))
        })?;
        Ok(self.valid_at(x, y))
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|d| d.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self, CorrespondError> {
        let expected = width as usize * height as usize * 4;
        if bytes.len() != expected {
            return Err(CorrespondError::malformed(format!(
                "depth file has {} bytes, expected {expected} for {width}x{height}",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn read(path: &Path, width: u32, height: u32) -> Result<Self, CorrespondError> {
        let bytes = std::fs::read(path).map_err(|e| CorrespondError::io(path, e))?;
        Self::from_le_bytes(width, height, &bytes).map_err(|e| e.at_path(path))
    }

    pub fn write(&self, path: &Path) -> Result<(), CorrespondError> {
        std::fs::write(path, self.to_le_bytes()).map_err(|e| CorrespondError::io(path, e))
    }
}

pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0 && d <= MAX_VALID_DEPTH
}

/// Rounded (half-up) pixel index when it falls inside `width x height`.
pub fn pixel_index(u: f64, v: f64, width: u32, height: u32) -> Option<(u32, u32)> {
    let (x, y) = (round_pixel(u), round_pixel(v));
    (x >= 0 && y >= 0 && x < width as i64 && y < height as i64).then_some((x as u32, y as u32))
}

/// Per-pixel boolean occupancy.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    /// Inclusive pixel rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self::from_fn(width, height, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    /// Membership of real pixel coordinates after round-half-up; `None` when
    /// the rounded pixel lies outside the mask.
    pub fn contains(&self, u: f64, v: f64) -> Option<bool> {
        pixel_index(u, v, self.width, self.height).map(|(x, y)| self.get(x, y))
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Mean pixel coordinate of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn and(&self, other: &Mask) -> Result<Mask, CorrespondError> {
        if self.dims() != other.dims() {
            return Err(CorrespondError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Binary PGM (P5), 0 = background, 255 = object.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    /// Any nonzero sample counts as object.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, CorrespondError> {
        let mut pos = 0usize;
        let mut fields = [0u64; 3];
        let magic = next_token(bytes, &mut pos)
            .ok_or_else(|| CorrespondError::malformed("empty PGM file"))?;
        if magic != b"P5" {
            return Err(CorrespondError::malformed("not a binary PGM (expected P5)"));
        }
        for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
            let tok = next_token(bytes, &mut pos).ok_or_else(|| {
                CorrespondError::malformed(format!("PGM header missing {name} at offset {pos}"))
            })?;
            fields[i] = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    CorrespondError::malformed(format!("PGM {name} not a number at offset {pos}"))
                })?;
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(CorrespondError::malformed(format!(
                "unsupported PGM maxval {maxval}"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = (width * height) as usize;
        let raster = bytes.get(pos..pos + n).ok_or_else(|| {
            CorrespondError::malformed(format!(
                "PGM raster truncated: need {n} bytes at offset {pos}, file has {}",
                bytes.len()
            ))
        })?;
        Ok(Self {
            width: width as u32,
            height: height as u32,
            data: raster.iter().map(|&b| b != 0).collect(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, CorrespondError> {
        let bytes = std::fs::read(path).map_err(|e| CorrespondError::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|e| e.at_path(path))
    }

    pub fn write(&self, path: &Path) -> Result<(), CorrespondError> {
        std::fs::write(path, self.to_pgm()).map_err(|e| CorrespondError::io(path, e))
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_and_comments() {
        let m = Mask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        assert_eq!(Mask::from_pgm(&m.to_pgm()).unwrap(), m);
        let mut commented = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        commented.extend([0u8, 255]);
        let parsed = Mask::from_pgm(&commented).unwrap();
        assert!(!parsed.get(0, 0) && parsed.get(1, 0));
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(Mask::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(Mask::from_pgm(b"P5\n4 4\n255\n\x00\x00").is_err());
        assert!(Mask::from_pgm(b"P5\nx 4\n255\n").is_err());
    }

    #[test]
    fn depth_bytes_round_trip() {
        let d = DepthImage::new(3, 2, vec![0.0, 1.0, 2.5, f32::NAN, 11.0, -1.0]).unwrap();
        let back = DepthImage::from_le_bytes(3, 2, &d.to_le_bytes()).unwrap();
        assert_eq!(back.to_le_bytes(), d.to_le_bytes());
        assert_eq!(back.valid_at(1, 0), Some(1.0));
        for (x, y) in [(0, 0), (0, 1), (1, 1), (2, 1)] {
            assert_eq!(back.valid_at(x, y), None);
        }
        assert!(DepthImage::from_le_bytes(3, 3, &d.to_le_bytes()).is_err());
    }

    #[test]
    fn mask_geometry() {
        let m = Mask::rect(10, 10, 2, 3, 4, 5);
        assert_eq!(m.count(), 9);
        assert_eq!(m.centroid(), Some((3.0, 4.0)));
        assert_eq!(m.contains(2.4, 3.0), Some(true));
        assert_eq!(m.contains(1.5, 3.0), Some(true));
        assert_eq!(m.contains(1.49, 3.0), Some(false));
        assert_eq!(m.contains(9.6, 3.0), None);
        assert_eq!(Mask::empty(4, 4).centroid(), None);
    }
}
