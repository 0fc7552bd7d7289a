//! Exact nearest-distance queries over a point cloud using a uniform grid.

use crate::geom::Point3;

/// Squared Euclidean distance, summed in x, y, z order.
#[inline]
pub fn dist_sq(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Below this many point pairs a linear scan beats building a grid.
const BRUTE_FORCE_PAIRS: usize = 4096;

/// Uniform grid over a fixed cloud, stored in compressed (CSR) form.
#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<Point3>,
    origin: Point3,
    cell: f64,
    dims: [i64; 3],
    cell_start: Vec<u32>,
    order: Vec<u32>,
}

impl PointGrid {
    /// Returns `None` for an empty cloud.
    pub fn new(points: &[Point3]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = (hi - lo).amax();
        let per_axis = (points.len() as f64).cbrt().max(1.0);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let dims = [0, 1, 2].map(|i| ((hi[i] - lo[i]) / cell).floor() as i64 + 1);

        let mut grid = Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            cell_start: Vec::new(),
            order: Vec::new(),
        };
        let ncells = (dims[0] * dims[1] * dims[2]) as usize;
        let ids: Vec<usize> = points
            .iter()
            .map(|p| grid.linear(grid.clamp_index(grid.cell_of(p))))
            .collect();
        let mut counts = vec![0u32; ncells + 1];
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (pi, &c) in ids.iter().enumerate() {
            order[fill[c] as usize] = pi as u32;
            fill[c] += 1;
        }
        grid.cell_start = counts;
        grid.order = order;
        Some(grid)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn cell_of(&self, p: &Point3) -> [i64; 3] {
        [0, 1, 2].map(|i| ((p[i] - self.origin[i]) / self.cell).floor() as i64)
    }

    fn clamp_index(&self, c: [i64; 3]) -> [i64; 3] {
        [0, 1, 2].map(|i| c[i].clamp(0, self.dims[i] - 1))
    }

    fn linear(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn scan_cell(&self, c: [i64; 3], q: &Point3, best: &mut f64) {
        let id = self.linear(c);
        let (s, e) = (self.cell_start[id] as usize, self.cell_start[id + 1] as usize);
        for &pi in &self.order[s..e] {
            let d = dist_sq(&self.points[pi as usize], q);
            if d < *best {
                *best = d;
            }
        }
    }

    /// Exact minimum squared distance from `q` to the cloud.
    pub fn nearest_dist_sq(&self, q: &Point3) -> f64 {
        let qc = self.cell_of(q);
        let r_start = (0..3)
            .map(|i| (-qc[i]).max(qc[i] - (self.dims[i] - 1)).max(0))
            .max()
            .unwrap_or(0);
        let r_end = (0..3)
            .map(|i| qc[i].abs().max((self.dims[i] - 1 - qc[i]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in r_start..=r_end {
            self.scan_ring(qc, r, q, &mut best);
            // Unvisited cells are at least r cells away, i.e. >= r * cell.
            let bound = r as f64 * self.cell;
            if best < bound * bound * (1.0 - 1e-12) {
                break;
            }
        }
        best
    }

    fn scan_ring(&self, qc: [i64; 3], r: i64, q: &Point3, best: &mut f64) {
        let range = |i: usize| ((qc[i] - r).max(0), (qc[i] + r).min(self.dims[i] - 1));
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        for x in x0..=x1 {
            for y in y0..=y1 {
                let on_shell = (x - qc[0]).abs() == r || (y - qc[1]).abs() == r;
                if on_shell {
                    for z in z0..=z1 {
                        self.scan_cell([x, y, z], q, best);
                    }
                } else {
                    // r > 0 here, so the two faces are distinct
                    for z in [qc[2] - r, qc[2] + r] {
                        if z >= z0 && z <= z1 {
                            self.scan_cell([x, y, z], q, best);
                        }
                    }
                }
            }
        }
    }
}

/// Smallest squared distance between any point of `a` and any point of `b`.
/// `None` if either cloud is empty.
pub fn min_dist_sq(a: &[Point3], b: &[Point3]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    if a.len() * b.len() <= BRUTE_FORCE_PAIRS {
        let mut best = f64::INFINITY;
        for p in a {
            for q in b {
                let d = dist_sq(p, q);
                if d < best {
                    best = d;
                }
            }
        }
        return Some(best);
    }
    let (indexed, queries) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let grid = PointGrid::new(indexed)?;
    Some(
        queries
            .iter()
            .map(|q| grid.nearest_dist_sq(q))
            .fold(f64::INFINITY, f64::min),
    )
}
