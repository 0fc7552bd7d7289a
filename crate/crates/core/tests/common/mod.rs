//! Reference implementations used as oracles. Each one is written the slow,
//! obvious way and shares no code with the library beyond the `Pose` type.
#![allow(dead_code)]

use ditto_core::correspond::{CorrespondenceSet, Mask};
use ditto_core::geom::{Point3, Pose};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Point3 {
    Point3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n).map(|_| random_point(rng, 0.0, 1.0)).collect()
}

/// Uniformly random rotation (via a normalized Gaussian quaternion) and a
/// translation with components in `[-t, t]`.
pub fn random_pose(rng: &mut ChaCha8Rng, t: f64) -> Pose {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break q.map(|x| x / n);
        }
    };
    let tr = [rng.random_range(-t..=t), rng.random_range(-t..=t), rng.random_range(-t..=t)];
    Pose::new(q, tr).expect("unit quaternion")
}

pub fn matrix_of(p: &Pose) -> Matrix3<f64> {
    p.rotation_matrix()
}

/// Rotation angle of `Ra^T Rb` from its matrix entries: the skew part gives
/// the sine, the trace the cosine.
pub fn rotation_distance(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let r = ra.transpose() * rb;
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

pub fn weighted_objective(src: &[Point3], dst: &[Point3], w: &[f64], r: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    src.iter()
        .zip(dst)
        .zip(w)
        .map(|((s, d), w)| w * (r * s.coords + t - d.coords).norm_squared())
        .sum()
}

/// For a fixed rotation the optimal translation is the weighted centroid gap.
fn best_translation(src: &[Point3], dst: &[Point3], w: &[f64], r: &Matrix3<f64>) -> Vector3<f64> {
    let total: f64 = w.iter().sum();
    let mut t = Vector3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(w) {
        t += (d.coords - r * s.coords) * *w;
    }
    t / total
}

fn rot(v: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*v).into_inner()
}

/// Global minimizer of the weighted squared residual over SE(3) by search:
/// a grid over rotation vectors in the ball of radius pi, then compass
/// search from the best grid node until the step falls below `1e-13`.
pub fn brute_force_fit(src: &[Point3], dst: &[Point3], w: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let f = |v: &Vector3<f64>| {
        let r = rot(v);
        weighted_objective(src, dst, w, &r, &best_translation(src, dst, w, &r))
    };
    let n = 16;
    let mut best = (f64::INFINITY, Vector3::zeros());
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let g = |a: usize| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * a as f64 / n as f64;
                let v = Vector3::new(g(i), g(j), g(k));
                if v.norm() <= std::f64::consts::PI + 1e-9 {
                    let e = f(&v);
                    if e < best.0 {
                        best = (e, v);
                    }
                }
            }
        }
    }
    let (mut fx, mut x) = best;
    let mut step = 0.5;
    let dirs: Vec<Vector3<f64>> = (0..3)
        .flat_map(|a| {
            let mut e = Vector3::zeros();
            e[a] = 1.0;
            [e, -e]
        })
        .collect();
    while step > 1e-13 {
        let mut moved = false;
        for d in &dirs {
            let y = x + d * step;
            let fy = f(&y);
            if fy < fx {
                (fx, x) = (fy, y);
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let r = rot(&x);
    (r, best_translation(src, dst, w, &r))
}

/// Matches whose target pixel, rounded half up, is set in `mask`.
pub fn count_in_mask(c: &CorrespondenceSet, mask: &Mask) -> usize {
    c.matches
        .iter()
        .filter(|m| {
            let x = (m.u2 + 0.5).floor() as u32;
            let y = (m.v2 + 0.5).floor() as u32;
            mask.get(x, y)
        })
        .count()
}

/// Per-step (rotation, translation) error and the two means.
pub fn trajectory_error_oracle(pred: &[Pose], gt: &[Pose]) -> (f64, f64, Vec<(f64, f64)>) {
    let per: Vec<(f64, f64)> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            (
                rotation_distance(&matrix_of(p), &matrix_of(g)),
                (p.translation() - g.translation()).norm(),
            )
        })
        .collect();
    let n = per.len() as f64;
    (
        per.iter().map(|e| e.0).sum::<f64>() / n,
        per.iter().map(|e| e.1).sum::<f64>() / n,
        per,
    )
}

/// All-pairs minimum distance per candidate; the first minimum wins.
pub fn nearest_candidate(object: &[Point3], candidates: &[Vec<Point3>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in candidates.iter().enumerate() {
        let mut d = f64::INFINITY;
        for a in object {
            for b in c {
                d = d.min((a - b).norm());
            }
        }
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
