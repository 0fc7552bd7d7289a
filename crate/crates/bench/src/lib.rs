//! Fixtures shared by the benchmarks.

use std::path::Path;

use ditto_core::bundle::EpisodeBundle;
use ditto_core::eval::{generate_synthetic_episode, EvalError, SyntheticEpisodeConfig};
use ditto_core::geom::{Point3, Pose};
use ditto_core::registration::PointPairSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` pairs related by a fixed rigid motion, of which `outliers` (a
/// fraction) have their target replaced by a random point.
pub fn pair_set(n: usize, outliers: f64, seed: u64) -> PointPairSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motion = Pose::from_axis_angle([0.3, 1.0, -0.2].into(), 0.4)
        .compose(&Pose::from_translation([0.05, -0.02, 0.1].into()));
    PointPairSet::from_pairs((0..n).map(|_| {
        let s = Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.4..0.6));
        let d = if rng.random_bool(outliers) {
            Point3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.3..0.7))
        } else {
            motion.apply(&s)
        };
        (s, d)
    }))
}

/// A short synthetic episode written under `dir`.
pub fn small_bundle(dir: &Path, frames: usize, seed: u64) -> Result<EpisodeBundle, EvalError> {
    let cfg = SyntheticEpisodeConfig {
        frames,
        ..SyntheticEpisodeConfig::default()
    };
    generate_synthetic_episode(&cfg, seed, dir)
}
