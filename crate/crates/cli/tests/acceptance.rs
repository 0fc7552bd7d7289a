//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use ditto_core::correspond::{CorrespondenceSet, Mask, Match, SyntheticNoiseParams};
use ditto_core::demo::{extract_trajectory, select_secondary_mask, FileSource};
use ditto_core::eval::{
    generate_synthetic_episode, round9, run_offline_eval, tracking_metrics, trajectory_errors, CompositeSource,
    EvalOptions, GroundTruth, Protocol, Report, SyntheticEpisodeConfig, SyntheticSource, TrackingRow, TrajectoryRow,
};
use ditto_core::geom::{compose, pose_error, Point3, Pose};
use ditto_core::registration::{fit_rigid_ransac, fit_rigid_svd, PointPairSet, RansacParams};
use ditto_core::warp::{mixing_weight, warp_trajectory, WarpConfig};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;

const ORACLE_INSTANCES: u64 = 200;
const ORACLE_TOL: f64 = 1e-4;
const ORACLE_BUDGET_S: f64 = 10.0;

const EXACT_INSTANCES: u64 = 1000;
const EXACT_PLANAR: u64 = 100;
const EXACT_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-9;

const RANSAC_FRACTIONS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
const RANSAC_PAIRS: usize = 100;
const RANSAC_SEEDS: u64 = 100;
const RANSAC_TOL: f64 = 1e-3;
const RANSAC_MIN_SUCCESS: f64 = 0.99;

const CLOSURE_BUNDLES: u64 = 5;
const CLOSURE_ROT_TOL: f64 = 0.02;
const CLOSURE_TRANS_TOL: f64 = 0.005;
const CLOSURE_BUDGET_S: f64 = 60.0;

const MIXING_TOL: f64 = 1e-12;
const EXAMPLE_TOL: f64 = 1e-9;

const METRIC_CASES: u64 = 50;
/// Float agreement accepted as exact between the library and the oracles,
/// which evaluate the same quantities through different formulas.
const METRIC_TOL: f64 = 1e-12;

const SECONDARY_SETS: u64 = 100;
const SECONDARY_MAX_POINTS: usize = 1000;

const SANITY_FRAMES: usize = 11;
const SANITY_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn registration_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut above_optimum = 0;
    for seed in 0..ORACLE_INSTANCES {
        let mut r = rng(seed);
        let n = r.random_range(4..=6);
        let gt = random_pose(&mut r, 1.0);
        let src = random_points(&mut r, n);
        let dst: Vec<Point3> = src
            .iter()
            .map(|p| gt.apply(p) + Vector3::from_fn(|_, _| r.random_range(-0.05..0.05)))
            .collect();
        let w: Vec<f64> = if seed % 2 == 0 {
            vec![1.0; n]
        } else {
            (0..n).map(|_| r.random_range(0.5..2.0)).collect()
        };
        let fit = fit_rigid_svd(&PointPairSet::with_weights(src.clone(), dst.clone(), w.clone()).unwrap())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let (rb, tb) = brute_force_fit(&src, &dst, &w);
        let (er, et) = pose_error(&fit, &Pose::from_rotation_matrix(&rb, tb));
        worst = (worst.0.max(er), worst.1.max(et));
        let f_svd = weighted_objective(&src, &dst, &w, &fit.rotation_matrix(), &fit.translation());
        above_optimum += (f_svd > weighted_objective(&src, &dst, &w, &rb, &tb) + 1e-12) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst.0 < ORACLE_TOL && worst.1 < ORACLE_TOL && above_optimum == 0 && secs < ORACLE_BUDGET_S,
        format!(
            "{ORACLE_INSTANCES} instances, worst {:.2e} rad / {:.2e} m, {above_optimum} above brute-force optimum, {secs:.2} s",
            worst.0, worst.1
        ),
    )
}

/// Kabsch without the determinant correction, for counting the instances
/// where the correction is needed.
fn naive_kabsch_det(src: &[Point3], dst: &[Point3]) -> f64 {
    let n = src.len() as f64;
    let cs = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cd = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    (svd.v_t.unwrap().transpose() * svd.u.unwrap().transpose()).determinant()
}

fn exact_recovery() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut det_err = 0.0f64;
    let mut naive_reflections = 0;
    let mut mirrored_bad_det = 0;
    for seed in 0..EXACT_INSTANCES {
        let mut r = rng(10_000 + seed);
        let n = r.random_range(10..60);
        let gt = random_pose(&mut r, 2.0);
        let planar = seed < EXACT_PLANAR;
        let src: Vec<Point3> = if planar {
            let frame = random_pose(&mut r, 1.0);
            (0..n)
                .map(|_| frame.apply(&Point3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), 0.0)))
                .collect()
        } else {
            random_points(&mut r, n)
        };
        let dst: Vec<Point3> = src.iter().map(|p| gt.apply(p)).collect();
        let fit = fit_rigid_svd(&PointPairSet::new(src.clone(), dst.clone()).unwrap())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let (er, et) = pose_error(&fit, &gt);
        worst = (worst.0.max(er), worst.1.max(et));
        det_err = det_err.max((fit.rotation_matrix().determinant() - 1.0).abs());
        if planar {
            naive_reflections += (naive_kabsch_det(&src, &dst) < 0.0) as usize;
            // a mirror image has no proper fit; the result must still be a rotation
            let mirrored: Vec<Point3> = dst.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
            let m = fit_rigid_svd(&PointPairSet::new(random_points(&mut r, n), mirrored).unwrap())
                .map_err(|e| format!("mirror seed {seed}: {e}"))?;
            mirrored_bad_det += ((m.rotation_matrix().determinant() - 1.0).abs() > DET_TOL) as usize;
        }
    }
    check(
        worst.0 < EXACT_TOL && worst.1 < EXACT_TOL && det_err < DET_TOL && mirrored_bad_det == 0,
        format!(
            "{EXACT_INSTANCES} instances ({EXACT_PLANAR} planar, {naive_reflections} of them reflected without the sign fix), \
             worst {:.2e} rad / {:.2e} m, max |det-1| {det_err:.1e}, {mirrored_bad_det} improper fits on mirrored data",
            worst.0, worst.1
        ),
    )
}

fn ransac_instance(fraction: f64, seed: u64) -> (PointPairSet, Pose) {
    let mut r = rng(20_000 + seed + (fraction * 1000.0) as u64 * 1000);
    let gt = random_pose(&mut r, 1.0);
    let outliers = (fraction * RANSAC_PAIRS as f64).round() as usize;
    let src = random_points(&mut r, RANSAC_PAIRS);
    let dst = src
        .iter()
        .enumerate()
        .map(|(i, p)| if i < outliers { random_point(&mut r, -1.0, 2.0) } else { gt.apply(p) })
        .collect();
    (PointPairSet::new(src, dst).unwrap(), gt)
}

fn ransac_robustness() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for f in RANSAC_FRACTIONS {
        let mut good = 0;
        let mut nondeterministic = 0;
        for seed in 0..RANSAC_SEEDS {
            let (pairs, gt) = ransac_instance(f, seed);
            let params = RansacParams {
                max_iterations: 1000,
                inlier_threshold: 0.01,
                ..RansacParams::default()
            }
            .with_seed(seed);
            let a = fit_rigid_ransac(&pairs, &params);
            let b = fit_rigid_ransac(&pairs, &params);
            nondeterministic += (a != b) as usize;
            if let Ok(a) = a {
                let (er, et) = pose_error(&a.pose, &gt);
                good += (er < RANSAC_TOL && et < RANSAC_TOL) as usize;
            }
        }
        let rate = good as f64 / RANSAC_SEEDS as f64;
        ok &= rate >= RANSAC_MIN_SUCCESS && nondeterministic == 0;
        parts.push(format!("{f}: {good}/{RANSAC_SEEDS}"));
    }
    check(ok, format!("recovered per outlier fraction {}, reruns identical", parts.join(", ")))
}

fn closure_bundles(dir: &Path) -> Vec<ditto_core::bundle::EpisodeBundle> {
    (0..CLOSURE_BUNDLES)
        .map(|s| {
            generate_synthetic_episode(&SyntheticEpisodeConfig::default(), s, &dir.join(format!("episode_{s:02}")))
                .expect("synthetic bundle")
        })
        .collect()
}

fn warp_closure(report_out: &mut Option<Report>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let bundles = closure_bundles(dir.path());
    let noise = SyntheticEpisodeConfig::default().noise;
    let synth = SyntheticSource::new(0);
    let source = CompositeSource::new(&FileSource, &synth);
    let opts = EvalOptions {
        measure_runtime: false,
        ..EvalOptions::default()
    };
    let report = run_offline_eval(&bundles, Protocol::Trajectory, &source, &opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let Report::Trajectory(rows) = &report else {
        return Err("trajectory report expected".into());
    };
    let mean = rows.last().unwrap().clone();
    *report_out = Some(report.clone());
    let (rot, trans) = (mean.rot_err_rad.unwrap_or(f64::NAN), mean.trans_err_m.unwrap_or(f64::NAN));
    check(
        rows.len() == 21 && mean.failures == 0 && rot < CLOSURE_ROT_TOL && trans < CLOSURE_TRANS_TOL && secs < CLOSURE_BUDGET_S,
        format!(
            "{} pairs, {} failures, mean {rot:.4} rad / {trans:.4} m at pixel_sigma {} outlier_fraction {}, {secs:.1} s",
            mean.n, mean.failures, noise.pixel_sigma, noise.outlier_fraction
        ),
    )
}

fn mixing() -> Outcome {
    let w5 = mixing_weight(5, 11, 0.5);
    let weights: Vec<f64> = (0..11).map(|t| mixing_weight(t, 11, 0.5)).collect();
    let decreasing = weights.windows(2).all(|w| w[1] < w[0]) && weights[0] == 1.0;

    let mut r = rng(30_000);
    let mut step0_exact = true;
    for _ in 0..100 {
        let n = r.random_range(1..12);
        let steps: Vec<Pose> = (0..n).map(|_| random_pose(&mut r, 0.1)).collect();
        let (obj, goal) = (random_pose(&mut r, 0.3), random_pose(&mut r, 0.3));
        let cfg = WarpConfig {
            sigma: r.random_range(0.05..2.0),
            use_secondary: true,
            ..WarpConfig::default()
        };
        let out = warp_trajectory(&steps, &obj, Some(&goal), &cfg).map_err(|e| e.to_string())?;
        step0_exact &= out[0] == compose(&steps[0], &obj);
    }

    let cfg = WarpConfig {
        use_secondary: true,
        ..WarpConfig::default()
    };
    let goal = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
    let out = warp_trajectory(&[Pose::identity(); 3], &Pose::identity(), Some(&goal), &cfg).map_err(|e| e.to_string())?;
    let expected = [0.0, 1.0 - (-0.5f64).exp(), 1.0 - (-2.0f64).exp()];
    let example_err = out
        .iter()
        .zip(expected)
        .map(|(p, x)| (p.translation() - Vector3::new(x, 0.0, 0.0)).norm().max(p.angle()))
        .fold(0.0, f64::max);
    check(
        (w5 - (-0.5f64).exp()).abs() < MIXING_TOL && decreasing && step0_exact && example_err < EXAMPLE_TOL,
        format!(
            "weight(5,11,0.5) off by {:.1e}, decreasing {decreasing}, step 0 bit-exact {step0_exact}, three-step example off by {example_err:.1e}",
            (w5 - (-0.5f64).exp()).abs()
        ),
    )
}

fn metric_fidelity(eval_report: Option<&Report>) -> Outcome {
    let mut mismatches = 0;
    for seed in 0..METRIC_CASES {
        let mut r = rng(40_000 + seed);
        let (w, h) = (r.random_range(4..64u32), r.random_range(4..64u32));
        let density = r.random_range(0.0..1.0);
        let bits: Vec<bool> = (0..w * h).map(|_| r.random_bool(density)).collect();
        let mask = Mask::from_fn(w, h, |x, y| bits[(y * w + x) as usize]);
        let matches = (0..r.random_range(0..200))
            .map(|_| {
                let u2 = if r.random_bool(0.3) {
                    r.random_range(0..w - 1) as f64 + 0.5
                } else {
                    r.random_range(-0.5..w as f64 - 0.5)
                };
                Match::exact(0.0, 0.0, u2, r.random_range(-0.5..h as f64 - 0.5))
            })
            .collect();
        let c = CorrespondenceSet::new("a", "b").with_matches(matches);
        let m = tracking_metrics(&c, &mask, 0.0).map_err(|e| e.to_string())?;
        let inside = count_in_mask(&c, &mask);
        let rate = if c.is_empty() { 0.0 } else { 100.0 * inside as f64 / c.len() as f64 };
        mismatches += (m.inlier_count != inside || m.total != c.len() || m.inlier_rate != rate) as usize;

        let n = r.random_range(1..15);
        let gt: Vec<Pose> = (0..n).map(|_| random_pose(&mut r, 0.2)).collect();
        let pred: Vec<Pose> = (0..n).map(|_| random_pose(&mut r, 0.2)).collect();
        let e = trajectory_errors(&pred, &gt).map_err(|e| e.to_string())?;
        let (rot, trans, per) = trajectory_error_oracle(&pred, &gt);
        let per_ok = e
            .per_step
            .iter()
            .zip(&per)
            .all(|(a, b)| (a.0 - b.0).abs() < METRIC_TOL && (a.1 - b.1).abs() < METRIC_TOL);
        mismatches += !((e.mean_rot_err - rot).abs() < METRIC_TOL && (e.mean_trans_err - trans).abs() < METRIC_TOL && per_ok)
            as usize;
    }

    let mut r = rng(41_000);
    let mut reports: Vec<Report> = eval_report.cloned().into_iter().collect();
    let mut tracking: Vec<TrackingRow> = (0..8)
        .map(|i| TrackingRow {
            protocol: "inter".into(),
            method: "synthetic".into(),
            detection: "gt_mask".into(),
            pair: format!("episode_{i:02}->episode_{:02}", i + 1),
            n: 1,
            total: r.random_range(0..2000) as f64,
            inlier_rate_pct: round9(r.random_range(0.0..100.0)),
            inlier_count: r.random_range(0..2000) as f64,
            runtime_s: (i % 3 != 0).then(|| round9(r.random_range(0.0..2.0))),
            degenerate: (i == 5) as usize,
        })
        .collect();
    tracking.push(TrackingRow::mean_of(&tracking).unwrap());
    reports.push(Report::Tracking(tracking));
    let mut trajectory: Vec<TrajectoryRow> = (0..6)
        .map(|i| TrajectoryRow {
            protocol: "trajectory".into(),
            method: "files+synthetic".into(),
            detection: "gt_mask".into(),
            pair: format!("a,{i}->\"b\""),
            n: (i != 2) as usize,
            failures: (i == 2) as usize,
            rot_err_rad: (i != 2).then(|| round9(r.random_range(0.0..3.1))),
            trans_err_m: (i != 2).then(|| round9(r.random_range(0.0..0.5))),
        })
        .collect();
    trajectory.push(TrajectoryRow::mean_of(&trajectory).unwrap());
    reports.push(Report::Trajectory(trajectory));
    let mut round_trips = 0;
    for rep in &reports {
        let via_csv = Report::from_csv(&rep.to_csv()).map_err(|e| e.to_string())?;
        let via_json = Report::from_json(&via_csv.to_json()).map_err(|e| e.to_string())?;
        round_trips += (via_csv == *rep && via_json == *rep && via_json.to_csv() == rep.to_csv()) as usize;
    }
    check(
        mismatches == 0 && round_trips == reports.len(),
        format!(
            "{METRIC_CASES} tracking and {METRIC_CASES} trajectory cases, {mismatches} mismatches; {round_trips}/{} reports round-trip CSV<->JSON",
            reports.len()
        ),
    )
}

fn secondary_heuristic() -> Outcome {
    let mut mismatches = 0;
    let (mut contacts, mut ties) = (0, 0);
    for seed in 0..SECONDARY_SETS {
        let mut r = rng(50_000 + seed);
        let object: Vec<Point3> = (0..r.random_range(1..=SECONDARY_MAX_POINTS))
            .map(|_| random_point(&mut r, 0.0, 1.0))
            .collect();
        let mut candidates: Vec<Vec<Point3>> = (0..r.random_range(1..=5))
            .map(|_| {
                let shift = Vector3::from_fn(|_, _| r.random_range(-2.0..2.0));
                (0..r.random_range(1..=SECONDARY_MAX_POINTS))
                    .map(|_| random_point(&mut r, 0.0, 1.0) + shift)
                    .collect()
            })
            .collect();
        match seed % 4 {
            1 => {
                let i = r.random_range(0..candidates.len());
                let p = object[r.random_range(0..object.len())];
                let c = &mut candidates[i];
                let at = r.random_range(0..c.len());
                c[at] = p;
                contacts += 1;
            }
            2 => {
                let i = r.random_range(0..candidates.len());
                let copy = candidates[i].clone();
                candidates.insert(r.random_range(0..=candidates.len()), copy);
                ties += 1;
            }
            3 => {
                // two candidates both touching the object
                let p = object[0];
                candidates[0][0] = p;
                let mut extra = candidates[0].clone();
                extra.reverse();
                candidates.push(extra);
                contacts += 1;
                ties += 1;
            }
            _ => {}
        }
        let got = select_secondary_mask(&object, &candidates).map_err(|e| e.to_string())?;
        mismatches += (got != nearest_candidate(&object, &candidates)) as usize;
    }
    check(
        mismatches == 0,
        format!("{SECONDARY_SETS} cloud sets ({contacts} with contact, {ties} with ties), {mismatches} mismatches"),
    )
}

fn run(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ditto"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("ditto {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    run(dir, &["synth", "--out", "demo", "--seed", "1"])?;
    run(dir, &["synth", "--out", "live", "--seed", "2"])?;
    run(dir, &["extract", "demo", "--out", "traj.json", "--seed", "3"])?;
    run(dir, &["generate", "traj.json", "live", "--out", "warped.json", "--seed", "3"])?;
    run(dir, &["generate", "traj.json", "live", "--out", "warped_secondary.json", "--use-secondary", "--seed", "3"])?;
    run(dir, &["eval", "demo", "live", "--protocol", "trajectory", "--out", "trajectory", "--omit-runtime"])?;
    run(dir, &["eval", "demo", "live", "--protocol", "inter", "--out", "inter", "--omit-runtime"])?;
    Ok(snapshot(dir))
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let differing: Vec<&String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k)
        .chain(second.keys().filter(|k| !first.contains_key(*k)))
        .collect();
    check(
        differing.is_empty(),
        format!("synth, extract, generate and eval twice: {} files, differing {differing:?}", first.len()),
    )
}

fn full_length_sanity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticEpisodeConfig {
        frames: SANITY_FRAMES,
        noise: SyntheticNoiseParams::noiseless(0),
        ..SyntheticEpisodeConfig::default()
    };
    let bundle = generate_synthetic_episode(&cfg, 11, dir.path()).map_err(|e| e.to_string())?;
    let gt: GroundTruth = bundle.read_sidecar().map_err(|e| e.to_string())?.ok_or("no sidecar")?;
    let traj = extract_trajectory(&bundle, &FileSource, &RansacParams::default()).map_err(|e| e.to_string())?;
    let total = traj.relative_poses.iter().fold(Pose::identity(), |acc, s| compose(s, &acc));
    let (er, et) = pose_error(&total, &gt.total_motion);
    let opts = EvalOptions {
        measure_runtime: false,
        ..EvalOptions::default()
    };
    let Report::Tracking(rows) = run_offline_eval(&[bundle], Protocol::Intra, &FileSource, &opts).map_err(|e| e.to_string())?
    else {
        return Err("tracking report expected".into());
    };
    let mean = rows.last().unwrap();
    let all_full = rows.iter().all(|r| r.inlier_rate_pct == 100.0);
    check(
        traj.frames.len() == SANITY_FRAMES && er < SANITY_TOL && et < SANITY_TOL && all_full,
        format!(
            "T={}, composed motion off by {er:.1e} rad / {et:.1e} m, intra inlier rate {}% over {} pairs",
            traj.frames.len(),
            mean.inlier_rate_pct,
            mean.n
        ),
    )
}

/// A panic inside a check counts as its failure instead of ending the run.
fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let mut closure_report = None;
    let results: Vec<(&str, Outcome)> = vec![
        ("registration oracle equivalence", guarded(registration_oracle)),
        ("exact recovery", guarded(exact_recovery)),
        ("RANSAC robustness", guarded(ransac_robustness)),
        ("warp closure", guarded(|| warp_closure(&mut closure_report))),
        ("mixing correctness", guarded(mixing)),
        ("metric fidelity", guarded(|| metric_fidelity(closure_report.as_ref()))),
        ("secondary-object heuristic", guarded(secondary_heuristic)),
        ("end-to-end determinism", guarded(end_to_end_determinism)),
        ("full-length sanity", guarded(full_length_sanity)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(d) => println!("PASS {}. {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {}. {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
