//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poleloc::classing::{kmeans_fit, KMeansFit, KMeansParams};
use poleloc::eval::{run_experiment, AccuracyReport, ExperimentConfig};
use poleloc::extraction::{build_grid, detect_poles, Bounds, ExtractionParams, PointCloud};
use poleloc::geometry::{angle_diff, Point2, Pose2};
use poleloc::matcher::{estimate_transform, ransac_localize, RansacParams, ScoringMode};
use poleloc::polemap::{DistanceTable, Frame, Pole, PoleMap, TableParams};
use poleloc::synth::{
    generate_column_cloud, generate_world, observe, oracle_localize, random_queries, wall_cloud, ColumnWorldSpec,
    ObservationSpec, WorldSpec,
};
use poleloc::PoleError;

const DIRECTIONAL_SEEDS: u64 = 20;
const QUERIES: usize = 200;
// Local maps then hold about 15 poles before dropout.
const SENSOR_RANGE: f64 = 25.0;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

/// Global map with classes from a k-means fit with one cluster per pole type.
fn classed_world(seed: u64) -> (PoleMap, KMeansFit) {
    let spec = WorldSpec { seed: seed + 1, ..WorldSpec::default() };
    let mut world = generate_world(&spec).expect("world");
    let descriptors: Vec<Vec<f64>> = world.map.poles.iter().map(|p| p.descriptor.clone()).collect();
    let params = KMeansParams { k: spec.types.len(), seed: seed + 2, ..KMeansParams::default() };
    let fit = kmeans_fit(&descriptors, &params).expect("kmeans");
    for (p, &l) in world.map.poles.iter_mut().zip(&fit.assignment.labels) {
        p.class_id = Some(l);
    }
    (world.map, fit)
}

fn directional(reports: &mut Vec<AccuracyReport>) -> (bool, String) {
    let extent = WorldSpec::default().extent;
    let obs = ObservationSpec {
        sensor_range: SENSOR_RANGE,
        position_noise: 0.3,
        dropout: 0.3,
        distractor_count: 5,
        ..ObservationSpec::default()
    };
    let config = ExperimentConfig::default();
    let (mut g5, mut b5, mut g1, mut b1) = (0.0, 0.0, 0.0, 0.0);
    let mut strict = 0;
    for seed in 0..DIRECTIONAL_SEEDS {
        let (global, fit) = classed_world(seed);
        let queries = random_queries(extent, &obs, QUERIES, seed + 1000);
        let exp = run_experiment(&global, Some(&fit.model), &queries, &config).expect("experiment");
        let r = &exp.report;
        let get = |m, t| r.percent(m, t).expect("report cell");
        let (a, b, c, d) = (
            get(ScoringMode::ClassGated, 5.0),
            get(ScoringMode::Baseline, 5.0),
            get(ScoringMode::ClassGated, 1.0),
            get(ScoringMode::Baseline, 1.0),
        );
        g5 += a;
        b5 += b;
        g1 += c;
        b1 += d;
        if c > d {
            strict += 1;
        }
        reports.push(exp.report);
    }
    let n = DIRECTIONAL_SEEDS as f64;
    let (g5, b5, g1, b1) = (g5 / n, b5 / n, g1 / n, b1 / n);
    let pass = g5 >= b5 && g1 >= b1 && strict >= 15;
    let detail = format!(
        "mean@5m gated {g5:.2}% vs baseline {b5:.2}%, mean@1m gated {g1:.2}% vs baseline {b1:.2}%, strictly better @1m in {strict}/{DIRECTIONAL_SEEDS} seeds"
    );
    (pass, detail)
}

fn exact_recovery(reports: &mut Vec<AccuracyReport>) -> (bool, String) {
    let (global, fit) = classed_world(77);
    let obs = ObservationSpec { sensor_range: SENSOR_RANGE, ..ObservationSpec::default() };
    let queries = random_queries(WorldSpec::default().extent, &obs, 100, 4242);
    // class_literal is left out: its score saturates for unrelated poses.
    let config = ExperimentConfig::default();
    let exp = run_experiment(&global, Some(&fit.model), &queries, &config).expect("experiment");
    let worst = exp.records.iter().map(|r| r.error).fold(0.0, f64::max);
    let worst_heading = exp.records.iter().map(|r| r.heading_error).fold(0.0, f64::max);
    let all_at_1m = config.modes.iter().all(|&m| exp.report.percent(m, 1.0) == Some(100.0));
    reports.push(exp.report);
    (
        all_at_1m && worst < 1e-6,
        format!("100% at 1 m in class_gated and baseline: {all_at_1m}, worst position error {worst:.2e} m, worst heading error {worst_heading:.2e} rad"),
    )
}

fn random_map(rng: &mut ChaCha8Rng, n: usize, extent: f64, frame: Frame, classes: usize) -> PoleMap {
    let poles = (0..n)
        .map(|i| Pole {
            id: i as u64 + 1,
            center: Point2::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)),
            width: 0.3,
            class_id: Some(rng.random_range(0..classes)),
            descriptor: Vec::new(),
        })
        .collect();
    PoleMap::new(frame, poles).expect("map")
}

fn oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let table_params = TableParams::default();
    let mut mismatches = 0;
    let mut both_failed = 0;
    for instance in 0..200 {
        let n_global = rng.random_range(2..=30);
        let mut global = random_map(&mut rng, n_global, 30.0, Frame::Global, 3);
        for p in &mut global.poles {
            p.class_id = Some(rng.random_range(0..3));
        }
        let spec = ObservationSpec {
            sensor_range: rng.random_range(8.0..20.0),
            position_noise: rng.random_range(0.0..0.3),
            dropout: rng.random_range(0.0..0.4),
            distractor_count: rng.random_range(0..4),
            true_pose: Pose2::new(
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..30.0),
                rng.random_range(-3.1..3.1),
            ),
            seed: instance,
            ..ObservationSpec::default()
        };
        let mut local = observe(&global, &spec).expect("observe");
        local.poles.truncate(10);
        for p in &mut local.poles {
            // Distractors and re-observed poles get noisy classes.
            let keep = rng.random::<f64>() < 0.8;
            p.class_id = Some(match (keep, global.poles.iter().find(|g| g.id == p.id)) {
                (true, Some(g)) => g.class_id.unwrap(),
                _ => rng.random_range(0..3),
            });
        }
        let table = DistanceTable::build(&global, table_params).expect("table");
        let mode = ScoringMode::ALL[instance as usize % 3];
        let params = RansacParams { mode, max_hypotheses: usize::MAX, ..RansacParams::default() };
        let fast = ransac_localize(&local, &global, &table, &params);
        let slow = oracle_localize(&local, &global, &params, &table_params);
        match (fast, slow) {
            (Ok(a), Ok(b)) if a.best.score == b.best.score => {}
            (Err(PoleError::NoHypothesis(_)), Err(PoleError::NoHypothesis(_))) => both_failed += 1,
            _ => mismatches += 1,
        }
    }
    (
        mismatches == 0,
        format!("{mismatches} best-score mismatches over 200 instances ({both_failed} had no hypothesis in either)"),
    )
}

fn blobs(rng: &mut ChaCha8Rng, centers: usize, per: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for c in 0..centers {
        let base: Vec<f64> = (0..d).map(|j| (c * 10 + j) as f64 * if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for _ in 0..per {
            out.push(base.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect());
        }
    }
    out
}

fn kmeans_suite() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sse_violations = 0;
    let mut unconverged = 0;
    let mut nondeterministic = 0;
    for run in 0..50u64 {
        let k_request = [1usize, 2, 5, 200][run as usize % 4];
        let data = blobs(&mut rng, 5, 8 + (run as usize % 7), 22);
        let k = k_request.min(data.len());
        let params = KMeansParams { k, seed: run, standardize: run % 5 == 0, ..KMeansParams::default() };
        let fit = kmeans_fit(&data, &params).expect("kmeans");
        if fit.sse_history.windows(2).any(|w| w[1] > w[0]) {
            sse_violations += 1;
        }
        if !fit.converged {
            unconverged += 1;
        }
        let again = kmeans_fit(&data, &params).expect("kmeans");
        let bits = |f: &KMeansFit| -> Vec<u64> { f.model.centroids.iter().flatten().map(|v| v.to_bits()).collect() };
        if bits(&fit) != bits(&again) || fit.assignment != again.assignment || fit.sse_history != again.sse_history {
            nondeterministic += 1;
        }
    }
    (
        sse_violations + unconverged + nondeterministic == 0,
        format!(
            "50 runs: {sse_violations} SSE increases, {unconverged} unconverged, {nondeterministic} non-deterministic"
        ),
    )
}

fn monotonicity(reports: &[AccuracyReport]) -> (bool, String) {
    let bad = reports.iter().filter(|r| !r.is_threshold_monotone()).count();
    let one_le_five = reports.iter().all(|r| {
        r.modes.iter().all(|m| {
            let p = |t| r.percent(m.mode, t);
            match (p(1.0), p(5.0)) {
                (Some(a), Some(b)) => a <= b,
                _ => true,
            }
        })
    });
    (bad == 0 && one_le_five && !reports.is_empty(), format!("{} reports checked, {bad} non-monotone", reports.len()))
}

fn table_completeness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut missing = 0;
    let mut violations = 0;
    let mut pairs_checked = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..120);
        let map = random_map(&mut rng, n, 80.0, Frame::Global, 1);
        let params = TableParams {
            bin_width: rng.random_range(0.1..2.0),
            max_distance: rng.random_range(10.0..70.0),
            min_pair_separation: rng.random_range(0.0..2.0),
        };
        let table = DistanceTable::build(&map, params).expect("table");
        for (a, pa) in map.poles.iter().enumerate() {
            for (b, pb) in map.poles.iter().enumerate() {
                if a == b {
                    continue;
                }
                let d = pa.center.distance(&pb.center);
                if !(d > params.min_pair_separation && d <= params.max_distance) {
                    continue;
                }
                pairs_checked += 1;
                let hits = table.query_pairs(d, 0.0);
                if !hits.iter().any(|p| p.a == a && p.b == b) {
                    missing += 1;
                }
                if hits.iter().any(|p| p.distance != d) {
                    violations += 1;
                }
            }
        }
        for _ in 0..50 {
            let d = rng.random_range(0.0..80.0);
            let tol = rng.random_range(0.0..3.0);
            violations += table.query_pairs(d, tol).iter().filter(|p| (p.distance - d).abs() > tol).count();
        }
    }
    (
        missing + violations == 0,
        format!("{pairs_checked} in-range pairs: {missing} missing at tol 0, {violations} tolerance violations"),
    )
}

fn extraction() -> (bool, String) {
    let params = ExtractionParams::default();
    let vs = params.voxel_size;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut conservation_failures = 0;
    for _ in 0..20 {
        let n = rng.random_range(0..5000);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0), rng.random_range(-1.0..6.0)])
            .collect();
        let bounds = Bounds::new([0.0, 0.0, 0.0], [10.0, 10.0, 5.0]).unwrap();
        let built = build_grid(&PointCloud::new(pts), &params, &bounds).expect("grid");
        if built.grid.total() + built.dropped as u64 != n as u64 {
            conservation_failures += 1;
        }
    }

    let (mut found, mut total) = (0, 0);
    for seed in 0..100 {
        let spec = ColumnWorldSpec { seed, voxel_size: vs, ..ColumnWorldSpec::default() };
        let (cloud, truths) = generate_column_cloud(&spec).expect("columns");
        let top = truths.iter().map(|t| t.height).fold(0.0, f64::max) + 1.0;
        let bounds = Bounds::new([0.0, 0.0, 0.0], [spec.extent.0, spec.extent.1, top]).unwrap();
        let grid = build_grid(&cloud, &params, &bounds).expect("grid").grid;
        let dets = detect_poles(&grid, &params).expect("detect");
        total += truths.len();
        found += truths.iter().filter(|t| dets.iter().any(|d| d.center.distance(&t.center) <= vs)).count();
    }
    let rate = 100.0 * found as f64 / total as f64;

    let mut wall_detections = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Point2::new(2.0, 2.0 + rng.random_range(0.0..4.0));
        let end = Point2::new(start.x + rng.random_range(3.0..10.0), start.y + rng.random_range(-3.0..3.0));
        let cloud = wall_cloud(start, end, rng.random_range(2.0..5.0), vs, 3, seed);
        let bounds = Bounds::new([0.0, 0.0, 0.0], [20.0, 20.0, 6.0]).unwrap();
        let grid = build_grid(&cloud, &params, &bounds).expect("grid").grid;
        wall_detections += detect_poles(&grid, &params).expect("detect").len();
    }
    (
        conservation_failures == 0 && rate >= 95.0 && wall_detections == 0,
        format!(
            "{conservation_failures} conservation failures, {found}/{total} columns ({rate:.1}%) within one voxel, {wall_detections} wall detections"
        ),
    )
}

fn transform_exactness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let (mut worst_t, mut worst_a) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let pose =
            Pose2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), rng.random_range(-3.2..3.2));
        let la = Point2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        let lb = loop {
            let p = Point2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            if p.distance(&la) > 1.0 {
                break p;
            }
        };
        let est = estimate_transform(la, lb, pose.apply(la), pose.apply(lb), 1.0).expect("transform");
        worst_t = worst_t.max(est.translation().distance(&pose.translation()));
        worst_a = worst_a.max(angle_diff(est.theta, pose.theta));
    }
    (
        worst_t < 1e-9 && worst_a < 1e-9,
        format!("worst translation error {worst_t:.2e} m, worst angle error {worst_a:.2e} rad"),
    )
}

fn timed(name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, mut detail) = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    if let Some(l) = limit {
        detail.push_str(&format!(" (limit {:.0} s)", l.as_secs_f64()));
    }
    Outcome { name, pass: pass && in_time, detail, elapsed }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut reports = Vec::new();
    let outcomes = vec![
        timed("directional class_gated >= baseline", Some(secs(120)), || directional(&mut reports)),
        timed("exact recovery", Some(secs(5)), || exact_recovery(&mut reports)),
        timed("oracle equivalence", Some(secs(30)), oracle_equivalence),
        timed("k-means invariants", Some(secs(10)), kmeans_suite),
        timed("threshold monotonicity", None, || monotonicity(&reports)),
        timed("distance table completeness", Some(secs(5)), table_completeness),
        timed("extraction ground truth", None, extraction),
        timed("transform exactness", None, transform_exactness),
    ];
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {} [{:.2} s]: {}", o.name, o.elapsed.as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
