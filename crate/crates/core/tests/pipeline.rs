use std::path::Path;

use poleloc::classing::{kmeans_fit, KMeansModel, KMeansParams};
use poleloc::cloud_io::{cloud_to_csv, parse_csv_cloud};
use poleloc::config::Config;
use poleloc::eval::{records_from_csv, records_to_csv, run_experiment, AccuracyReport, ExperimentConfig};
use poleloc::extraction::{extract_poles, ExtractionParams};
use poleloc::geometry::Pose2;
use poleloc::matcher::{ransac_localize, RansacParams, ScoringMode};
use poleloc::polemap::{DistanceTable, Frame, Pole, PoleMap, TableParams};
use poleloc::synth::{
    generate_column_cloud, generate_world, observe, random_queries, ColumnWorldSpec, ObservationSpec, WorldSpec,
};
use poleloc::PoleError;

fn here() -> &'static Path {
    Path::new("test.csv")
}

#[test]
fn cloud_to_classed_map_to_self_localization() {
    let spec = ColumnWorldSpec { column_count: 15, seed: 3, ..ColumnWorldSpec::default() };
    let (cloud, truths) = generate_column_cloud(&spec).unwrap();
    let text = cloud_to_csv(&cloud);
    let reread = parse_csv_cloud(&text, here()).unwrap();
    assert_eq!(reread.len(), cloud.len());

    let dets = extract_poles(&reread, &ExtractionParams::default()).unwrap();
    assert_eq!(dets.len(), truths.len());

    let poles: Vec<Pole> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| Pole {
            id: i as u64,
            center: d.center,
            width: d.width,
            class_id: None,
            descriptor: d.descriptor.clone(),
        })
        .collect();
    let mut map = PoleMap::new(Frame::Global, poles).unwrap();
    let descriptors: Vec<Vec<f64>> = map.poles.iter().map(|p| p.descriptor.clone()).collect();
    let fit = kmeans_fit(&descriptors, &KMeansParams { k: 3, seed: 1, ..KMeansParams::default() }).unwrap();
    for (p, &l) in map.poles.iter_mut().zip(&fit.assignment.labels) {
        p.class_id = Some(l);
    }

    let map = PoleMap::from_csv(&map.to_csv(), Frame::Global, here()).unwrap();
    let model = KMeansModel::from_csv(&fit.model.to_csv(), here()).unwrap();
    assert_eq!(model, fit.model);

    let table = DistanceTable::build(&map, TableParams::default()).unwrap();
    let mut local = map.clone();
    local.frame = Frame::Local;
    let result = ransac_localize(&local, &map, &table, &RansacParams::default()).unwrap();
    assert!(result.best.pose.translation().norm() < 1e-9);
    assert!(result.best.pose.theta.abs() < 1e-9);
    assert_eq!(result.best.score as usize, 2 * map.len());
}

#[test]
fn disjoint_maps_fail_without_hypothesis() {
    let mk = |frame, xs: &[(f64, f64)]| {
        let poles =
            xs.iter().enumerate().map(|(i, &(x, y))| Pole::new(i as u64, poleloc::Point2::new(x, y), 0.3)).collect();
        PoleMap::new(frame, poles).unwrap()
    };
    let global = mk(Frame::Global, &[(0.0, 0.0), (10.0, 0.0)]);
    let local = mk(Frame::Local, &[(0.0, 0.0), (3.0, 0.0)]);
    let table = DistanceTable::build(&global, TableParams::default()).unwrap();
    let params = RansacParams { mode: ScoringMode::Baseline, ..RansacParams::default() };
    assert!(matches!(ransac_localize(&local, &global, &table, &params), Err(PoleError::NoHypothesis(_))));
}

#[test]
fn world_from_config_and_trajectory_round_trip() {
    let cfg = Config::parse(
        "world.extent_x = 120\nworld.extent_y = 120\nworld.pole_count = 120\nobs.sensor_range = 30\nobs.position_noise = 0.1\n",
        here(),
    )
    .unwrap();
    let spec = WorldSpec::from_config(&cfg, 5).unwrap();
    let mut world = generate_world(&spec).unwrap();
    let descriptors: Vec<Vec<f64>> = world.map.poles.iter().map(|p| p.descriptor.clone()).collect();
    let fit = kmeans_fit(&descriptors, &KMeansParams { k: 4, seed: 6, ..KMeansParams::default() }).unwrap();
    for (p, &l) in world.map.poles.iter_mut().zip(&fit.assignment.labels) {
        p.class_id = Some(l);
    }
    let obs = ObservationSpec::from_config(&cfg).unwrap();
    let queries = random_queries(spec.extent, &obs, 20, 9);
    let exp = run_experiment(&world.map, Some(&fit.model), &queries, &ExperimentConfig::default()).unwrap();
    assert_eq!(exp.records.len(), 40);
    assert!(exp.report.is_threshold_monotone());

    let back = records_from_csv(&records_to_csv(&exp.records), here()).unwrap();
    assert_eq!(back.len(), exp.records.len());
    for (a, b) in back.iter().zip(&exp.records) {
        assert_eq!(a.mode, b.mode);
        assert_eq!(a.error.to_bits(), b.error.to_bits());
    }
    let rebuilt = AccuracyReport::from_records("synthetic", &back, &[5.0, 1.0]).unwrap();
    assert_eq!(rebuilt, exp.report);
}

#[test]
fn missing_config_key_is_named() {
    let cfg = Config::parse("world.extent_x = 10\n", here()).unwrap();
    let err = WorldSpec::from_config(&cfg, 0).unwrap_err();
    assert!(err.to_string().contains("world.extent_y"), "{err}");
}

#[test]
fn observation_keeps_ids_of_seen_poles() {
    let world =
        generate_world(&WorldSpec { extent: (80.0, 80.0), pole_count: 60, seed: 2, ..WorldSpec::default() }).unwrap();
    let spec = ObservationSpec {
        sensor_range: 30.0,
        distractor_count: 3,
        true_pose: Pose2::new(40.0, 40.0, 0.7),
        seed: 4,
        ..ObservationSpec::default()
    };
    let local = observe(&world.map, &spec).unwrap();
    let max_id = world.map.poles.iter().map(|p| p.id).max().unwrap();
    let distractors = local.poles.iter().filter(|p| p.id > max_id).count();
    assert_eq!(distractors, 3);
    for p in local.poles.iter().filter(|p| p.id <= max_id) {
        let g = world.map.poles.iter().find(|g| g.id == p.id).unwrap();
        assert!((spec.true_pose.apply(p.center) - g.center).norm() < 1e-9);
    }
}
