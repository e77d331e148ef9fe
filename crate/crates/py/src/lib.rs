//! Python bindings for poleloc.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use poleloc::classing::{self, KMeansParams};
use poleloc::eval::{self, EvalRecord};
use poleloc::extraction::{self, ExtractionParams, PointCloud};
use poleloc::geometry;
use poleloc::matcher::{self, RansacParams, ScoringMode};
use poleloc::polemap::{self, DistanceTable, Frame, TableParams};
use poleloc::synth::{self, ObservationSpec, WorldSpec};
use poleloc::{Point2, PoleError};

fn to_py(e: PoleError) -> PyErr {
    match e {
        PoleError::Io { .. } => PyIOError::new_err(e.to_string()),
        PoleError::NoHypothesis(_) | PoleError::Capacity(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn frame(name: &str) -> PyResult<Frame> {
    match name {
        "global" => Ok(Frame::Global),
        "local" => Ok(Frame::Local),
        other => Err(PyValueError::new_err(format!("frame must be `global` or `local`, got `{other}`"))),
    }
}

#[pyclass(name = "Pose2", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyPose2(geometry::Pose2);

#[pymethods]
impl PyPose2 {
    #[new]
    #[pyo3(signature = (tx=0.0, ty=0.0, theta=0.0))]
    fn new(tx: f64, ty: f64, theta: f64) -> Self {
        PyPose2(geometry::Pose2::new(tx, ty, theta))
    }

    #[getter]
    fn tx(&self) -> f64 {
        self.0.tx
    }

    #[getter]
    fn ty(&self) -> f64 {
        self.0.ty
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    fn apply(&self, point: (f64, f64)) -> (f64, f64) {
        let q = self.0.apply(Point2::new(point.0, point.1));
        (q.x, q.y)
    }

    fn compose(&self, other: &PyPose2) -> PyPose2 {
        PyPose2(self.0.compose(&other.0))
    }

    fn inverse(&self) -> PyPose2 {
        PyPose2(self.0.inverse())
    }

    fn __repr__(&self) -> String {
        format!("Pose2(tx={}, ty={}, theta={})", self.0.tx, self.0.ty, self.0.theta)
    }
}

#[pyclass(name = "PoleMap", from_py_object)]
#[derive(Clone)]
struct PyPoleMap(polemap::PoleMap);

#[pymethods]
impl PyPoleMap {
    #[staticmethod]
    #[pyo3(signature = (path, frame_name="global"))]
    fn load(path: PathBuf, frame_name: &str) -> PyResult<Self> {
        polemap::load_map(&path, frame(frame_name)?).map(PyPoleMap).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        polemap::save_map(&self.0, &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn frame(&self) -> &'static str {
        match self.0.frame {
            Frame::Global => "global",
            Frame::Local => "local",
        }
    }

    fn ids(&self) -> Vec<u64> {
        self.0.poles.iter().map(|p| p.id).collect()
    }

    fn centers(&self) -> Vec<(f64, f64)> {
        self.0.centers().map(|c| (c.x, c.y)).collect()
    }

    fn classes(&self) -> Vec<Option<usize>> {
        self.0.poles.iter().map(|p| p.class_id).collect()
    }

    fn set_classes(&mut self, classes: Vec<usize>) -> PyResult<()> {
        if classes.len() != self.0.len() {
            return Err(PyValueError::new_err(format!("expected {} classes, got {}", self.0.len(), classes.len())));
        }
        for (p, c) in self.0.poles.iter_mut().zip(classes) {
            p.class_id = Some(c);
        }
        Ok(())
    }

    fn descriptors(&self) -> Vec<Vec<f64>> {
        self.0.poles.iter().map(|p| p.descriptor.clone()).collect()
    }

    fn transformed(&self, pose: &PyPose2) -> PyPoleMap {
        PyPoleMap(self.0.transformed(&pose.0))
    }
}

/// Returns `(labels, centroids, sse_history, converged)`.
#[pyfunction]
#[pyo3(signature = (descriptors, k, seed=0, max_iters=300, standardize=false))]
fn kmeans_fit(
    descriptors: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    max_iters: usize,
    standardize: bool,
) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>, bool)> {
    let params = KMeansParams { k, seed, max_iters, standardize };
    let fit = classing::kmeans_fit(&descriptors, &params).map_err(to_py)?;
    Ok((fit.assignment.labels, fit.model.centroids, fit.sse_history, fit.converged))
}

/// Returns `(pose, score)`.
#[pyfunction]
#[pyo3(signature = (local, global_map, mode="class_gated", inlier_radius=1.0, distance_tol=0.5, max_hypotheses=50_000, seed=0))]
fn localize(
    local: &PyPoleMap,
    global_map: &PyPoleMap,
    mode: &str,
    inlier_radius: f64,
    distance_tol: f64,
    max_hypotheses: usize,
    seed: u64,
) -> PyResult<(PyPose2, u32)> {
    let mode: ScoringMode = mode.parse().map_err(to_py)?;
    let params = RansacParams { mode, inlier_radius, distance_tol, max_hypotheses, seed, ..RansacParams::default() };
    let table = DistanceTable::build(&global_map.0, TableParams::default()).map_err(to_py)?;
    let r = matcher::ransac_localize(&local.0, &global_map.0, &table, &params).map_err(to_py)?;
    Ok((PyPose2(r.best.pose), r.best.score))
}

#[pyfunction]
#[pyo3(signature = (extent_x, extent_y, pole_count, seed=0, min_separation=2.0))]
fn generate_world(
    extent_x: f64,
    extent_y: f64,
    pole_count: usize,
    seed: u64,
    min_separation: f64,
) -> PyResult<PyPoleMap> {
    let spec = WorldSpec { extent: (extent_x, extent_y), pole_count, seed, min_separation, ..WorldSpec::default() };
    synth::generate_world(&spec).map(|w| PyPoleMap(w.map)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (global_map, pose, sensor_range=40.0, position_noise=0.0, dropout=0.0, distractors=0, seed=0))]
fn observe(
    global_map: &PyPoleMap,
    pose: &PyPose2,
    sensor_range: f64,
    position_noise: f64,
    dropout: f64,
    distractors: usize,
    seed: u64,
) -> PyResult<PyPoleMap> {
    let spec = ObservationSpec {
        sensor_range,
        position_noise,
        dropout,
        distractor_count: distractors,
        true_pose: pose.0,
        seed,
        ..ObservationSpec::default()
    };
    synth::observe(&global_map.0, &spec).map(PyPoleMap).map_err(to_py)
}

/// Percentage of predictions strictly closer than `threshold` to the truth.
/// `None` predictions count as failures.
#[pyfunction]
fn accuracy(predicted: Vec<Option<(f64, f64)>>, truth: Vec<(f64, f64)>, threshold: f64) -> PyResult<f64> {
    if predicted.len() != truth.len() {
        return Err(PyValueError::new_err("predicted and truth differ in length"));
    }
    let records: Vec<EvalRecord> = predicted
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(i, (p, t))| {
            let truth = geometry::Pose2::new(t.0, t.1, 0.0);
            let pred = p.map(|(x, y)| (geometry::Pose2::new(x, y, 0.0), 0));
            EvalRecord::new(i, ScoringMode::Baseline, &truth, pred)
        })
        .collect();
    eval::accuracy(&records, threshold).map_err(to_py)
}

/// Returns one `(x, y, width, height, descriptor)` tuple per detected pole.
#[pyfunction]
#[pyo3(signature = (points, voxel_size=0.2, count_threshold=2, min_height=1.5))]
fn extract_poles(
    points: Vec<[f64; 3]>,
    voxel_size: f64,
    count_threshold: u32,
    min_height: f64,
) -> PyResult<Vec<(f64, f64, f64, f64, Vec<f64>)>> {
    let params = ExtractionParams { voxel_size, count_threshold, min_height, ..ExtractionParams::default() };
    let dets = extraction::extract_poles(&PointCloud::new(points), &params).map_err(to_py)?;
    Ok(dets.into_iter().map(|d| (d.center.x, d.center.y, d.width, d.height, d.descriptor)).collect())
}

#[pymodule]
fn poleloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose2>()?;
    m.add_class::<PyPoleMap>()?;
    m.add_function(wrap_pyfunction!(kmeans_fit, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_world, m)?)?;
    m.add_function(wrap_pyfunction!(observe, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(extract_poles, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_names() {
        assert_eq!(frame("global").unwrap(), Frame::Global);
        assert_eq!(frame("local").unwrap(), Frame::Local);
    }

    #[test]
    fn pose_round_trip() {
        let p = PyPose2::new(1.0, 2.0, 0.3);
        let q = p.apply(p.inverse().apply((4.0, -1.0)));
        assert!((q.0 - 4.0).abs() < 1e-12 && (q.1 + 1.0).abs() < 1e-12);
    }
}
