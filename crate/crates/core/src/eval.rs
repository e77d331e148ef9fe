//! Localization accuracy and baseline-vs-class experiments.
//!
//! A query succeeds when the predicted position lies strictly closer than
//! the threshold to the true position. Accuracy is the success percentage
//! over all queries; failed localizations stay in the denominator with an
//! infinite error.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::classing::KMeansModel;
use crate::error::{PoleError, Result};
use crate::geometry::{angle_diff, Point2, Pose2};
use crate::matcher::{ransac_localize_modes, RansacParams, ScoringMode};
use crate::polemap::{DistanceTable, PoleMap, TableParams};
use crate::synth::{observe, ObservationSpec};

pub const TRAJECTORY_HEADER: &str = "query_id,mode,x_true,y_true,x_pred,y_pred,error,score,heading_error";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub query_id: usize,
    pub mode: ScoringMode,
    /// `None` when localization produced no hypothesis.
    pub predicted: Option<Point2>,
    pub ground_truth: Point2,
    pub error: f64,
    /// Absolute heading error, radians; infinite on failure.
    pub heading_error: f64,
    pub score: u32,
}

impl EvalRecord {
    pub fn new(query_id: usize, mode: ScoringMode, truth: &Pose2, predicted: Option<(Pose2, u32)>) -> Self {
        let ground_truth = truth.translation();
        match predicted {
            Some((pose, score)) => {
                let p = pose.translation();
                EvalRecord {
                    query_id,
                    mode,
                    predicted: Some(p),
                    ground_truth,
                    error: p.distance(&ground_truth),
                    heading_error: angle_diff(pose.theta, truth.theta),
                    score,
                }
            }
            None => EvalRecord {
                query_id,
                mode,
                predicted: None,
                ground_truth,
                error: f64::INFINITY,
                heading_error: f64::INFINITY,
                score: 0,
            },
        }
    }

    pub fn succeeded(&self, threshold: f64) -> bool {
        self.error < threshold
    }
}

/// Percentage of `records` with error below `threshold`.
pub fn accuracy(records: &[EvalRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(PoleError::invalid("accuracy of an empty record set"));
    }
    let ok = records.iter().filter(|r| r.succeeded(threshold)).count();
    Ok(100.0 * ok as f64 / records.len() as f64)
}

pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        let (px, py) = r.predicted.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.query_id, r.mode, r.ground_truth.x, r.ground_truth.y, px, py, r.error, r.score, r.heading_error
        )
        .unwrap();
    }
    out
}

/// Parses a trajectory CSV. Errors are recomputed from the coordinates.
pub fn records_from_csv(text: &str, path: &Path) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
        _ => return Err(PoleError::parse(path, 1, format!("expected header `{TRAJECTORY_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(PoleError::parse(path, ln, format!("expected 9 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| PoleError::parse(path, ln, format!("`{}`: {e}", f[k])));
        let query_id = f[0].parse::<usize>().map_err(|e| PoleError::parse(path, ln, e.to_string()))?;
        let mode = f[1].parse::<ScoringMode>().map_err(|e| PoleError::parse(path, ln, e.to_string()))?;
        let ground_truth = Point2::new(num(2)?, num(3)?);
        let (px, py) = (num(4)?, num(5)?);
        let predicted = (px.is_finite() && py.is_finite()).then(|| Point2::new(px, py));
        let score = f[7].parse::<u32>().map_err(|e| PoleError::parse(path, ln, e.to_string()))?;
        out.push(EvalRecord {
            query_id,
            mode,
            predicted,
            ground_truth,
            error: predicted.map_or(f64::INFINITY, |p| p.distance(&ground_truth)),
            heading_error: num(8)?,
            score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAccuracy {
    pub threshold: f64,
    pub successes: usize,
    pub total: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeAccuracy {
    pub mode: ScoringMode,
    pub per_threshold: Vec<ThresholdAccuracy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub dataset: String,
    pub thresholds: Vec<f64>,
    pub modes: Vec<ModeAccuracy>,
}

impl AccuracyReport {
    /// Groups `records` by mode, in order of first appearance.
    pub fn from_records(dataset: &str, records: &[EvalRecord], thresholds: &[f64]) -> Result<Self> {
        if records.is_empty() {
            return Err(PoleError::invalid("no records to report"));
        }
        if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(PoleError::invalid("thresholds must be a non-empty list of positive values"));
        }
        let mut modes: Vec<ScoringMode> = Vec::new();
        for r in records {
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
        }
        let modes = modes
            .into_iter()
            .map(|mode| {
                let subset: Vec<EvalRecord> = records.iter().filter(|r| r.mode == mode).cloned().collect();
                let per_threshold = thresholds
                    .iter()
                    .map(|&threshold| {
                        let successes = subset.iter().filter(|r| r.succeeded(threshold)).count();
                        ThresholdAccuracy {
                            threshold,
                            successes,
                            total: subset.len(),
                            percent: 100.0 * successes as f64 / subset.len() as f64,
                        }
                    })
                    .collect();
                ModeAccuracy { mode, per_threshold }
            })
            .collect();
        Ok(Self { dataset: dataset.to_string(), thresholds: thresholds.to_vec(), modes })
    }

    pub fn percent(&self, mode: ScoringMode, threshold: f64) -> Option<f64> {
        self.modes
            .iter()
            .find(|m| m.mode == mode)?
            .per_threshold
            .iter()
            .find(|t| t.threshold == threshold)
            .map(|t| t.percent)
    }

    /// True when accuracy never drops as the threshold grows, for every mode.
    pub fn is_threshold_monotone(&self) -> bool {
        self.modes.iter().all(|m| {
            m.per_threshold
                .iter()
                .all(|a| m.per_threshold.iter().all(|b| !(a.threshold <= b.threshold) || a.percent <= b.percent))
        })
    }

    /// `key: value` lines.
    pub fn summary_text(&self) -> String {
        let mut out = format!("dataset: {}\n", self.dataset);
        for m in &self.modes {
            for t in &m.per_threshold {
                writeln!(out, "{}@{}m: {:.2}% ({}/{})", m.mode, t.threshold, t.percent, t.successes, t.total).unwrap();
            }
        }
        out
    }

    /// One row per dataset; for each threshold one column per mode, with
    /// class-aware modes ahead of the baseline.
    pub fn table_csv(&self) -> String {
        let mut modes: Vec<&ModeAccuracy> = self.modes.iter().collect();
        modes.sort_by_key(|m| (m.mode == ScoringMode::Baseline, m.mode));
        let mut header = String::from("dataset");
        let mut row = self.dataset.clone();
        for (ti, t) in self.thresholds.iter().enumerate() {
            for m in &modes {
                write!(header, ",{}@{}m", m.mode, t).unwrap();
                write!(row, ",{:.2}", m.per_threshold[ti].percent).unwrap();
            }
        }
        format!("{header}\n{row}\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: usize,
    /// `true_pose` inside is the ground truth.
    pub observation: ObservationSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub modes: Vec<ScoringMode>,
    /// Shared matcher settings; `mode` is replaced per run.
    pub ransac: RansacParams,
    pub table: TableParams,
    pub thresholds: Vec<f64>,
    pub dataset: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            modes: vec![ScoringMode::ClassGated, ScoringMode::Baseline],
            ransac: RansacParams::default(),
            table: TableParams::default(),
            thresholds: vec![5.0, 1.0],
            dataset: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub records: Vec<EvalRecord>,
    pub report: AccuracyReport,
}

/// Localizes every query in every mode. Local poles are classed with
/// `model` when a class-aware mode runs.
pub fn run_experiment(
    global: &PoleMap,
    model: Option<&KMeansModel>,
    queries: &[Query],
    config: &ExperimentConfig,
) -> Result<Experiment> {
    if queries.is_empty() {
        return Err(PoleError::invalid("experiment needs at least one query"));
    }
    if config.modes.is_empty() {
        return Err(PoleError::invalid("experiment needs at least one mode"));
    }
    let needs_classes = config.modes.iter().any(ScoringMode::uses_classes);
    if needs_classes && !global.is_fully_classed() {
        return Err(PoleError::invalid("class-aware modes need a fully classed global map"));
    }
    let table = DistanceTable::build(global, config.table)?;

    let per_query: Vec<Result<Vec<EvalRecord>>> = queries
        .par_iter()
        .map(|q| {
            let mut local = observe(global, &q.observation)?;
            if needs_classes {
                let model = model.ok_or_else(|| PoleError::invalid("class-aware modes need a k-means model"))?;
                for p in &mut local.poles {
                    p.class_id = Some(model.assign_class(&p.descriptor)?);
                }
            }
            let truth = &q.observation.true_pose;
            match ransac_localize_modes(&local, global, &table, &config.ransac, &config.modes) {
                Ok(results) => Ok(config
                    .modes
                    .iter()
                    .zip(results)
                    .map(|(&mode, r)| EvalRecord::new(q.id, mode, truth, Some((r.best.pose, r.best.score))))
                    .collect()),
                Err(PoleError::NoHypothesis(_)) => {
                    Ok(config.modes.iter().map(|&mode| EvalRecord::new(q.id, mode, truth, None)).collect())
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut records = Vec::with_capacity(queries.len() * config.modes.len());
    for r in per_query {
        records.extend(r?);
    }
    let report = AccuracyReport::from_records(&config.dataset, &records, &config.thresholds)?;
    Ok(Experiment { records, report })
}
