//! Pseudo pole classes from seeded Lloyd k-means.
//!
//! Initial centroids are `k` distinct observations sampled without
//! replacement. Each iteration recomputes centroids as member means and then
//! reassigns every point to its nearest centroid (squared Euclidean distance,
//! lowest index on ties). Iteration stops once an assignment pass leaves
//! every label unchanged, or after `max_iters` updates.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PoleError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Z-score each descriptor dimension before clustering.
    pub standardize: bool,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { k: 200, seed: 0, max_iters: 300, standardize: false }
    }
}

/// Per-dimension affine scaling applied before distances are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &[Vec<f64>]) -> Self {
        let d = data[0].len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in data {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // constant dimensions keep unit scale
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    /// In the (possibly standardized) clustering space.
    pub centroids: Vec<Vec<f64>>,
    pub scaling: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignment: ClusterAssignment,
    /// Number of centroid updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// SSE after the initial assignment and after every iteration.
    pub sse_history: Vec<f64>,
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist_sq(c, x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn assign_all(centroids: &[Vec<f64>], data: &[Vec<f64>]) -> Vec<usize> {
    data.par_iter().map(|x| nearest(centroids, x)).collect()
}

fn sse(centroids: &[Vec<f64>], data: &[Vec<f64>], labels: &[usize]) -> f64 {
    data.iter().zip(labels).map(|(x, &l)| dist_sq(x, &centroids[l])).sum()
}

fn validate_data(data: &[Vec<f64>]) -> Result<usize> {
    let d = data.first().map(Vec::len).ok_or_else(|| PoleError::invalid("no descriptors to cluster"))?;
    if d == 0 {
        return Err(PoleError::invalid("descriptors are empty"));
    }
    for (i, x) in data.iter().enumerate() {
        if x.len() != d {
            return Err(PoleError::invalid(format!("descriptor {i} has dimension {}, expected {d}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PoleError::invalid(format!("descriptor {i} is not finite")));
        }
    }
    Ok(d)
}

/// Fits `k` centroids to `descriptors`.
pub fn kmeans_fit(descriptors: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansFit> {
    let d = validate_data(descriptors)?;
    let n = descriptors.len();
    if params.k == 0 || params.k > n {
        return Err(PoleError::invalid(format!("k = {} needs 1 <= k <= {n} (number of descriptors)", params.k)));
    }
    if params.max_iters == 0 {
        return Err(PoleError::invalid("max_iters must be at least 1"));
    }

    let scaling = params.standardize.then(|| Standardizer::fit(descriptors));
    let scaled;
    let data: &[Vec<f64>] = match &scaling {
        Some(s) => {
            scaled = descriptors.iter().map(|x| s.apply(x)).collect::<Vec<_>>();
            &scaled
        }
        None => descriptors,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let picks = rand::seq::index::sample(&mut rng, n, params.k);
    let mut centroids: Vec<Vec<f64>> = picks.iter().map(|i| data[i].clone()).collect();

    let mut labels = assign_all(&centroids, data);
    let mut sse_history = vec![sse(&centroids, data, &labels)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        update_centroids(data, &labels, &mut centroids);
        iterations += 1;
        let next = assign_all(&centroids, data);
        sse_history.push(sse(&centroids, data, &next));
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }

    Ok(KMeansFit {
        model: KMeansModel { k: params.k, d, seed: params.seed, centroids, scaling },
        assignment: ClusterAssignment { labels },
        iterations,
        converged,
        sse_history,
    })
}

/// Moves each centroid to the mean of its members. A centroid with no
/// members is reseated on the point farthest from its own centroid.
fn update_centroids(data: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let d = centroids[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in data.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    for ((c, s), &m) in centroids.iter_mut().zip(&sums).zip(&counts) {
        if m > 0 {
            for (cv, sv) in c.iter_mut().zip(s) {
                *cv = sv / m as f64;
            }
        }
    }
    if counts.iter().all(|&m| m > 0) {
        return;
    }
    let mut spread: Vec<f64> = data.iter().zip(labels).map(|(x, &l)| dist_sq(x, &centroids[l])).collect();
    for i in 0..k {
        if counts[i] > 0 {
            continue;
        }
        let far = (0..data.len())
            .max_by(|&a, &b| spread[a].total_cmp(&spread[b]).then(b.cmp(&a)))
            .expect("data is non-empty");
        centroids[i] = data[far].clone();
        spread[far] = f64::NEG_INFINITY;
    }
}

impl KMeansModel {
    /// Class of `descriptor`: nearest centroid, lowest index on ties.
    pub fn assign_class(&self, descriptor: &[f64]) -> Result<usize> {
        if descriptor.len() != self.d {
            return Err(PoleError::invalid(format!(
                "descriptor has dimension {}, model expects {}",
                descriptor.len(),
                self.d
            )));
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(PoleError::invalid("descriptor is not finite"));
        }
        Ok(match &self.scaling {
            Some(s) => nearest(&self.centroids, &s.apply(descriptor)),
            None => nearest(&self.centroids, descriptor),
        })
    }

    /// Writes the model as CSV: a `k,d,seed` row, then one centroid per row
    /// in class order. Standardized models append `scale_mean` and
    /// `scale_std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},{}\n", self.k, self.d, self.seed);
        let mut row = |prefix: Option<&str>, values: &[f64]| {
            let mut line = String::new();
            if let Some(p) = prefix {
                line.push_str(p);
                line.push(',');
            }
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        };
        for c in &self.centroids {
            row(None, c);
        }
        if let Some(s) = &self.scaling {
            row(Some("scale_mean"), &s.mean);
            row(Some("scale_std"), &s.std);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| PoleError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PoleError::io(path, e))?;
        Self::from_csv(&text, path)
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| PoleError::parse(path, 1, "empty model file"))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(PoleError::parse(path, ln + 1, "expected `k,d,seed` header row"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| PoleError::parse(path, ln + 1, e.to_string()));
        let k = parse_usize(fields[0])?;
        let d = parse_usize(fields[1])?;
        let seed = fields[2].parse::<u64>().map_err(|e| PoleError::parse(path, ln + 1, e.to_string()))?;
        if k == 0 || d == 0 {
            return Err(PoleError::parse(path, ln + 1, "k and d must be positive"));
        }

        let parse_row = |ln: usize, parts: &[&str]| -> Result<Vec<f64>> {
            if parts.len() != d {
                return Err(PoleError::parse(path, ln + 1, format!("expected {d} values, found {}", parts.len())));
            }
            parts
                .iter()
                .map(|s| {
                    let v =
                        s.trim().parse::<f64>().map_err(|e| PoleError::parse(path, ln + 1, format!("`{s}`: {e}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(PoleError::parse(path, ln + 1, "non-finite value"))
                    }
                })
                .collect()
        };

        let mut centroids = Vec::with_capacity(k);
        let mut mean = None;
        let mut std = None;
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split(',').collect();
            match parts[0].trim() {
                "scale_mean" => mean = Some(parse_row(ln, &parts[1..])?),
                "scale_std" => std = Some(parse_row(ln, &parts[1..])?),
                _ if centroids.len() < k => centroids.push(parse_row(ln, &parts)?),
                _ => return Err(PoleError::parse(path, ln + 1, format!("more than k = {k} centroid rows"))),
            }
        }
        if centroids.len() != k {
            return Err(PoleError::parse(
                path,
                text.lines().count(),
                format!("expected {k} centroid rows, found {}", centroids.len()),
            ));
        }
        let scaling = match (mean, std) {
            (Some(mean), Some(std)) => Some(Standardizer { mean, std }),
            (None, None) => None,
            _ => {
                return Err(PoleError::parse(
                    path,
                    text.lines().count(),
                    "scale_mean and scale_std must appear together",
                ))
            }
        };
        Ok(Self { k, d, seed, centroids, scaling })
    }
}

/// Free-function form of [`KMeansModel::assign_class`].
pub fn assign_class(model: &KMeansModel, descriptor: &[f64]) -> Result<usize> {
    model.assign_class(descriptor)
}
