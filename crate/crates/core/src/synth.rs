//! Synthetic pole worlds, observations and the exhaustive localization
//! oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Config;
use crate::error::{PoleError, Result};
use crate::extraction::PointCloud;
use crate::geometry::{Point2, Pose2};
use crate::matcher::{self, Candidate, MatchResult, RansacParams, Scorer};
use crate::polemap::{Frame, Pole, PoleMap, TableParams};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleType {
    pub height: f64,
    pub width: f64,
    /// Per-entry Gaussian noise on drawn descriptors.
    pub descriptor_sigma: f64,
}

/// Street light, sign post, tree trunk, utility pole.
pub fn default_pole_types() -> Vec<PoleType> {
    vec![
        PoleType { height: 8.0, width: 0.35, descriptor_sigma: 0.05 },
        PoleType { height: 2.5, width: 0.10, descriptor_sigma: 0.05 },
        PoleType { height: 4.0, width: 0.60, descriptor_sigma: 0.05 },
        PoleType { height: 6.0, width: 0.25, descriptor_sigma: 0.05 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub extent: (f64, f64),
    pub pole_count: usize,
    pub types: Vec<PoleType>,
    pub min_separation: f64,
    pub seed: u64,
    /// Descriptor slices; descriptors have `2 * slice_count + 2` entries.
    pub slice_count: usize,
    /// Height range covered by the descriptor slices, meters.
    pub descriptor_span: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            extent: (200.0, 200.0),
            pole_count: 300,
            types: default_pole_types(),
            min_separation: 2.0,
            seed: 0,
            slice_count: 10,
            descriptor_span: 3.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent.0 > 0.0 && self.extent.1 > 0.0) {
            return Err(PoleError::invalid("world extent must be positive"));
        }
        if !(self.min_separation > 0.0) {
            return Err(PoleError::invalid("min_separation must be positive"));
        }
        if self.types.is_empty() {
            return Err(PoleError::invalid("at least one pole type is required"));
        }
        if self.slice_count == 0 || !(self.descriptor_span > 0.0) {
            return Err(PoleError::invalid("descriptor layout needs slices and a positive span"));
        }
        for t in &self.types {
            if !(t.height > 0.0 && t.width > 0.0 && t.descriptor_sigma >= 0.0) {
                return Err(PoleError::invalid(format!("invalid pole type {t:?}")));
            }
        }
        Ok(())
    }

    /// Reads `world.*` keys. `world.extent_x`, `world.extent_y` and
    /// `world.pole_count` are required.
    pub fn from_config(cfg: &Config, seed: u64) -> Result<Self> {
        let d = WorldSpec::default();
        let types = match cfg.get_str("world.types") {
            Some(s) => parse_types(s)?,
            None => {
                let n = cfg.get_or("world.type_count", d.types.len())?;
                if n == 0 || n > d.types.len() {
                    return Err(PoleError::invalid(format!(
                        "world.type_count must be in 1..={} (use world.types for custom types)",
                        d.types.len()
                    )));
                }
                let sigma = cfg.get("world.descriptor_sigma")?;
                d.types[..n]
                    .iter()
                    .map(|t| PoleType { descriptor_sigma: sigma.unwrap_or(t.descriptor_sigma), ..*t })
                    .collect()
            }
        };
        let spec = WorldSpec {
            extent: (cfg.require("world.extent_x")?, cfg.require("world.extent_y")?),
            pole_count: cfg.require("world.pole_count")?,
            types,
            min_separation: cfg.get_or("world.min_separation", d.min_separation)?,
            seed,
            slice_count: cfg.get_or("world.slice_count", d.slice_count)?,
            descriptor_span: cfg.get_or("world.descriptor_span", d.descriptor_span)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `height:width:sigma` entries separated by `;`.
fn parse_types(s: &str) -> Result<Vec<PoleType>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let v: Vec<f64> = t
                .split(':')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| PoleError::invalid(format!("world.types entry `{t}`: {e}")))?;
            match v[..] {
                [height, width, descriptor_sigma] => Ok(PoleType { height, width, descriptor_sigma }),
                _ => Err(PoleError::invalid(format!("world.types entry `{t}` needs height:width:sigma"))),
            }
        })
        .collect()
}

/// Noise-free descriptor of a solid cylinder, in the layout produced by
/// pole extraction.
pub fn ideal_descriptor(t: &PoleType, slice_count: usize, span: f64) -> Vec<f64> {
    let slice = span / slice_count as f64;
    let mut out = Vec::with_capacity(2 * slice_count + 2);
    let fill: Vec<f64> = (0..slice_count)
        .map(|s| {
            if s + 1 == slice_count && t.height >= span {
                1.0
            } else {
                ((t.height - s as f64 * slice) / slice).clamp(0.0, 1.0)
            }
        })
        .collect();
    out.extend(&fill);
    out.extend(fill.iter().map(|&f| if f > 0.0 { t.width / 2.0 } else { 0.0 }));
    out.push(t.height);
    out.push(t.width);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub map: PoleMap,
    /// True type of each pole, aligned with `map.poles`.
    pub types: Vec<usize>,
}

/// Places poles uniformly with rejection sampling and draws a noisy
/// descriptor for each from its type.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> =
        spec.types.iter().map(|t| ideal_descriptor(t, spec.slice_count, spec.descriptor_span)).collect();
    let min_sq = spec.min_separation * spec.min_separation;
    let mut placed: Vec<Point2> = Vec::with_capacity(spec.pole_count);
    let mut poles = Vec::with_capacity(spec.pole_count);
    let mut types = Vec::with_capacity(spec.pole_count);
    for id in 0..spec.pole_count {
        let mut spot = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = Point2::new(rng.random_range(0.0..spec.extent.0), rng.random_range(0.0..spec.extent.1));
            if placed.iter().all(|q| q.distance_sq(&p) >= min_sq) {
                spot = Some(p);
                break;
            }
        }
        let center = spot.ok_or_else(|| {
            PoleError::Capacity(format!(
                "could not place pole {id} of {} at {} m separation in {:?}",
                spec.pole_count, spec.min_separation, spec.extent
            ))
        })?;
        placed.push(center);
        let ty = rng.random_range(0..spec.types.len());
        let pole_type = &spec.types[ty];
        let noise = Normal::new(0.0, pole_type.descriptor_sigma).map_err(|e| PoleError::invalid(e.to_string()))?;
        let descriptor = means[ty].iter().map(|m| m + noise.sample(&mut rng)).collect();
        poles.push(Pole { id: id as u64, center, width: pole_type.width, class_id: None, descriptor });
        types.push(ty);
    }
    Ok(World { map: PoleMap::new(Frame::Global, poles)?, types })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub sensor_range: f64,
    pub position_noise: f64,
    pub dropout: f64,
    pub distractor_count: usize,
    /// Sensor pose in the global frame.
    pub true_pose: Pose2,
    pub seed: u64,
    /// Extra per-entry noise on re-observed descriptors.
    pub descriptor_noise: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            sensor_range: 40.0,
            position_noise: 0.0,
            dropout: 0.0,
            distractor_count: 0,
            true_pose: Pose2::IDENTITY,
            seed: 0,
            descriptor_noise: 0.0,
        }
    }
}

impl ObservationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sensor_range > 0.0) {
            return Err(PoleError::invalid("sensor_range must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(PoleError::invalid(format!("dropout must be in [0, 1], got {}", self.dropout)));
        }
        if !(self.position_noise >= 0.0 && self.descriptor_noise >= 0.0) {
            return Err(PoleError::invalid("noise levels must be non-negative"));
        }
        if !self.true_pose.is_finite() {
            return Err(PoleError::invalid("true_pose must be finite"));
        }
        Ok(())
    }

    /// Reads `obs.*` keys; `obs.sensor_range` is required.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = ObservationSpec::default();
        let spec = ObservationSpec {
            sensor_range: cfg.require("obs.sensor_range")?,
            position_noise: cfg.get_or("obs.position_noise", d.position_noise)?,
            dropout: cfg.get_or("obs.dropout", d.dropout)?,
            distractor_count: cfg.get_or("obs.distractors", d.distractor_count)?,
            descriptor_noise: cfg.get_or("obs.descriptor_noise", d.descriptor_noise)?,
            ..d
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Local map seen from `spec.true_pose`: global poles within range, moved
/// into the sensor frame, perturbed, thinned by dropout, plus distractors.
///
/// Observed poles keep their global id. Distractors get ids above every
/// global id and descriptors drawn uniformly from the per-dimension range
/// of the global descriptors.
pub fn observe(global: &PoleMap, spec: &ObservationSpec) -> Result<PoleMap> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.position_noise).map_err(|e| PoleError::invalid(e.to_string()))?;
    let desc_noise = Normal::new(0.0, spec.descriptor_noise).map_err(|e| PoleError::invalid(e.to_string()))?;
    let to_sensor = spec.true_pose.inverse();
    let origin = spec.true_pose.translation();

    let mut poles = Vec::new();
    for p in &global.poles {
        if p.center.distance(&origin) > spec.sensor_range {
            continue;
        }
        let local = to_sensor.apply(p.center);
        let jitter = Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        let dropped = rng.random::<f64>() < spec.dropout;
        if dropped {
            continue;
        }
        poles.push(Pole {
            id: p.id,
            center: local + jitter,
            width: p.width,
            class_id: None,
            descriptor: p.descriptor.iter().map(|v| v + desc_noise.sample(&mut rng)).collect(),
        });
    }

    let dim = global.descriptor_dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in &global.poles {
        for (i, v) in p.descriptor.iter().enumerate() {
            lo[i] = lo[i].min(*v);
            hi[i] = hi[i].max(*v);
        }
    }
    let (w_lo, w_hi) = global.poles.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.width), b.max(p.width)));
    let (w_lo, w_hi) = if global.is_empty() { (0.1, 0.5) } else { (w_lo, w_hi) };
    let next_id = global.poles.iter().map(|p| p.id + 1).max().unwrap_or(0);
    for k in 0..spec.distractor_count {
        let r = spec.sensor_range * rng.random::<f64>().sqrt();
        let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let width = if w_hi > w_lo { rng.random_range(w_lo..=w_hi) } else { w_lo };
        poles.push(Pole {
            id: next_id + k as u64,
            center: Point2::new(r * a.cos(), r * a.sin()),
            width,
            class_id: None,
            descriptor: (0..dim).map(|i| if hi[i] > lo[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] }).collect(),
        });
    }
    PoleMap::new(Frame::Local, poles)
}

/// `count` sensor poses drawn uniformly over the world extent with uniform
/// heading. Each gets `template` with its own pose and observation seed.
pub fn random_queries(
    extent: (f64, f64),
    template: &ObservationSpec,
    count: usize,
    seed: u64,
) -> Vec<crate::eval::Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let true_pose = Pose2::new(
                rng.random_range(0.0..extent.0),
                rng.random_range(0.0..extent.1),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            crate::eval::Query {
                id,
                observation: ObservationSpec { true_pose, seed: rng.random(), ..template.clone() },
            }
        })
        .collect()
}

/// Cost bounds for [`oracle_localize`].
pub const ORACLE_MAX_LOCAL: usize = 12;
pub const ORACLE_MAX_GLOBAL: usize = 40;

/// Exhaustive counterpart of [`matcher::ransac_localize`]: every ordered
/// local pair against every ordered global pair whose length is compatible
/// under `table` limits, scored with a linear-scan neighbor search, no
/// truncation. Enumeration order matches the RANSAC generation order when
/// all local poles are used.
pub fn oracle_localize(
    local: &PoleMap,
    global: &PoleMap,
    params: &RansacParams,
    table: &TableParams,
) -> Result<MatchResult> {
    if local.len() > ORACLE_MAX_LOCAL || global.len() > ORACLE_MAX_GLOBAL {
        return Err(PoleError::Capacity(format!(
            "oracle handles at most {ORACLE_MAX_LOCAL} local and {ORACLE_MAX_GLOBAL} global poles, got {} and {}",
            local.len(),
            global.len()
        )));
    }
    params.validate()?;
    let scorer = Scorer::with_linear_scan(local, global, params)?;
    if global.is_empty() {
        return Err(PoleError::NoHypothesis("global map is empty".into()));
    }
    let mut candidates = Vec::new();
    for (i, pi) in local.poles.iter().enumerate() {
        for (j, pj) in local.poles.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = pi.center.distance(&pj.center);
            if !(d > params.min_pair_separation) {
                continue;
            }
            for (a, ga) in global.poles.iter().enumerate() {
                for (b, gb) in global.poles.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    let gd = ga.center.distance(&gb.center);
                    let in_table = gd > table.min_pair_separation && gd <= table.max_distance;
                    let compatible = gd >= d - params.distance_tol && gd <= d + params.distance_tol;
                    if !(in_table && compatible) {
                        continue;
                    }
                    let pose = matcher::estimate_transform(
                        pi.center,
                        pj.center,
                        ga.center,
                        gb.center,
                        params.min_pair_separation,
                    )?;
                    candidates.push(Candidate { pose, local: (i, j), global: (a, b) });
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(PoleError::NoHypothesis("no compatible pair correspondence".into()));
    }
    Ok(matcher::select_best(&scorer, &candidates))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnWorldSpec {
    pub extent: (f64, f64),
    pub column_count: usize,
    pub height_range: (f64, f64),
    pub width_range: (f64, f64),
    pub min_separation: f64,
    pub voxel_size: f64,
    pub points_per_voxel: usize,
    /// Points scattered in the lowest voxel layer.
    pub ground_points: usize,
    pub seed: u64,
}

impl Default for ColumnWorldSpec {
    fn default() -> Self {
        Self {
            extent: (40.0, 40.0),
            column_count: 12,
            height_range: (2.5, 6.0),
            width_range: (0.15, 0.6),
            min_separation: 4.0,
            voxel_size: 0.2,
            points_per_voxel: 3,
            ground_points: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnTruth {
    pub center: Point2,
    pub height: f64,
    pub width: f64,
}

/// Point columns aligned to a voxel lattice anchored at the origin. Every
/// voxel whose center lies within the column radius (and the voxel holding
/// the column center) receives `points_per_voxel` points from ground level
/// to the column top. Grids built over bounds starting at multiples of
/// `voxel_size` see exactly these voxels.
pub fn generate_column_cloud(spec: &ColumnWorldSpec) -> Result<(PointCloud, Vec<ColumnTruth>)> {
    if !(spec.voxel_size > 0.0 && spec.min_separation > 0.0) {
        return Err(PoleError::invalid("voxel_size and min_separation must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vs = spec.voxel_size;
    let margin = spec.width_range.1 + vs;
    let min_sq = spec.min_separation * spec.min_separation;
    let mut truths: Vec<ColumnTruth> = Vec::new();
    for k in 0..spec.column_count {
        let mut spot = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = Point2::new(
                rng.random_range(margin..spec.extent.0 - margin),
                rng.random_range(margin..spec.extent.1 - margin),
            );
            if truths.iter().all(|t| t.center.distance_sq(&p) >= min_sq) {
                spot = Some(p);
                break;
            }
        }
        let center = spot.ok_or_else(|| PoleError::Capacity(format!("could not place column {k}")))?;
        truths.push(ColumnTruth {
            center,
            height: rng.random_range(spec.height_range.0..=spec.height_range.1),
            width: rng.random_range(spec.width_range.0..=spec.width_range.1),
        });
    }

    let mut points = Vec::new();
    for t in &truths {
        points.extend(column_points(t.center, t.width / 2.0, t.height, vs, spec.points_per_voxel, &mut rng));
    }
    for _ in 0..spec.ground_points {
        points.push([
            rng.random_range(0.0..spec.extent.0),
            rng.random_range(0.0..spec.extent.1),
            rng.random_range(0.0..vs),
        ]);
    }
    Ok((PointCloud::new(points), truths))
}

fn column_points(
    center: Point2,
    radius: f64,
    height: f64,
    vs: f64,
    per_voxel: usize,
    rng: &mut impl Rng,
) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    let reach = (radius / vs).ceil() as i64 + 1;
    let (gx, gy) = ((center.x / vs).floor() as i64, (center.y / vs).floor() as i64);
    let layers = (height / vs).round().max(1.0) as i64;
    for dx in -reach..=reach {
        for dy in -reach..=reach {
            let c = Point2::new((gx + dx) as f64 * vs + vs / 2.0, (gy + dy) as f64 * vs + vs / 2.0);
            if !(dx == 0 && dy == 0) && c.distance(&center) > radius {
                continue;
            }
            for layer in 0..layers {
                let z = layer as f64 * vs + vs / 2.0;
                for _ in 0..per_voxel {
                    let j = 0.45 * vs;
                    pts.push([
                        c.x + rng.random_range(-j..j),
                        c.y + rng.random_range(-j..j),
                        z + rng.random_range(-j..j),
                    ]);
                }
            }
        }
    }
    pts
}

/// A straight vertical wall of voxel-aligned points from `start` to `end`.
pub fn wall_cloud(start: Point2, end: Point2, height: f64, vs: f64, per_voxel: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = start.distance(&end);
    let steps = (len / vs).ceil().max(1.0) as usize;
    let mut pts = Vec::new();
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        let p = Point2::new(start.x + f * (end.x - start.x), start.y + f * (end.y - start.y));
        pts.extend(column_points(p, 0.0, height, vs, per_voxel, &mut rng));
    }
    PointCloud::new(pts)
}
