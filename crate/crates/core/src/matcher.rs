//! RANSAC pole map matching.
//!
//! Every ordered pair of selected local poles is looked up in the global
//! distance table. Each global pair at a compatible distance yields one
//! rigid-transform hypothesis, which is scored by counting local poles that
//! land near a global pole. The highest score wins; ties go to the earliest
//! generated hypothesis.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PoleError, Result};
use crate::geometry::{Point2, Pose2};
use crate::polemap::{DistanceTable, PoleMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoringMode {
    /// +1 per local pole with a global pole within the inlier radius.
    Baseline,
    /// Baseline, plus +1 when the matched global pole has the same class.
    ClassGated,
    /// +1 per local pole that has a positional match *or* whose class
    /// occurs anywhere in the global map. Kept for ablation.
    ClassLiteral,
}

impl ScoringMode {
    pub const ALL: [ScoringMode; 3] = [ScoringMode::Baseline, ScoringMode::ClassGated, ScoringMode::ClassLiteral];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoringMode::Baseline => "baseline",
            ScoringMode::ClassGated => "class_gated",
            ScoringMode::ClassLiteral => "class_literal",
        }
    }

    pub fn uses_classes(&self) -> bool {
        !matches!(self, ScoringMode::Baseline)
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringMode {
    type Err = PoleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ScoringMode::Baseline),
            "class_gated" => Ok(ScoringMode::ClassGated),
            "class_literal" => Ok(ScoringMode::ClassLiteral),
            other => Err(PoleError::invalid(format!(
                "unknown mode `{other}` (expected baseline, class_gated or class_literal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacParams {
    /// Upper bound on local poles used to form pairs.
    pub n_input_poles: usize,
    pub inlier_radius: f64,
    /// Allowed mismatch between local and global pair lengths.
    pub distance_tol: f64,
    pub max_hypotheses: usize,
    pub seed: u64,
    pub mode: ScoringMode,
    /// Local pairs at or below this length are not used.
    pub min_pair_separation: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            n_input_poles: 20,
            inlier_radius: 1.0,
            distance_tol: 0.5,
            max_hypotheses: 50_000,
            seed: 0,
            mode: ScoringMode::ClassGated,
            min_pair_separation: 1.0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_input_poles < 2 {
            return Err(PoleError::invalid("n_input_poles must be at least 2"));
        }
        if !(self.inlier_radius > 0.0) || !self.inlier_radius.is_finite() {
            return Err(PoleError::invalid(format!("inlier_radius must be positive, got {}", self.inlier_radius)));
        }
        if !(self.distance_tol >= 0.0) || !self.distance_tol.is_finite() {
            return Err(PoleError::invalid("distance_tol must be non-negative"));
        }
        if self.max_hypotheses == 0 {
            return Err(PoleError::invalid("max_hypotheses must be at least 1"));
        }
        if !(self.min_pair_separation >= 0.0) {
            return Err(PoleError::invalid("min_pair_separation must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub pose: Pose2,
    pub score: u32,
    /// Ids of the local pair the pose was derived from.
    pub local_pair: (u64, u64),
    /// Ids of the global pair it was matched to.
    pub global_pair: (u64, u64),
    /// Position in generation order.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub best: Hypothesis,
    /// `(local id, global id)` positional matches under the best pose.
    pub inlier_pairs: Vec<(u64, u64)>,
    pub hypotheses_evaluated: usize,
}

/// The rigid transform that maps `local_a` onto `global_a` and turns the
/// direction `local_a → local_b` onto `global_a → global_b`.
pub fn estimate_transform(
    local_a: Point2,
    local_b: Point2,
    global_a: Point2,
    global_b: Point2,
    min_pair_separation: f64,
) -> Result<Pose2> {
    let local_dir = local_b - local_a;
    let len = local_dir.norm();
    if !(len > min_pair_separation) || !(len.is_finite()) {
        return Err(PoleError::DegenerateGeometry(format!(
            "local pair length {len} is not above {min_pair_separation}"
        )));
    }
    let theta = (global_b - global_a).angle() - local_dir.angle();
    let rot = Pose2::new(0.0, 0.0, theta);
    let t = global_a - rot.apply(local_a);
    Ok(Pose2::new(t.x, t.y, theta))
}

/// Finds global poles within a radius of a query point.
pub trait NeighborSearch: Sync {
    /// Appends `(global index, squared distance)` for every global pole with
    /// squared distance `<= radius_sq` from `p`.
    fn within(&self, p: Point2, radius_sq: f64, out: &mut Vec<(usize, f64)>);
}

/// Checks every global pole.
pub struct LinearScan {
    points: Vec<Point2>,
}

impl LinearScan {
    pub fn new(global: &PoleMap) -> Self {
        Self { points: global.centers().collect() }
    }
}

impl NeighborSearch for LinearScan {
    fn within(&self, p: Point2, radius_sq: f64, out: &mut Vec<(usize, f64)>) {
        for (i, q) in self.points.iter().enumerate() {
            let d = q.distance_sq(&p);
            if d <= radius_sq {
                out.push((i, d));
            }
        }
    }
}

/// Uniform cell grid over the global map. Cells are at least as wide as the
/// search radius, so the 3×3 block around the query cell holds every
/// candidate.
pub struct UniformGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: poles of cell `c` are `entries[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    entries: Vec<(u32, Point2)>,
}

impl UniformGrid {
    const MAX_CELLS_PER_AXIS: f64 = 2048.0;

    pub fn new(global: &PoleMap, radius: f64) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for c in global.centers() {
            lo = Point2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Point2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        if global.is_empty() {
            lo = Point2::ORIGIN;
            hi = Point2::ORIGIN;
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = radius.max(span / Self::MAX_CELLS_PER_AXIS).max(1e-9);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let cell_of = |p: Point2| {
            let ix = (((p.x - lo.x) / cell).floor() as usize).min(nx - 1);
            let iy = (((p.y - lo.y) / cell).floor() as usize).min(ny - 1);
            ix * ny + iy
        };
        let mut counts = vec![0u32; nx * ny + 1];
        for c in global.centers() {
            counts[cell_of(c) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![(0u32, Point2::ORIGIN); global.len()];
        for (i, c) in global.centers().enumerate() {
            let slot = &mut fill[cell_of(c)];
            entries[*slot as usize] = (i as u32, c);
            *slot += 1;
        }
        Self { origin: lo, cell, nx, ny, starts, entries }
    }
}

impl NeighborSearch for UniformGrid {
    fn within(&self, p: Point2, radius_sq: f64, out: &mut Vec<(usize, f64)>) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        if !(fx >= -1.0 && fy >= -1.0 && fx <= self.nx as f64 && fy <= self.ny as f64) {
            return;
        }
        let (cx, cy) = (fx as i64, fy as i64);
        for ix in (cx - 1).max(0)..=(cx + 1).min(self.nx as i64 - 1) {
            for iy in (cy - 1).max(0)..=(cy + 1).min(self.ny as i64 - 1) {
                let c = ix as usize * self.ny + iy as usize;
                for &(i, q) in &self.entries[self.starts[c] as usize..self.starts[c + 1] as usize] {
                    let d = q.distance_sq(&p);
                    if d <= radius_sq {
                        out.push((i as usize, d));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreOutcome {
    pub score: u32,
    /// `(local index, global index)` positional matches.
    pub inliers: Vec<(usize, usize)>,
}

/// Scores poses of one local map against one global map.
pub struct Scorer<'a, S: NeighborSearch> {
    local: &'a PoleMap,
    global: &'a PoleMap,
    search: S,
    mode: ScoringMode,
    radius_sq: f64,
    global_classes: HashSet<usize>,
}

#[derive(Default)]
pub struct ScratchSpace {
    found: Vec<(usize, f64)>,
    candidates: Vec<(f64, usize, usize)>,
    local_taken: Vec<bool>,
    global_taken: Vec<bool>,
}

fn check_classes(local: &PoleMap, global: &PoleMap, mode: ScoringMode) -> Result<()> {
    if mode.uses_classes() {
        for (name, map) in [("local", local), ("global", global)] {
            if let Some(p) = map.poles.iter().find(|p| p.class_id.is_none()) {
                return Err(PoleError::invalid(format!(
                    "{mode} scoring needs classes, but {name} pole {} has none",
                    p.id
                )));
            }
        }
    }
    Ok(())
}

impl<'a> Scorer<'a, UniformGrid> {
    pub fn with_grid(local: &'a PoleMap, global: &'a PoleMap, params: &RansacParams) -> Result<Self> {
        Scorer::new(local, global, params, UniformGrid::new(global, params.inlier_radius))
    }
}

impl<'a> Scorer<'a, LinearScan> {
    pub fn with_linear_scan(local: &'a PoleMap, global: &'a PoleMap, params: &RansacParams) -> Result<Self> {
        Scorer::new(local, global, params, LinearScan::new(global))
    }
}

impl<'a, S: NeighborSearch> Scorer<'a, S> {
    pub fn new(local: &'a PoleMap, global: &'a PoleMap, params: &RansacParams, search: S) -> Result<Self> {
        params.validate()?;
        check_classes(local, global, params.mode)?;
        Ok(Self {
            local,
            global,
            search,
            mode: params.mode,
            radius_sq: params.inlier_radius * params.inlier_radius,
            global_classes: global.poles.iter().filter_map(|p| p.class_id).collect(),
        })
    }

    pub fn score(&self, pose: &Pose2, scratch: &mut ScratchSpace) -> u32 {
        self.matches(pose, scratch);
        self.tally(self.mode, scratch)
    }

    pub fn score_with_inliers(&self, pose: &Pose2) -> ScoreOutcome {
        self.score_with_inliers_as(pose, self.mode)
    }

    fn score_with_inliers_as(&self, pose: &Pose2, mode: ScoringMode) -> ScoreOutcome {
        let mut scratch = ScratchSpace::default();
        self.matches(pose, &mut scratch);
        let score = self.tally(mode, &scratch);
        let mut inliers: Vec<(usize, usize)> = scratch.candidates.iter().map(|&(_, l, g)| (l, g)).collect();
        inliers.sort_unstable();
        ScoreOutcome { score, inliers }
    }

    /// Greedy one-to-one matching by ascending distance; leaves the accepted
    /// matches in `scratch.candidates`.
    fn matches(&self, pose: &Pose2, scratch: &mut ScratchSpace) {
        let ScratchSpace { found, candidates, local_taken, global_taken } = scratch;
        candidates.clear();
        let (sin, cos) = pose.theta.sin_cos();
        for (li, p) in self.local.poles.iter().enumerate() {
            found.clear();
            let c = p.center;
            let q = Point2::new(cos * c.x - sin * c.y + pose.tx, sin * c.x + cos * c.y + pose.ty);
            self.search.within(q, self.radius_sq, found);
            candidates.extend(found.iter().map(|&(gi, d)| (d, li, gi)));
        }
        if candidates.len() <= 1 {
            return;
        }
        candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        local_taken.clear();
        local_taken.resize(self.local.len(), false);
        global_taken.clear();
        global_taken.resize(self.global.len(), false);
        candidates.retain(|&(_, li, gi)| {
            if local_taken[li] || global_taken[gi] {
                false
            } else {
                local_taken[li] = true;
                global_taken[gi] = true;
                true
            }
        });
    }

    fn tally(&self, mode: ScoringMode, scratch: &ScratchSpace) -> u32 {
        let matched = &scratch.candidates;
        let class_of_local = |li: usize| self.local.poles[li].class_id;
        let class_of_global = |gi: usize| self.global.poles[gi].class_id;
        match mode {
            ScoringMode::Baseline => matched.len() as u32,
            ScoringMode::ClassGated => {
                let agree = matched.iter().filter(|&&(_, li, gi)| class_of_local(li) == class_of_global(gi)).count();
                (matched.len() + agree) as u32
            }
            ScoringMode::ClassLiteral => {
                let mut hit = vec![false; self.local.len()];
                for &(_, li, _) in matched {
                    hit[li] = true;
                }
                hit.iter()
                    .enumerate()
                    .filter(|&(li, &h)| h || class_of_local(li).is_some_and(|c| self.global_classes.contains(&c)))
                    .count() as u32
            }
        }
    }
}

/// Scores one pose from scratch.
pub fn score_hypothesis(
    pose: &Pose2,
    local: &PoleMap,
    global: &PoleMap,
    params: &RansacParams,
) -> Result<ScoreOutcome> {
    Ok(Scorer::with_grid(local, global, params)?.score_with_inliers(pose))
}

/// A hypothesis before scoring.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub pose: Pose2,
    pub local: (usize, usize),
    pub global: (usize, usize),
}

/// Scores every candidate and returns the best one as a [`MatchResult`].
pub(crate) fn select_best<S: NeighborSearch>(scorer: &Scorer<'_, S>, candidates: &[Candidate]) -> MatchResult {
    select_best_per_mode(scorer, &[scorer.mode], candidates).remove(0)
}

/// Like [`select_best`] for several modes at once. Matching is mode
/// independent, so it runs once per candidate and only the tally differs.
pub(crate) fn select_best_per_mode<S: NeighborSearch>(
    scorer: &Scorer<'_, S>,
    modes: &[ScoringMode],
    candidates: &[Candidate],
) -> Vec<MatchResult> {
    // (score, index) per mode; higher score wins, then lower index
    let better = |a: (u32, usize), b: (u32, usize)| b.0 > a.0 || (b.0 == a.0 && b.1 < a.1);
    let best = candidates
        .par_iter()
        .enumerate()
        .fold(
            || (ScratchSpace::default(), vec![(0u32, usize::MAX); modes.len()]),
            |(mut scratch, mut best), (i, c)| {
                scorer.matches(&c.pose, &mut scratch);
                for (slot, &mode) in best.iter_mut().zip(modes) {
                    let s = (scorer.tally(mode, &scratch), i);
                    if better(*slot, s) {
                        *slot = s;
                    }
                }
                (scratch, best)
            },
        )
        .map(|(_, best)| best)
        .reduce(
            || vec![(0u32, usize::MAX); modes.len()],
            |a, b| a.into_iter().zip(b).map(|(x, y)| if better(x, y) { y } else { x }).collect(),
        );

    let local = scorer.local;
    let global = scorer.global;
    best.into_iter()
        .zip(modes)
        .map(|((score, index), &mode)| {
            let c = &candidates[index];
            let outcome = scorer.score_with_inliers_as(&c.pose, mode);
            debug_assert_eq!(outcome.score, score);
            MatchResult {
                best: Hypothesis {
                    pose: c.pose,
                    score,
                    local_pair: (local.poles[c.local.0].id, local.poles[c.local.1].id),
                    global_pair: (global.poles[c.global.0].id, global.poles[c.global.1].id),
                    index,
                },
                inlier_pairs: outcome.inliers.iter().map(|&(l, g)| (local.poles[l].id, global.poles[g].id)).collect(),
                hypotheses_evaluated: candidates.len(),
            }
        })
        .collect()
}

/// Indices of the local poles used to form pairs, ascending.
pub(crate) fn select_input_poles(local: &PoleMap, params: &RansacParams) -> Vec<usize> {
    if local.len() <= params.n_input_poles {
        (0..local.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut picked = rand::seq::index::sample(&mut rng, local.len(), params.n_input_poles).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// Generates, scores and selects hypotheses for `local` against `global`.
pub fn ransac_localize(
    local: &PoleMap,
    global: &PoleMap,
    table: &DistanceTable,
    params: &RansacParams,
) -> Result<MatchResult> {
    Ok(ransac_localize_modes(local, global, table, params, &[params.mode])?.remove(0))
}

/// Runs [`ransac_localize`] once per mode over a single shared hypothesis
/// set. `params.mode` is ignored. Each result equals what
/// [`ransac_localize`] returns for that mode.
pub fn ransac_localize_modes(
    local: &PoleMap,
    global: &PoleMap,
    table: &DistanceTable,
    params: &RansacParams,
    modes: &[ScoringMode],
) -> Result<Vec<MatchResult>> {
    params.validate()?;
    for &mode in modes {
        check_classes(local, global, mode)?;
    }
    if global.is_empty() {
        return Err(PoleError::NoHypothesis("global map is empty".into()));
    }
    let candidates = generate_candidates(local, global, table, params)?;
    let scorer = Scorer::with_grid(local, global, &RansacParams { mode: ScoringMode::Baseline, ..params.clone() })?;
    Ok(select_best_per_mode(&scorer, modes, &candidates))
}

fn generate_candidates(
    local: &PoleMap,
    global: &PoleMap,
    table: &DistanceTable,
    params: &RansacParams,
) -> Result<Vec<Candidate>> {
    let selected = select_input_poles(local, params);
    let mut candidates = Vec::new();
    let mut valid_pair = false;
    let mut pairs = Vec::new();
    'outer: for &i in &selected {
        for &j in &selected {
            if i == j {
                continue;
            }
            let (la, lb) = (local.poles[i].center, local.poles[j].center);
            let d = la.distance(&lb);
            if !(d > params.min_pair_separation) {
                continue;
            }
            valid_pair = true;
            pairs.clear();
            table.for_each_pair(d, params.distance_tol, |p| pairs.push((p.a, p.b)));
            pairs.sort_unstable();
            for &(a, b) in &pairs {
                if candidates.len() == params.max_hypotheses {
                    break 'outer;
                }
                let (ga, gb) = (global.poles[a].center, global.poles[b].center);
                let pose = estimate_transform(la, lb, ga, gb, params.min_pair_separation)?;
                candidates.push(Candidate { pose, local: (i, j), global: (a, b) });
            }
        }
    }
    if !valid_pair {
        return Err(PoleError::NoHypothesis(format!(
            "no local pole pair is longer than {} m",
            params.min_pair_separation
        )));
    }
    if candidates.is_empty() {
        return Err(PoleError::NoHypothesis("no global pair matches any local pair distance".into()));
    }
    Ok(candidates)
}
