//! Pole maps, their CSV format, and the pairwise-distance lookup table.
//!
//! Map file layout (UTF-8, LF):
//!
//! ```text
//! id,x,y,width,class,d0,d1,...,d{D-1}
//! 0,12.5,-3.25,0.3,2,0.9,...
//! 1,40,7.125,0.2,,0.4,...
//! ```
//!
//! `class` is empty for unclassified poles. A header without `d*` columns
//! declares a map without descriptors.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{PoleError, Result};
use crate::geometry::{Point2, Pose2};

#[derive(Debug, Clone, PartialEq)]
pub struct Pole {
    pub id: u64,
    pub center: Point2,
    pub width: f64,
    pub class_id: Option<usize>,
    /// Empty when the map carries no descriptors.
    pub descriptor: Vec<f64>,
}

impl Pole {
    pub fn new(id: u64, center: Point2, width: f64) -> Self {
        Self { id, center, width, class_id: None, descriptor: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Global,
    Local,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Global => "global",
            Frame::Local => "local",
        })
    }
}

impl FromStr for Frame {
    type Err = PoleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Frame::Global),
            "local" => Ok(Frame::Local),
            other => Err(PoleError::invalid(format!("unknown frame `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleMap {
    pub frame: Frame,
    pub poles: Vec<Pole>,
}

impl PoleMap {
    pub fn empty(frame: Frame) -> Self {
        Self { frame, poles: Vec::new() }
    }

    /// Builds a map, checking id uniqueness, widths and finiteness.
    pub fn new(frame: Frame, poles: Vec<Pole>) -> Result<Self> {
        let map = Self { frame, poles };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.poles.len());
        let dim = self.descriptor_dim();
        for p in &self.poles {
            if !ids.insert(p.id) {
                return Err(PoleError::Validation(format!("duplicate pole id {}", p.id)));
            }
            if !p.center.is_finite() {
                return Err(PoleError::Validation(format!("pole {} has a non-finite center", p.id)));
            }
            if !(p.width > 0.0) || !p.width.is_finite() {
                return Err(PoleError::Validation(format!("pole {} has non-positive width {}", p.id, p.width)));
            }
            if p.descriptor.len() != dim {
                return Err(PoleError::Validation(format!(
                    "pole {} has {} descriptor entries, expected {dim}",
                    p.id,
                    p.descriptor.len()
                )));
            }
            if p.descriptor.iter().any(|v| !v.is_finite()) {
                return Err(PoleError::Validation(format!("pole {} has a non-finite descriptor", p.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.poles.first().map_or(0, |p| p.descriptor.len())
    }

    pub fn centers(&self) -> impl Iterator<Item = Point2> + '_ {
        self.poles.iter().map(|p| p.center)
    }

    pub fn is_fully_classed(&self) -> bool {
        self.poles.iter().all(|p| p.class_id.is_some())
    }

    /// Copy of this map with every center moved by `pose`.
    pub fn transformed(&self, pose: &Pose2) -> PoleMap {
        let mut out = self.clone();
        for p in &mut out.poles {
            p.center = pose.apply(p.center);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let dim = self.descriptor_dim();
        let mut out = String::from("id,x,y,width,class");
        for i in 0..dim {
            write!(out, ",d{i}").unwrap();
        }
        out.push('\n');
        for p in &self.poles {
            write!(out, "{},{},{},{},", p.id, p.center.x, p.center.y, p.width).unwrap();
            if let Some(c) = p.class_id {
                write!(out, "{c}").unwrap();
            }
            for v in &p.descriptor {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, frame: Frame, path: &Path) -> Result<PoleMap> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| PoleError::parse(path, 1, e.to_string()))?.clone();
        let expected = ["id", "x", "y", "width", "class"];
        if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(PoleError::parse(path, 1, "header must start with `id,x,y,width,class`"));
        }
        let dim = header.len() - expected.len();
        for (i, h) in header.iter().skip(expected.len()).enumerate() {
            if h != format!("d{i}") {
                return Err(PoleError::parse(
                    path,
                    1,
                    format!("descriptor column {i} must be named `d{i}`, found `{h}`"),
                ));
            }
        }

        let mut poles = Vec::new();
        let mut ids = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                PoleError::parse(path, line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != dim + expected.len() {
                return Err(PoleError::parse(
                    path,
                    line,
                    format!("expected {} fields, found {}", dim + expected.len(), record.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                let v = record[i]
                    .parse::<f64>()
                    .map_err(|e| PoleError::parse(path, line, format!("{} `{}`: {e}", &header[i], &record[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(PoleError::parse(path, line, format!("{} is not finite", &header[i])))
                }
            };
            let id = record[0]
                .parse::<u64>()
                .map_err(|e| PoleError::parse(path, line, format!("id `{}`: {e}", &record[0])))?;
            if !ids.insert(id) {
                return Err(PoleError::Validation(format!("duplicate pole id {id} at {}:{line}", path.display())));
            }
            let class_id = match &record[4] {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| PoleError::parse(path, line, format!("class `{s}`: {e}")))?),
            };
            let width = num(3)?;
            if width <= 0.0 {
                return Err(PoleError::parse(path, line, format!("width must be positive, got {width}")));
            }
            poles.push(Pole {
                id,
                center: Point2::new(num(1)?, num(2)?),
                width,
                class_id,
                descriptor: (expected.len()..record.len()).map(num).collect::<Result<_>>()?,
            });
        }
        PoleMap::new(frame, poles)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| PoleError::io(path, e))
    }

    pub fn load(path: &Path, frame: Frame) -> Result<PoleMap> {
        let text = std::fs::read_to_string(path).map_err(|e| PoleError::io(path, e))?;
        Self::from_csv(&text, frame, path)
    }
}

pub fn save_map(map: &PoleMap, path: &Path) -> Result<()> {
    map.save(path)
}

pub fn load_map(path: &Path, frame: Frame) -> Result<PoleMap> {
    PoleMap::load(path, frame)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableParams {
    pub bin_width: f64,
    pub max_distance: f64,
    /// Pairs this close or closer are left out of the table.
    pub min_pair_separation: f64,
}

impl Default for TableParams {
    fn default() -> Self {
        Self { bin_width: 0.5, max_distance: 60.0, min_pair_separation: 1.0 }
    }
}

impl TableParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(PoleError::invalid(format!("bin_width must be positive, got {}", self.bin_width)));
        }
        if !(self.max_distance > 0.0) || !self.max_distance.is_finite() {
            return Err(PoleError::invalid(format!("max_distance must be positive, got {}", self.max_distance)));
        }
        if !(self.min_pair_separation >= 0.0) {
            return Err(PoleError::invalid("min_pair_separation must be non-negative"));
        }
        Ok(())
    }
}

/// An ordered pair of global poles at a known distance. `a` and `b` index
/// into the map the table was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolePair {
    pub a: usize,
    pub b: usize,
    pub id_a: u64,
    pub id_b: u64,
    pub distance: f64,
}

/// Ordered global pole pairs binned by `floor(distance / bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub params: TableParams,
    bins: Vec<Vec<PolePair>>,
}

impl DistanceTable {
    pub fn build(map: &PoleMap, params: TableParams) -> Result<Self> {
        params.validate()?;
        if map.frame != Frame::Global {
            return Err(PoleError::invalid("distance tables are built from global maps"));
        }
        let n_bins = (params.max_distance / params.bin_width).floor() as usize + 1;
        let mut bins = vec![Vec::new(); n_bins];
        for (a, pa) in map.poles.iter().enumerate() {
            for (b, pb) in map.poles.iter().enumerate() {
                if a == b {
                    continue;
                }
                let distance = pa.center.distance(&pb.center);
                if distance <= params.min_pair_separation || distance > params.max_distance {
                    continue;
                }
                bins[Self::bin_of(distance, params.bin_width)].push(PolePair {
                    a,
                    b,
                    id_a: pa.id,
                    id_b: pb.id,
                    distance,
                });
            }
        }
        Ok(Self { params, bins })
    }

    /// Rebuilds a table from stored pairs.
    pub fn from_pairs(params: TableParams, pairs: Vec<PolePair>) -> Result<Self> {
        params.validate()?;
        let n_bins = (params.max_distance / params.bin_width).floor() as usize + 1;
        let mut bins = vec![Vec::new(); n_bins];
        for p in pairs {
            if !(p.distance > params.min_pair_separation && p.distance <= params.max_distance) {
                return Err(PoleError::Validation(format!(
                    "pair ({}, {}) at {} m is outside the table range",
                    p.id_a, p.id_b, p.distance
                )));
            }
            bins[Self::bin_of(p.distance, params.bin_width)].push(p);
        }
        Ok(Self { params, bins })
    }

    #[inline]
    fn bin_of(distance: f64, bin_width: f64) -> usize {
        (distance / bin_width).floor() as usize
    }

    pub fn len(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(Vec::is_empty)
    }

    /// Non-empty bins as `(bin index, pairs)`.
    pub fn bins(&self) -> impl Iterator<Item = (usize, &[PolePair])> {
        self.bins.iter().enumerate().filter(|(_, b)| !b.is_empty()).map(|(i, b)| (i, b.as_slice()))
    }

    /// Pairs whose distance lies in `[d - tol, d + tol]`, in bin order.
    pub fn query_pairs(&self, d: f64, tol: f64) -> Vec<PolePair> {
        let mut out = Vec::new();
        self.for_each_pair(d, tol, |p| out.push(*p));
        out
    }

    pub(crate) fn for_each_pair(&self, d: f64, tol: f64, mut f: impl FnMut(&PolePair)) {
        let lo = d - tol;
        let hi = d + tol;
        if self.bins.is_empty() || hi < 0.0 || !(lo <= hi) {
            return;
        }
        let first = Self::bin_of(lo.max(0.0), self.params.bin_width);
        let last = Self::bin_of(hi, self.params.bin_width).min(self.bins.len() - 1);
        for bin in self.bins.iter().take(last + 1).skip(first) {
            for p in bin {
                if p.distance >= lo && p.distance <= hi {
                    f(p);
                }
            }
        }
    }

    /// CSV dump: a `bin_width,max_distance,min_pair_separation` row, then a
    /// `bin,id_a,id_b,a,b,distance` header and one row per stored pair.
    pub fn to_csv(&self) -> String {
        let p = &self.params;
        let mut out =
            format!("{},{},{}\nbin,id_a,id_b,a,b,distance\n", p.bin_width, p.max_distance, p.min_pair_separation);
        for (i, bin) in self.bins() {
            for q in bin {
                writeln!(out, "{i},{},{},{},{},{}", q.id_a, q.id_b, q.a, q.b, q.distance).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| PoleError::parse(path, 1, "empty table file"))?;
        let head: Vec<f64> = first
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| PoleError::parse(path, 1, e.to_string())))
            .collect::<Result<_>>()?;
        if head.len() != 3 {
            return Err(PoleError::parse(path, 1, "expected `bin_width,max_distance,min_pair_separation`"));
        }
        let params = TableParams { bin_width: head[0], max_distance: head[1], min_pair_separation: head[2] };
        match lines.next() {
            Some((_, h)) if h.trim() == "bin,id_a,id_b,a,b,distance" => {}
            _ => return Err(PoleError::parse(path, 2, "expected `bin,id_a,id_b,a,b,distance` header")),
        }
        let mut pairs = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let err = |m: String| PoleError::parse(path, ln + 1, m);
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("`{s}`: {e}")));
            let distance = f[5].parse::<f64>().map_err(|e| err(format!("`{}`: {e}", f[5])))?;
            pairs.push(PolePair {
                id_a: int(f[1])?,
                id_b: int(f[2])?,
                a: int(f[3])? as usize,
                b: int(f[4])? as usize,
                distance,
            });
        }
        Self::from_pairs(params, pairs)
    }
}

/// Free-function form of [`DistanceTable::build`] with default separation.
pub fn build_distance_table(map: &PoleMap, bin_width: f64, max_distance: f64) -> Result<DistanceTable> {
    DistanceTable::build(map, TableParams { bin_width, max_distance, ..TableParams::default() })
}

pub fn query_pairs(table: &DistanceTable, d: f64, tol: f64) -> Vec<PolePair> {
    table.query_pairs(d, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangle() -> PoleMap {
        PoleMap::new(
            Frame::Global,
            vec![
                Pole::new(0, Point2::new(0.0, 0.0), 0.3),
                Pole::new(1, Point2::new(3.0, 0.0), 0.3),
                Pole::new(2, Point2::new(0.0, 4.0), 0.3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn empty_map_empty_table() {
        let t = build_distance_table(&PoleMap::empty(Frame::Global), 0.5, 100.0).unwrap();
        assert!(t.is_empty());
        assert!(t.query_pairs(3.0, 10.0).is_empty());
    }

    #[test]
    fn right_triangle_bins() {
        let t = build_distance_table(&triangle(), 0.5, 100.0).unwrap();
        assert_eq!(t.len(), 6);
        let bins: Vec<(usize, usize)> = t.bins().map(|(i, b)| (i, b.len())).collect();
        assert_eq!(bins, vec![(6, 2), (8, 2), (10, 2)]);
        let mut five: Vec<(u64, u64)> = t.query_pairs(5.0, 0.0).iter().map(|p| (p.id_a, p.id_b)).collect();
        five.sort();
        assert_eq!(five, vec![(1, 2), (2, 1)]);
        assert!(t.query_pairs(100.0, 0.1).is_empty());
    }

    #[test]
    fn near_coincident_pairs_excluded() {
        let map = PoleMap::new(
            Frame::Global,
            vec![Pole::new(0, Point2::new(0.0, 0.0), 0.1), Pole::new(1, Point2::new(0.05, 0.0), 0.1)],
        )
        .unwrap();
        let params = TableParams { min_pair_separation: 0.5, ..TableParams::default() };
        assert!(DistanceTable::build(&map, params).unwrap().is_empty());
    }

    #[test]
    fn local_maps_cannot_build_tables() {
        let mut m = triangle();
        m.frame = Frame::Local;
        assert!(DistanceTable::build(&m, TableParams::default()).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let t = build_distance_table(&triangle(), 0.5, 100.0).unwrap();
        let back = DistanceTable::from_csv(&t.to_csv(), Path::new("t.csv")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn map_csv_round_trip_and_empty_class() {
        let mut m = triangle();
        m.poles[0].class_id = Some(3);
        for (i, p) in m.poles.iter_mut().enumerate() {
            p.descriptor = vec![0.1 * i as f64, 1.0 / 3.0, -2.5e-7];
        }
        let text = m.to_csv();
        assert!(text.starts_with("id,x,y,width,class,d0,d1,d2\n"));
        let back = PoleMap::from_csv(&text, Frame::Global, Path::new("m.csv")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.poles[1].class_id, None);
    }

    #[test]
    fn duplicate_id_named() {
        let text = "id,x,y,width,class\n4,0,0,0.2,\n4,1,1,0.2,\n";
        let err = PoleMap::from_csv(text, Frame::Global, Path::new("m.csv")).unwrap_err();
        assert!(matches!(err, PoleError::Validation(_)));
        assert!(err.to_string().contains("duplicate pole id 4"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "id,x,y,width,class\n0,0,0,0.2,\n1,abc,0,0.2,\n";
        match PoleMap::from_csv(text, Frame::Global, Path::new("m.csv")).unwrap_err() {
            PoleError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "id,x,y,width,class\n0,0,0\n";
        assert!(PoleMap::from_csv(short, Frame::Global, Path::new("m.csv")).is_err());
    }

    fn random_map() -> impl Strategy<Value = PoleMap> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..25).prop_map(|pts| PoleMap {
            frame: Frame::Global,
            poles: pts.into_iter().enumerate().map(|(i, (x, y))| Pole::new(i as u64, Point2::new(x, y), 0.2)).collect(),
        })
    }

    proptest! {
        #[test]
        fn wider_tolerance_returns_superset(map in random_map(), d in 0.0..80.0f64, t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
            let table = DistanceTable::build(&map, TableParams::default()).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let wide = table.query_pairs(d, hi);
            for p in table.query_pairs(d, lo) {
                prop_assert!(wide.contains(&p));
            }
            for p in &wide {
                prop_assert!(p.distance >= d - hi && p.distance <= d + hi);
            }
        }

        #[test]
        fn map_csv_round_trip(map in random_map()) {
            let back = PoleMap::from_csv(&map.to_csv(), Frame::Global, Path::new("m.csv")).unwrap();
            prop_assert_eq!(back, map);
        }
    }
}
