//! Reflection-count occupancy grids and pole detection.
//!
//! Points are binned into a voxel grid of per-voxel reflection counts.
//! Voxels inside the ground band are ignored. The remaining non-empty voxels
//! are grouped into 26-connected objects. An object becomes a pole when
//!
//! * its voxels with `count >= count_threshold` contain a vertically
//!   contiguous run of layers at least `min_height` tall,
//! * its ground-plane footprint fits in a circle of diameter `max_width`,
//! * no non-empty column outside the footprint lies within
//!   `isolation_radius` of it.
//!
//! Footprint and isolation are measured on every non-empty voxel, so only the
//! height test depends on `count_threshold`. Raising the threshold can
//! therefore only remove detections.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{PoleError, Result};
use crate::geometry::Point2;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, offset: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]]).collect(),
        }
    }
}

/// Axis-aligned half-open box `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Bounds { min, max };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            let extent = self.max[axis] - self.min[axis];
            if !(extent > 0.0) || !extent.is_finite() {
                return Err(PoleError::invalid(format!(
                    "degenerate bounds on axis {axis}: [{}, {})",
                    self.min[axis], self.max[axis]
                )));
            }
        }
        Ok(())
    }

    /// Bounding box of `cloud` grown by `margin` on every side, or `None`
    /// for an empty cloud.
    pub fn around(cloud: &PointCloud, margin: f64) -> Option<Bounds> {
        let first = cloud.points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in &cloud.points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        for a in 0..3 {
            min[a] -= margin;
            max[a] += margin;
        }
        Some(Bounds { min, max })
    }

    pub fn translated(&self, offset: [f64; 3]) -> Bounds {
        Bounds {
            min: [self.min[0] + offset[0], self.min[1] + offset[1], self.min[2] + offset[2]],
            max: [self.max[0] + offset[0], self.max[1] + offset[1], self.max[2] + offset[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionParams {
    pub voxel_size: f64,
    /// Minimum reflection count for a voxel to count as pole evidence.
    pub count_threshold: u32,
    pub min_height: f64,
    pub max_width: f64,
    pub isolation_radius: f64,
    /// Number of vertical slices in the descriptor.
    pub slice_count: usize,
    /// Layers lying entirely within this height above the grid floor are
    /// treated as ground and ignored.
    pub ground_clearance: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            count_threshold: 2,
            min_height: 1.5,
            max_width: 0.8,
            isolation_radius: 1.6,
            slice_count: 10,
            ground_clearance: 0.3,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [("voxel_size", self.voxel_size), ("min_height", self.min_height), ("max_width", self.max_width)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PoleError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.isolation_radius >= self.max_width) {
            return Err(PoleError::invalid(format!(
                "isolation_radius ({}) must be at least max_width ({})",
                self.isolation_radius, self.max_width
            )));
        }
        if self.slice_count == 0 {
            return Err(PoleError::invalid("slice_count must be at least 1"));
        }
        if !(self.ground_clearance >= 0.0) {
            return Err(PoleError::invalid("ground_clearance must be non-negative"));
        }
        Ok(())
    }

    pub fn descriptor_len(&self) -> usize {
        2 * self.slice_count + 2
    }
}

/// Voxel grid of laser reflection counts.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
    /// Column-major in z: index = `(ix * ny + iy) * nz + iz`.
    pub counts: Vec<u32>,
}

impl OccupancyGrid {
    pub fn empty(bounds: &Bounds, voxel_size: f64) -> Result<Self> {
        bounds.validate()?;
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(PoleError::invalid(format!("voxel_size must be positive, got {voxel_size}")));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let cells = ((bounds.max[a] - bounds.min[a]) / voxel_size - EPS).ceil().max(1.0);
            if cells > 1e9 {
                return Err(PoleError::Capacity(format!("grid axis {a} needs {cells} voxels")));
            }
            dims[a] = cells as usize;
        }
        let total = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&v| v <= 1 << 31)
            .ok_or_else(|| PoleError::Capacity(format!("grid of {dims:?} voxels is too large")))?;
        Ok(Self { origin: bounds.min, voxel_size, dims, counts: vec![0; total] })
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    #[inline]
    pub fn count(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        self.counts[self.index(ix, iy, iz)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Voxel index of `p`, or `None` if it falls outside the grid.
    pub fn voxel_of(&self, p: &[f64; 3]) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if !(f >= 0.0) || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin[0] + (ix as f64 + 0.5) * self.voxel_size,
            self.origin[1] + (iy as f64 + 0.5) * self.voxel_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBuild {
    pub grid: OccupancyGrid,
    /// Points that fell outside the bounds.
    pub dropped: usize,
}

/// Bins `cloud` into a reflection-count grid over `bounds`.
pub fn build_grid(cloud: &PointCloud, params: &ExtractionParams, bounds: &Bounds) -> Result<GridBuild> {
    let mut grid = OccupancyGrid::empty(bounds, params.voxel_size)?;
    let mut dropped = 0;
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(PoleError::invalid(format!("point {i} has a non-finite coordinate")));
        }
        let inside = (0..3).all(|a| p[a] >= bounds.min[a] && p[a] < bounds.max[a]);
        match grid.voxel_of(p).filter(|_| inside) {
            Some([ix, iy, iz]) => {
                let k = grid.index(ix, iy, iz);
                grid.counts[k] = grid.counts[k].saturating_add(1);
            }
            None => dropped += 1,
        }
    }
    Ok(GridBuild { grid, dropped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleDetection {
    pub center: Point2,
    pub width: f64,
    /// Height of the contiguous stack of above-threshold layers.
    pub height: f64,
    pub descriptor: Vec<f64>,
}

/// The above-threshold voxels of one detected object, restricted to its
/// tallest contiguous run of layers.
#[derive(Debug, Clone)]
pub struct Stack {
    /// `(ix, iy, iz)` triples.
    pub voxels: Vec<[usize; 3]>,
    pub z_lo: usize,
    pub z_hi: usize,
    /// Footprint diameter of the whole object, in meters.
    pub width: f64,
}

impl Stack {
    pub fn height(&self, voxel_size: f64) -> f64 {
        (self.z_hi - self.z_lo + 1) as f64 * voxel_size
    }
}

fn ground_layers(params: &ExtractionParams) -> usize {
    ((params.ground_clearance + EPS) / params.voxel_size).floor() as usize
}

/// Detects poles in `grid`. Results are sorted by `(x, y)` of the center.
pub fn detect_poles(grid: &OccupancyGrid, params: &ExtractionParams) -> Result<Vec<PoleDetection>> {
    params.validate()?;
    if (grid.voxel_size - params.voxel_size).abs() > EPS * params.voxel_size.max(1.0) {
        return Err(PoleError::invalid(format!(
            "grid voxel size {} differs from params voxel size {}",
            grid.voxel_size, params.voxel_size
        )));
    }
    let [nx, ny, nz] = grid.dims;
    let z0 = ground_layers(params);
    let active = |ix: usize, iy: usize, iz: usize| iz >= z0 && grid.count(ix, iy, iz) > 0;

    let mut column_active = vec![false; nx * ny];
    for ix in 0..nx {
        for iy in 0..ny {
            column_active[ix * ny + iy] = (z0..nz).any(|iz| active(ix, iy, iz));
        }
    }

    const UNSEEN: u32 = u32::MAX;
    let mut label = vec![UNSEEN; grid.counts.len()];
    let mut next_label = 0u32;
    let mut detections = Vec::new();
    let mut queue = VecDeque::new();

    for ix in 0..nx {
        for iy in 0..ny {
            if !column_active[ix * ny + iy] {
                continue;
            }
            for iz in z0..nz {
                if !active(ix, iy, iz) || label[grid.index(ix, iy, iz)] != UNSEEN {
                    continue;
                }
                let id = next_label;
                next_label += 1;
                let mut object = Vec::new();
                label[grid.index(ix, iy, iz)] = id;
                queue.push_back([ix, iy, iz]);
                while let Some(v) = queue.pop_front() {
                    object.push(v);
                    for n in neighbors26(v, grid.dims) {
                        let k = grid.index(n[0], n[1], n[2]);
                        if label[k] == UNSEEN && active(n[0], n[1], n[2]) {
                            label[k] = id;
                            queue.push_back(n);
                        }
                    }
                }
                if let Some(stack) = qualify_object(grid, params, &object, &column_active) {
                    let descriptor = compute_descriptor(&stack, grid, params);
                    detections.push(PoleDetection {
                        center: weighted_center(grid, &stack.voxels),
                        width: stack.width,
                        height: stack.height(grid.voxel_size),
                        descriptor,
                    });
                }
            }
        }
    }

    detections.sort_by(|a, b| a.center.x.total_cmp(&b.center.x).then(a.center.y.total_cmp(&b.center.y)));
    Ok(detections)
}

fn neighbors26(v: [usize; 3], dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    let lo = |c: usize| c.saturating_sub(1);
    let hi = |c: usize, n: usize| (c + 1).min(n - 1);
    let (x0, x1) = (lo(v[0]), hi(v[0], dims[0]));
    let (y0, y1) = (lo(v[1]), hi(v[1], dims[1]));
    let (z0, z1) = (lo(v[2]), hi(v[2], dims[2]));
    (x0..=x1).flat_map(move |x| (y0..=y1).flat_map(move |y| (z0..=z1).map(move |z| [x, y, z]))).filter(move |n| *n != v)
}

fn qualify_object(
    grid: &OccupancyGrid,
    params: &ExtractionParams,
    object: &[[usize; 3]],
    column_active: &[bool],
) -> Option<Stack> {
    let vs = grid.voxel_size;
    let ny = grid.dims[1];

    // Tallest contiguous run of above-threshold layers.
    let layers: BTreeSet<usize> =
        object.iter().filter(|v| grid.count(v[0], v[1], v[2]) >= params.count_threshold).map(|v| v[2]).collect();
    let (z_lo, z_hi) = longest_run(&layers)?;
    if ((z_hi - z_lo + 1) as f64) * vs < params.min_height - EPS {
        return None;
    }

    let footprint: BTreeSet<(usize, usize)> = object.iter().map(|v| (v[0], v[1])).collect();
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (usize::MAX, 0, usize::MAX, 0);
    for &(x, y) in &footprint {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    // The enclosing circle is at least as wide as the bounding box.
    let box_span = ((x_max - x_min).max(y_max - y_min) + 1) as f64 * vs;
    if box_span > params.max_width + EPS {
        return None;
    }
    let centers: Vec<Point2> = footprint.iter().map(|&(x, y)| grid.cell_center(x, y)).collect();
    let width = 2.0 * enclosing_circle(&centers).1 + vs;
    if width > params.max_width + EPS {
        return None;
    }

    let reach = (params.isolation_radius / vs).ceil() as usize + 1;
    let wx0 = x_min.saturating_sub(reach);
    let wx1 = (x_max + reach).min(grid.dims[0] - 1);
    let wy0 = y_min.saturating_sub(reach);
    let wy1 = (y_max + reach).min(ny - 1);
    let limit_sq = (params.isolation_radius + EPS).powi(2);
    for cx in wx0..=wx1 {
        for cy in wy0..=wy1 {
            if !column_active[cx * ny + cy] || footprint.contains(&(cx, cy)) {
                continue;
            }
            let c = grid.cell_center(cx, cy);
            if centers.iter().any(|f| f.distance_sq(&c) <= limit_sq) {
                return None;
            }
        }
    }

    let voxels = object
        .iter()
        .filter(|v| v[2] >= z_lo && v[2] <= z_hi && grid.count(v[0], v[1], v[2]) >= params.count_threshold)
        .copied()
        .collect();
    Some(Stack { voxels, z_lo, z_hi, width })
}

/// First longest run of consecutive integers in `layers`.
fn longest_run(layers: &BTreeSet<usize>) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut current: Option<(usize, usize)> = None;
    for &z in layers {
        current = match current {
            Some((lo, hi)) if z == hi + 1 => Some((lo, z)),
            _ => Some((z, z)),
        };
        let (lo, hi) = current.unwrap();
        if best.is_none_or(|(blo, bhi)| hi - lo > bhi - blo) {
            best = Some((lo, hi));
        }
    }
    best
}

fn weighted_center(grid: &OccupancyGrid, voxels: &[[usize; 3]]) -> Point2 {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for v in voxels {
        let w = f64::from(grid.count(v[0], v[1], v[2]));
        let c = grid.cell_center(v[0], v[1]);
        sx += w * c.x;
        sy += w * c.y;
        sw += w;
    }
    Point2::new(sx / sw, sy / sw)
}

/// Minimal enclosing circle (center, radius) by Welzl's incremental method.
pub(crate) fn enclosing_circle(points: &[Point2]) -> (Point2, f64) {
    fn contains(c: &(Point2, f64), p: &Point2) -> bool {
        c.0.distance(p) <= c.1 + 1e-12
    }
    fn from_two(a: Point2, b: Point2) -> (Point2, f64) {
        let c = Point2::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        (c, c.distance(&a))
    }
    fn from_three(a: Point2, b: Point2, c: Point2) -> (Point2, f64) {
        let (bx, by) = (b.x - a.x, b.y - a.y);
        let (cx, cy) = (c.x - a.x, c.y - a.y);
        let d = 2.0 * (bx * cy - by * cx);
        if d.abs() < 1e-15 {
            // collinear: widest pair
            let candidates = [from_two(a, b), from_two(a, c), from_two(b, c)];
            return candidates.into_iter().max_by(|p, q| p.1.total_cmp(&q.1)).unwrap();
        }
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        let ux = (cy * b2 - by * c2) / d;
        let uy = (bx * c2 - cx * b2) / d;
        let center = Point2::new(a.x + ux, a.y + uy);
        (center, ux.hypot(uy))
    }

    let Some(&first) = points.first() else {
        return (Point2::ORIGIN, 0.0);
    };
    let mut circle = (first, 0.0);
    for i in 1..points.len() {
        if contains(&circle, &points[i]) {
            continue;
        }
        circle = (points[i], 0.0);
        for j in 0..i {
            if contains(&circle, &points[j]) {
                continue;
            }
            circle = from_two(points[i], points[j]);
            for k in 0..j {
                if !contains(&circle, &points[k]) {
                    circle = from_three(points[i], points[j], points[k]);
                }
            }
        }
    }
    circle
}

/// Columnar descriptor of a stack, `2S + 2` entries:
///
/// * `[0, S)`: fraction of footprint voxels occupied in each vertical slice,
/// * `[S, 2S)`: area-equivalent footprint radius per slice, meters,
/// * `2S`: stack height, meters,
/// * `2S + 1`: footprint width, meters.
///
/// Slices split `[0, 2 * min_height)` above the stack bottom evenly; layers
/// above that range fall into the last slice.
pub fn compute_descriptor(stack: &Stack, grid: &OccupancyGrid, params: &ExtractionParams) -> Vec<f64> {
    let s_count = params.slice_count;
    let vs = grid.voxel_size;
    let span = 2.0 * params.min_height;
    let slice_height = span / s_count as f64;
    let slice_of = |rel_layer: usize| {
        let mid = (rel_layer as f64 + 0.5) * vs;
        ((mid / slice_height).floor() as usize).min(s_count - 1)
    };

    let stack_layers = stack.z_hi - stack.z_lo + 1;
    let layer_total = stack_layers.max((span / vs - EPS).ceil() as usize);
    let mut layers_per_slice = vec![0usize; s_count];
    for l in 0..layer_total {
        layers_per_slice[slice_of(l)] += 1;
    }

    let footprint: BTreeSet<(usize, usize)> = stack.voxels.iter().map(|v| (v[0], v[1])).collect();
    let mut occupied = vec![0usize; s_count];
    let mut slice_columns: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); s_count];
    for v in &stack.voxels {
        let s = slice_of(v[2] - stack.z_lo);
        occupied[s] += 1;
        slice_columns[s].insert((v[0], v[1]));
    }

    let mut out = Vec::with_capacity(params.descriptor_len());
    for s in 0..s_count {
        let cells = footprint.len() * layers_per_slice[s];
        out.push(if cells == 0 { 0.0 } else { occupied[s] as f64 / cells as f64 });
    }
    for columns in &slice_columns {
        out.push((columns.len() as f64 * vs * vs / std::f64::consts::PI).sqrt());
    }
    out.push(stack.height(vs));
    out.push(stack.width);
    out
}

/// Grid over the cloud, then detect. The grid sits on the voxel lattice
/// anchored at the origin, starts at the layer holding the lowest point (so
/// the ground band is measured from there) and keeps one voxel of
/// horizontal margin.
pub fn extract_poles(cloud: &PointCloud, params: &ExtractionParams) -> Result<Vec<PoleDetection>> {
    params.validate()?;
    let vs = params.voxel_size;
    let Some(bbox) = Bounds::around(cloud, 0.0) else {
        return Ok(Vec::new());
    };
    let snap_down = |v: f64| (v / vs).floor() * vs;
    let min = [snap_down(bbox.min[0]) - vs, snap_down(bbox.min[1]) - vs, snap_down(bbox.min[2])];
    let max = [snap_down(bbox.max[0]) + 2.0 * vs, snap_down(bbox.max[1]) + 2.0 * vs, snap_down(bbox.max[2]) + 2.0 * vs];
    let bounds = Bounds::new(min, max)?;
    let built = build_grid(cloud, params, &bounds)?;
    detect_poles(&built.grid, params)
}
