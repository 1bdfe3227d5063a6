//! Simulated LiDAR, tri-state occupancy grid, inflation and nearest-obstacle
//! queries.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Polygon, Vec2};
use crate::scalar::Scalar;

/// Obstacles the sensors see. The workspace rectangle is not itself sensed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthWorld<T> {
    pub obstacles: Vec<Polygon<T>>,
    pub bounds: Aabb<T>,
}

impl<T: Scalar> GroundTruthWorld<T> {
    pub fn new(obstacles: Vec<Polygon<T>>, bounds: Aabb<T>) -> Self {
        Self { obstacles, bounds }
    }

    pub fn empty(bounds: Aabb<T>) -> Self {
        Self::new(Vec::new(), bounds)
    }

    /// Index of the first obstacle containing `p`.
    pub fn obstacle_containing(&self, p: Vec2<T>) -> Option<usize> {
        self.obstacles.iter().position(|o| o.contains(p))
    }

    /// Distance from `p` to the nearest obstacle boundary; zero inside.
    pub fn clearance(&self, p: Vec2<T>) -> T {
        if self.obstacle_containing(p).is_some() {
            return T::zero();
        }
        self.obstacles
            .iter()
            .map(|o| o.boundary_distance(p))
            .fold(T::infinity(), T::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSpec<T> {
    pub max_range: T,
    /// Angle between consecutive rays (rad).
    pub angular_step: T,
}

impl<T: Scalar> Default for LidarSpec<T> {
    fn default() -> Self {
        Self {
            max_range: T::c(5.0),
            angular_step: T::c(2.0).to_radians(),
        }
    }
}

impl<T: Scalar> LidarSpec<T> {
    pub fn ray_count(&self) -> usize {
        (T::TAU() / self.angular_step).round().to_usize().unwrap_or(0).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan<T> {
    pub pose: Vec2<T>,
    pub angles: Vec<T>,
    pub ranges: Vec<T>,
    pub max_range: T,
    pub hits: Vec<bool>,
}

impl<T: Scalar> LidarScan<T> {
    pub fn endpoint(&self, k: usize) -> Vec2<T> {
        self.pose + Vec2::from_angle(self.angles[k]) * self.ranges[k]
    }
}

pub fn simulate_lidar<T: Scalar>(
    world: &GroundTruthWorld<T>,
    pose: Vec2<T>,
    spec: &LidarSpec<T>,
) -> Result<LidarScan<T>> {
    if world.obstacle_containing(pose).is_some() {
        return Err(Error::PoseInsideObstacle {
            x: pose.x.as_f64(),
            y: pose.y.as_f64(),
        });
    }
    let count = spec.ray_count();
    let mut angles = Vec::with_capacity(count);
    let mut ranges = Vec::with_capacity(count);
    let mut hits = Vec::with_capacity(count);
    for k in 0..count {
        let theta = spec.angular_step * T::c(k as f64);
        let dir = Vec2::from_angle(theta);
        let nearest = world
            .obstacles
            .iter()
            .flat_map(|o| o.edges())
            .filter_map(|e| e.ray_hit(pose, dir))
            .fold(T::infinity(), T::min);
        angles.push(theta);
        if nearest < spec.max_range {
            ranges.push(nearest);
            hits.push(true);
        } else {
            ranges.push(spec.max_range);
            hits.push(false);
        }
    }
    Ok(LidarScan {
        pose,
        angles,
        ranges,
        max_range: spec.max_range,
        hits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Grid coordinate `(row, col)`; rows grow with y, columns with x.
pub type CellIndex = (usize, usize);

/// Large finite stand-in for "no seed" in the squared distance transform.
const NO_SEED: f64 = 1e20;

/// Squared Euclidean distance (in cells) from every cell to the nearest
/// `true` cell of `seeds`, by separable lower envelopes of parabolas.
/// Cells with no seed anywhere get `None`.
pub fn squared_distance_transform(rows: usize, cols: usize, seeds: &[bool]) -> Vec<Option<f64>> {
    assert_eq!(seeds.len(), rows * cols);
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { NO_SEED }).collect();
    let mut buf = vec![0.0; rows.max(cols)];
    let mut out = vec![0.0; rows.max(cols)];
    for r in 0..rows {
        buf[..cols].copy_from_slice(&d[r * cols..(r + 1) * cols]);
        envelope(&buf[..cols], &mut out[..cols]);
        d[r * cols..(r + 1) * cols].copy_from_slice(&out[..cols]);
    }
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = d[r * cols + c];
        }
        envelope(&buf[..rows], &mut out[..rows]);
        for r in 0..rows {
            d[r * cols + c] = out[r];
        }
    }
    d.into_iter().map(|v| (v < NO_SEED * 0.5).then_some(v)).collect()
}

fn envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for q in 1..n {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = dq * dq + f[v[k]];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    pub resolution: T,
    /// World coordinate of the lower-left corner of cell (0, 0).
    pub origin: Vec2<T>,
    pub rows: usize,
    pub cols: usize,
    cells: Vec<CellState>,
    inflated: Vec<bool>,
    inflation_radius: T,
}

impl<T: Scalar> OccupancyGrid<T> {
    pub fn new(origin: Vec2<T>, rows: usize, cols: usize, resolution: T) -> Result<Self> {
        if !(resolution > T::zero()) || !resolution.is_finite() {
            return Err(Error::validation("resolution", "must be finite and > 0"));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::validation("grid", "must have at least one row and column"));
        }
        Ok(Self {
            resolution,
            origin,
            rows,
            cols,
            cells: vec![CellState::Unknown; rows * cols],
            inflated: vec![false; rows * cols],
            inflation_radius: T::zero(),
        })
    }

    /// Grid covering `bounds`.
    pub fn covering(bounds: &Aabb<T>, resolution: T) -> Result<Self> {
        let cols = (bounds.width() / resolution).ceil().to_usize().unwrap_or(0).max(1);
        let rows = (bounds.height() / resolution).ceil().to_usize().unwrap_or(0).max(1);
        Self::new(bounds.min, rows, cols, resolution)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn flat(&self, (r, c): CellIndex) -> usize {
        r * self.cols + c
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> CellIndex {
        (k / self.cols, k % self.cols)
    }

    #[inline]
    pub fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols
    }

    pub fn state(&self, idx: CellIndex) -> CellState {
        self.cells[self.flat(idx)]
    }

    pub fn is_inflated(&self, idx: CellIndex) -> bool {
        self.inflated[self.flat(idx)]
    }

    pub fn inflation_radius(&self) -> T {
        self.inflation_radius
    }

    pub fn states(&self) -> &[CellState] {
        &self.cells
    }

    pub fn inflated_layer(&self) -> &[bool] {
        &self.inflated
    }

    /// Sets a cell directly, bypassing the sticky-occupied rule.
    pub fn set_state(&mut self, idx: CellIndex, s: CellState) {
        let k = self.flat(idx);
        self.cells[k] = s;
    }

    pub fn cell_center(&self, (r, c): CellIndex) -> Vec2<T> {
        let half = T::half();
        self.origin
            + Vec2::new(
                (T::c(c as f64) + half) * self.resolution,
                (T::c(r as f64) + half) * self.resolution,
            )
    }

    /// Cell containing `p` (half-open on the upper edges), if inside the grid.
    pub fn cell_of(&self, p: Vec2<T>) -> Option<CellIndex> {
        let (r, c) = self.cell_of_unbounded(p)?;
        self.in_bounds(r, c).then_some((r as usize, c as usize))
    }

    fn cell_of_unbounded(&self, p: Vec2<T>) -> Option<(isize, isize)> {
        let q = (p - self.origin) / self.resolution;
        Some((q.y.floor().to_isize()?, q.x.floor().to_isize()?))
    }

    /// Nearest in-grid cell to `p` (clamped).
    pub fn clamp_cell(&self, p: Vec2<T>) -> CellIndex {
        let (r, c) = self.cell_of_unbounded(p).unwrap_or((0, 0));
        (
            r.clamp(0, self.rows as isize - 1) as usize,
            c.clamp(0, self.cols as isize - 1) as usize,
        )
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == s).count()
    }

    pub fn known_count(&self) -> usize {
        self.len() - self.count(CellState::Unknown)
    }

    fn mark_free(&mut self, (r, c): (isize, isize)) {
        if self.in_bounds(r, c) {
            let k = self.flat((r as usize, c as usize));
            if self.cells[k] == CellState::Unknown {
                self.cells[k] = CellState::Free;
            }
        }
    }

    fn mark_occupied(&mut self, (r, c): (isize, isize)) {
        if self.in_bounds(r, c) {
            let k = self.flat((r as usize, c as usize));
            self.cells[k] = CellState::Occupied;
        }
    }

    /// Folds one scan in: cells along each ray become free, the end cell of
    /// a hit becomes occupied. Occupied cells are never freed. Inflation is
    /// not refreshed; call [`OccupancyGrid::inflate`] afterwards.
    pub fn update(&mut self, scan: &LidarScan<T>) {
        let Some(start) = self.cell_of_unbounded(scan.pose) else {
            return;
        };
        for k in 0..scan.ranges.len() {
            let Some(end) = self.cell_of_unbounded(scan.endpoint(k)) else {
                continue;
            };
            let line = bresenham(start, end);
            let last = line.len() - 1;
            for &cell in &line[..last] {
                self.mark_free(cell);
            }
            if scan.hits[k] {
                self.mark_occupied(line[last]);
            } else {
                self.mark_free(line[last]);
            }
        }
    }

    /// Recomputes the inflated layer: every cell whose center lies within
    /// `radius` of an occupied cell center.
    pub fn inflate(&mut self, radius: T) {
        self.inflation_radius = radius.max(T::zero());
        let seeds: Vec<bool> = self.cells.iter().map(|&c| c == CellState::Occupied).collect();
        let d2 = squared_distance_transform(self.rows, self.cols, &seeds);
        let lim = (self.inflation_radius / self.resolution).as_f64();
        let lim2 = lim * lim * (1.0 + 1e-12);
        for (k, d) in d2.into_iter().enumerate() {
            self.inflated[k] = matches!(d, Some(v) if v <= lim2);
        }
    }

    /// Distance (m) from every cell center to the nearest occupied cell
    /// center, `None` if nothing is occupied.
    pub fn occupied_distance(&self) -> Vec<Option<T>> {
        let seeds: Vec<bool> = self.cells.iter().map(|&c| c == CellState::Occupied).collect();
        squared_distance_transform(self.rows, self.cols, &seeds)
            .into_iter()
            .map(|d| d.map(|v| T::c(v.sqrt()) * self.resolution))
            .collect()
    }

    pub fn occupied_cells(&self) -> Vec<CellIndex> {
        (0..self.len())
            .filter(|&k| self.cells[k] == CellState::Occupied)
            .map(|k| self.unflat(k))
            .collect()
    }

    /// Centers of the `k` occupied cells nearest to `position`, ascending by
    /// distance, ties by `(row, col)`.
    pub fn nearest_occupied_points(&self, position: Vec2<T>, k: usize) -> Vec<Vec2<T>> {
        nearest_points_among(self, &self.occupied_cells(), position, k)
    }

    /// Text snapshot: a short header then one line per row from the top
    /// (highest y) down, one character per cell: `U` unknown, `F` free,
    /// `O` occupied, `I` inflated non-occupied.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::with_capacity(self.len() + self.rows + 96);
        let _ = writeln!(s, "width {}", self.cols);
        let _ = writeln!(s, "height {}", self.rows);
        let _ = writeln!(s, "resolution {}", self.resolution);
        let _ = writeln!(s, "origin {} {}", self.origin.x, self.origin.y);
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                let k = self.flat((r, c));
                s.push(match (self.cells[k], self.inflated[k]) {
                    (CellState::Occupied, _) => 'O',
                    (_, true) => 'I',
                    (CellState::Free, false) => 'F',
                    (CellState::Unknown, false) => 'U',
                });
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`OccupancyGrid::to_snapshot`] output. `I` cells come back as
    /// inflated with their underlying state taken as free.
    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing `{name}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(Error::Parse(format!("expected `{name}`, got `{line}`")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let num = |v: &[String], i: usize| -> Result<f64> {
            v.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad number in snapshot header: {v:?}")))
        };
        let cols = num(&field("width")?, 0)? as usize;
        let rows = num(&field("height")?, 0)? as usize;
        let res = num(&field("resolution")?, 0)?;
        let o = field("origin")?;
        let origin = Vec2::new(T::c(num(&o, 0)?), T::c(num(&o, 1)?));
        let mut grid = Self::new(origin, rows, cols, T::c(res))?;
        let body: Vec<&str> = lines.collect();
        if body.len() != rows {
            return Err(Error::Parse(format!("expected {rows} grid rows, found {}", body.len())));
        }
        for (i, line) in body.iter().enumerate() {
            let r = rows - 1 - i;
            if line.chars().count() != cols {
                return Err(Error::Parse(format!(
                    "row {r} has {} cells, expected {cols}",
                    line.len()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                let k = grid.flat((r, c));
                match ch {
                    'U' => {}
                    'F' => grid.cells[k] = CellState::Free,
                    'O' => {
                        grid.cells[k] = CellState::Occupied;
                        grid.inflated[k] = true;
                    }
                    'I' => {
                        grid.cells[k] = CellState::Free;
                        grid.inflated[k] = true;
                    }
                    other => return Err(Error::Parse(format!("unknown cell character `{other}`"))),
                }
            }
        }
        Ok(grid)
    }
}

pub(crate) fn nearest_points_among<T: Scalar>(
    grid: &OccupancyGrid<T>,
    cells: &[CellIndex],
    position: Vec2<T>,
    k: usize,
) -> Vec<Vec2<T>> {
    if k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(T, CellIndex)> = cells
        .iter()
        .map(|&idx| ((grid.cell_center(idx) - position).norm_sq(), idx))
        .collect();
    let cmp = |a: &(T, CellIndex), b: &(T, CellIndex)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, idx)| grid.cell_center(idx)).collect()
}

/// Integer line from `a` to `b`, both ends included, 8-connected.
pub fn bresenham(a: (isize, isize), b: (isize, isize)) -> Vec<(isize, isize)> {
    let (mut r, mut c) = a;
    let dr = (b.0 - r).abs();
    let dc = (b.1 - c).abs();
    let sr = if b.0 >= r { 1 } else { -1 };
    let sc = if b.1 >= c { 1 } else { -1 };
    let mut err = dc - dr;
    let mut out = Vec::with_capacity((dr.max(dc) + 1) as usize);
    loop {
        out.push((r, c));
        if (r, c) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
    }
}
