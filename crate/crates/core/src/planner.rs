//! Medial-axis skeleton over known free space and frontier-aware path
//! construction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::mapping::{bresenham, CellIndex, CellState, OccupancyGrid};
use crate::scalar::Scalar;

/// Ordered 8-adjacent cells with their metric points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath<T> {
    pub cells: Vec<CellIndex>,
    pub points: Vec<Vec2<T>>,
}

impl<T: Scalar> GridPath<T> {
    /// Index of the final element.
    pub fn last_index(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn length(&self) -> T {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// `k,x,y` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,x,y\n");
        for (k, p) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{k},{},{}", p.x, p.y);
        }
        s
    }
}

/// Minimum squared feature separation (cells²) for a ridge cell: the two
/// neighbours straddling it must be closest to obstacle cells at least this
/// far apart, which rejects sampling ripples along a single wall.
const MIN_FEATURE_SEPARATION2: i64 = 9;

const AXES: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Squared distance transform with the nearest seed per cell.
fn feature_transform(rows: usize, cols: usize, seeds: &[bool]) -> Vec<Option<(i64, CellIndex)>> {
    // Row pass: nearest seed column within the row.
    let mut near_col = vec![None::<usize>; rows * cols];
    for r in 0..rows {
        let mut last = None;
        for c in 0..cols {
            if seeds[r * cols + c] {
                last = Some(c);
            }
            near_col[r * cols + c] = last;
        }
        let mut next = None;
        for c in (0..cols).rev() {
            if seeds[r * cols + c] {
                next = Some(c);
            }
            let k = r * cols + c;
            near_col[k] = match (near_col[k], next) {
                (Some(a), Some(b)) => Some(if c - a <= b - c { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }
    // Column pass: lower envelope of parabolas g(r') + (r - r')².
    let mut out = vec![None; rows * cols];
    let mut v = vec![0usize; rows];
    let mut z = vec![0.0f64; rows + 1];
    for c in 0..cols {
        let g = |r: usize| {
            near_col[r * cols + c].map(|cc| {
                let d = cc as i64 - c as i64;
                d * d
            })
        };
        let rows_with: Vec<usize> = (0..rows).filter(|&r| g(r).is_some()).collect();
        if rows_with.is_empty() {
            continue;
        }
        let f = |r: usize| g(r).unwrap() as f64;
        let meet = |q: usize, p: usize| {
            let (qf, pf) = (q as f64, p as f64);
            ((f(q) + qf * qf) - (f(p) + pf * pf)) / (2.0 * qf - 2.0 * pf)
        };
        let mut k = 0;
        v[0] = rows_with[0];
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for &q in &rows_with[1..] {
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
        for r in 0..rows {
            while z[k + 1] < r as f64 {
                k += 1;
            }
            let rr = v[k];
            let cc = near_col[rr * cols + c].unwrap();
            let dr = r as i64 - rr as i64;
            let dc = c as i64 - cc as i64;
            out[r * cols + c] = Some((dr * dr + dc * dc, (rr, cc)));
        }
    }
    out
}

/// Known-free, non-inflated cell.
fn known_traversable<T: Scalar>(grid: &OccupancyGrid<T>, k: usize) -> bool {
    grid.states()[k] == CellState::Free && !grid.inflated_layer()[k]
}

/// Free or unknown, and not inflated.
fn optimistic_traversable<T: Scalar>(grid: &OccupancyGrid<T>, k: usize) -> bool {
    grid.states()[k] != CellState::Occupied && !grid.inflated_layer()[k]
}

/// Skeleton mask over the grid: thinned clearance ridge restricted to
/// known-free, non-inflated cells. Empty when nothing is occupied.
pub fn extract_skeleton<T: Scalar>(grid: &OccupancyGrid<T>) -> Vec<bool> {
    let (rows, cols) = (grid.rows, grid.cols);
    let seeds: Vec<bool> = grid.states().iter().map(|&s| s == CellState::Occupied).collect();
    let ft = feature_transform(rows, cols, &seeds);
    let mut mask = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if !known_traversable(grid, k) {
                continue;
            }
            let Some((d, _)) = ft[k] else { continue };
            for (dr, dc) in AXES {
                let (r0, c0) = (r as isize - dr, c as isize - dc);
                let (r1, c1) = (r as isize + dr, c as isize + dc);
                if !grid.in_bounds(r0, c0) || !grid.in_bounds(r1, c1) {
                    continue;
                }
                let (Some((d0, f0)), Some((d1, f1))) = (
                    ft[r0 as usize * cols + c0 as usize],
                    ft[r1 as usize * cols + c1 as usize],
                ) else {
                    continue;
                };
                if d < d0 || d < d1 || (d == d0 && d == d1) {
                    continue;
                }
                let sep_r = f0.0 as i64 - f1.0 as i64;
                let sep_c = f0.1 as i64 - f1.1 as i64;
                if sep_r * sep_r + sep_c * sep_c >= MIN_FEATURE_SEPARATION2 {
                    mask[k] = true;
                    break;
                }
            }
        }
    }
    thin(&mut mask, rows, cols);
    mask
}

/// Zhang–Suen thinning to one-cell-wide 8-connected curves.
fn thin(mask: &mut [bool], rows: usize, cols: usize) {
    let at = |m: &[bool], r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && m[r as usize * cols + c as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for r in 0..rows as isize {
                for c in 0..cols as isize {
                    if !at(mask, r, c) {
                        continue;
                    }
                    // P2..P9 clockwise from north.
                    let p = [
                        at(mask, r + 1, c),
                        at(mask, r + 1, c + 1),
                        at(mask, r, c + 1),
                        at(mask, r - 1, c + 1),
                        at(mask, r - 1, c),
                        at(mask, r - 1, c - 1),
                        at(mask, r, c - 1),
                        at(mask, r + 1, c - 1),
                    ];
                    let b = p.iter().filter(|&&x| x).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 {
                        !(n && e && s) && !(e && s && w)
                    } else {
                        !(n && e && w) && !(n && s && w)
                    };
                    if ok {
                        remove.push(r as usize * cols + c as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for k in remove {
                mask[k] = false;
            }
        }
        if !changed {
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    g: f64,
    cell: CellIndex,
}

impl Eq for Node {}

impl Ord for Node {
    // Inverted for the max-heap: smallest f, then smallest (row, col), pops first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then_with(|| o.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct Search {
    came_from: Vec<Option<usize>>,
    cost: Vec<f64>,
}

/// Best-first search over 8-connected cells. `passable` gates entry,
/// `heuristic` must be admissible, `is_goal` stops the search. Diagonal
/// moves need both side cells passable.
fn search(
    rows: usize,
    cols: usize,
    start: CellIndex,
    passable: impl Fn(usize) -> bool,
    heuristic: impl Fn(CellIndex) -> f64,
    is_goal: impl Fn(CellIndex) -> bool,
) -> (Search, Option<CellIndex>) {
    let n = rows * cols;
    let mut s = Search {
        came_from: vec![None; n],
        cost: vec![f64::INFINITY; n],
    };
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let sk = start.0 * cols + start.1;
    s.cost[sk] = 0.0;
    heap.push(Node {
        f: heuristic(start),
        g: 0.0,
        cell: start,
    });
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols;
    while let Some(Node { g, cell, .. }) = heap.pop() {
        let k = cell.0 * cols + cell.1;
        if closed[k] {
            continue;
        }
        closed[k] = true;
        if is_goal(cell) {
            return (s, Some(cell));
        }
        for (dr, dc) in NEIGHBOURS {
            let (r, c) = (cell.0 as isize + dr, cell.1 as isize + dc);
            if !inside(r, c) {
                continue;
            }
            let nk = r as usize * cols + c as usize;
            if closed[nk] || !passable(nk) {
                continue;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal {
                let side_a = cell.0 * cols + c as usize;
                let side_b = r as usize * cols + cell.1;
                if !passable(side_a) || !passable(side_b) {
                    continue;
                }
            }
            let ng = g + if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            if ng < s.cost[nk] {
                s.cost[nk] = ng;
                s.came_from[nk] = Some(k);
                let next = (r as usize, c as usize);
                heap.push(Node {
                    f: ng + heuristic(next),
                    g: ng,
                    cell: next,
                });
            }
        }
    }
    (s, None)
}

fn reconstruct(s: &Search, cols: usize, end: CellIndex) -> Vec<CellIndex> {
    let mut out = vec![end];
    let mut k = end.0 * cols + end.1;
    while let Some(p) = s.came_from[k] {
        out.push((p / cols, p % cols));
        k = p;
    }
    out.reverse();
    out
}

fn euclid(a: CellIndex, b: CellIndex) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (dr * dr + dc * dc).sqrt()
}

/// A* between two cells over cells accepted by `passable`.
pub fn astar<T: Scalar>(
    grid: &OccupancyGrid<T>,
    start: CellIndex,
    goal: CellIndex,
    passable: impl Fn(usize) -> bool,
) -> Option<Vec<CellIndex>> {
    let (s, end) = search(
        grid.rows,
        grid.cols,
        start,
        passable,
        |c| euclid(c, goal),
        |c| c == goal,
    );
    end.map(|e| reconstruct(&s, grid.cols, e))
}

/// Rasterized straight line between two cells.
fn line(a: CellIndex, b: CellIndex) -> Vec<CellIndex> {
    bresenham((a.0 as isize, a.1 as isize), (b.0 as isize, b.1 as isize))
        .into_iter()
        .map(|(r, c)| (r as usize, c as usize))
        .collect()
}

fn line_clear<T: Scalar>(grid: &OccupancyGrid<T>, a: CellIndex, b: CellIndex) -> bool {
    line(a, b)
        .into_iter()
        .all(|c| optimistic_traversable(grid, grid.flat(c)))
}

/// Appends `tail`, dropping its first cell when it repeats the current end.
fn append(path: &mut Vec<CellIndex>, tail: &[CellIndex]) {
    let skip = usize::from(path.last().is_some() && path.last() == tail.first());
    path.extend_from_slice(&tail[skip..]);
}

/// Cuts the loop between any two visits of the same cell.
fn remove_loops(path: Vec<CellIndex>, cols: usize) -> Vec<CellIndex> {
    let mut out: Vec<CellIndex> = Vec::with_capacity(path.len());
    let mut pos = std::collections::HashMap::new();
    for c in path {
        if let Some(&i) = pos.get(&(c.0 * cols + c.1)) {
            for dropped in out.drain(i + 1..) {
                pos.remove(&(dropped.0 * cols + dropped.1));
            }
        } else {
            pos.insert(c.0 * cols + c.1, out.len());
            out.push(c);
        }
    }
    out
}

/// Leaves a start cell that sits inside the inflated layer: shortest walk
/// over non-occupied known cells to the nearest known-traversable cell.
fn escape_inflation<T: Scalar>(grid: &OccupancyGrid<T>, start: CellIndex) -> Option<Vec<CellIndex>> {
    let passable = |k: usize| grid.states()[k] != CellState::Occupied;
    let target = |c: CellIndex| {
        known_traversable(grid, grid.flat(c)) || grid.state(c) == CellState::Unknown && !grid.is_inflated(c)
    };
    let (s, end) = search(grid.rows, grid.cols, start, passable, |_| 0.0, target);
    end.map(|e| reconstruct(&s, grid.cols, e))
}

/// Path from `start` to `goal`: reach the skeleton through known free
/// space, follow it to the skeleton cell nearest the goal that has a clear
/// straight line to the goal, then take that line (unknown cells are
/// traversable for this last leg only). Without a usable skeleton the path
/// is the straight line when clear, else A* over free and unknown cells.
pub fn plan_path<T: Scalar>(grid: &OccupancyGrid<T>, start: Vec2<T>, goal: Vec2<T>) -> Result<GridPath<T>> {
    let cols = grid.cols;
    let goal_cell = grid.clamp_cell(goal);
    let mut s0 = grid.clamp_cell(start);
    let mut cells = Vec::new();

    if s0 != goal_cell && !optimistic_traversable(grid, grid.flat(s0)) {
        let esc = escape_inflation(grid, s0)
            .ok_or_else(|| Error::NoPath(format!("start cell {s0:?} is enclosed by non-traversable cells")))?;
        s0 = *esc.last().unwrap();
        cells = esc;
    }
    if s0 == goal_cell {
        if cells.is_empty() {
            cells.push(s0);
        }
        return Ok(finish(grid, cells, start, goal));
    }

    let skeleton = extract_skeleton(grid);
    let route = skeleton_route(grid, &skeleton, s0, goal_cell)
        .or_else(|| line_clear(grid, s0, goal_cell).then(|| line(s0, goal_cell)))
        .or_else(|| astar(grid, s0, goal_cell, |k| optimistic_traversable(grid, k)))
        .ok_or_else(|| Error::NoPath(format!("no traversable route from {s0:?} to {goal_cell:?}")))?;
    if cells.is_empty() {
        cells = route;
    } else {
        append(&mut cells, &route);
    }
    Ok(finish(grid, remove_loops(cells, cols), start, goal))
}

fn skeleton_route<T: Scalar>(
    grid: &OccupancyGrid<T>,
    skeleton: &[bool],
    start: CellIndex,
    goal: CellIndex,
) -> Option<Vec<CellIndex>> {
    if !skeleton.iter().any(|&b| b) {
        return None;
    }
    let cols = grid.cols;
    let known = |k: usize| known_traversable(grid, k);
    let on_skel = |c: CellIndex| skeleton[c.0 * cols + c.1];
    // Entry: nearest skeleton cell through known free space.
    let (s, entry) = search(grid.rows, cols, start, known, |_| 0.0, on_skel);
    let entry = entry?;
    let lead = reconstruct(&s, cols, entry);
    // All skeleton cells reachable from the entry along the skeleton.
    let (along, _) = search(grid.rows, cols, entry, |k| skeleton[k], |_| 0.0, |_| false);
    let mut best: Option<(f64, f64, CellIndex)> = None;
    for k in 0..skeleton.len() {
        if !skeleton[k] || !along.cost[k].is_finite() {
            continue;
        }
        let c = grid.unflat(k);
        let key = (euclid(c, goal), along.cost[k], c);
        if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) && line_clear(grid, c, goal) {
            best = Some(key);
        }
    }
    let (exit_dist, _, exit) = best?;
    // Heading straight from the start is at least as good as any exit.
    if line_clear(grid, start, goal) && euclid(start, goal) <= exit_dist {
        return Some(line(start, goal));
    }
    let mut cells = lead;
    append(&mut cells, &reconstruct(&along, cols, exit));
    append(&mut cells, &line(exit, goal));
    Some(cells)
}

fn finish<T: Scalar>(grid: &OccupancyGrid<T>, cells: Vec<CellIndex>, start: Vec2<T>, goal: Vec2<T>) -> GridPath<T> {
    let mut points: Vec<Vec2<T>> = cells.iter().map(|&c| grid.cell_center(c)).collect();
    if let Some(p) = points.first_mut() {
        *p = start;
    }
    if points.len() > 1 {
        *points.last_mut().unwrap() = goal;
    }
    GridPath { cells, points }
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec2<f64>;

    fn known_grid(rows: usize, cols: usize) -> OccupancyGrid<f64> {
        let mut g = OccupancyGrid::new(V::zero(), rows, cols, 0.1).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                g.set_state((r, c), CellState::Free);
            }
        }
        g
    }

    #[test]
    fn same_cell_gives_single_point() {
        let g = known_grid(10, 10);
        let p = plan_path(&g, V::new(0.52, 0.51), V::new(0.55, 0.58)).unwrap();
        assert_eq!(p.last_index(), 0);
        assert_eq!(p.cells, vec![(5, 5)]);
    }

    #[test]
    fn unknown_map_gives_straight_line() {
        let g = OccupancyGrid::new(V::zero(), 50, 50, 0.1).unwrap();
        let p = plan_path(&g, V::new(0.05, 0.05), V::new(4.05, 2.05)).unwrap();
        assert_eq!(p.cells, line((0, 0), (20, 40)));
        assert_eq!(p.points[0], V::new(0.05, 0.05));
        assert_eq!(*p.points.last().unwrap(), V::new(4.05, 2.05));
    }

    #[test]
    fn empty_known_region_has_no_skeleton() {
        let g = known_grid(20, 20);
        assert!(extract_skeleton(&g).iter().all(|&b| !b));
    }

    #[test]
    fn feature_transform_matches_brute_force() {
        let (rows, cols) = (13, 17);
        let seeds: Vec<bool> = (0..rows * cols).map(|k| (k * 7919) % 23 == 0).collect();
        let ft = feature_transform(rows, cols, &seeds);
        for r in 0..rows {
            for c in 0..cols {
                let best = (0..rows * cols)
                    .filter(|&k| seeds[k])
                    .map(|k| {
                        let (sr, sc) = (k / cols, k % cols);
                        let (dr, dc) = (r as i64 - sr as i64, c as i64 - sc as i64);
                        dr * dr + dc * dc
                    })
                    .min()
                    .unwrap();
                let (d, (fr, fc)) = ft[r * cols + c].unwrap();
                assert_eq!(d, best);
                assert!(seeds[fr * cols + fc]);
            }
        }
    }

    #[test]
    fn blocked_start_reports_no_path() {
        let mut g = known_grid(10, 10);
        for k in 0..100 {
            let c = g.unflat(k);
            if c != (5, 5) {
                g.set_state(c, CellState::Occupied);
            }
        }
        g.inflate(0.0);
        let err = plan_path(&g, V::new(0.55, 0.55), V::new(0.05, 0.05)).unwrap_err();
        assert!(matches!(err, Error::NoPath(_)));
    }

    #[test]
    fn loops_are_removed() {
        let p = vec![(0, 0), (0, 1), (1, 1), (0, 1), (0, 2)];
        assert_eq!(remove_loops(p, 10), vec![(0, 0), (0, 1), (0, 2)]);
    }
}
