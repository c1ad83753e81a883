//! Costmap inflation, 8-connected A* global planning and local-goal
//! extraction.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::worldgen::World;

/// Default lookahead distance for the local goal, meters.
pub const DEFAULT_LOOKAHEAD: f64 = 2.0;

/// Grid cell index `(col, row)`.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellCost {
    Free,
    /// Lethal because of inflation; the cell itself is not occupied.
    Inflated,
    /// Occupied in the source world.
    Lethal,
}

impl CellCost {
    pub fn is_lethal(self) -> bool {
        !matches!(self, CellCost::Free)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub cells: Vec<CellCost>,
}

impl Costmap {
    pub fn cost(&self, (c, r): Cell) -> CellCost {
        self.cells[r * self.width + c]
    }

    pub fn is_lethal(&self, cell: Cell) -> bool {
        self.cost(cell).is_lethal()
    }

    pub fn cell_of(&self, p: Point2) -> Option<Cell> {
        cell_of(p, self.resolution, self.width, self.height)
    }

    pub fn cell_center(&self, (c, r): Cell) -> Point2 {
        Point2::new(
            (c as f64 + 0.5) * self.resolution,
            (r as f64 + 0.5) * self.resolution,
        )
    }

    pub fn lethal_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_lethal()).count()
    }
}

pub(crate) fn cell_of(p: Point2, res: f64, width: usize, height: usize) -> Option<Cell> {
    if !(p.x.is_finite() && p.y.is_finite()) || p.x < 0.0 || p.y < 0.0 {
        return None;
    }
    let c = (p.x / res).floor() as usize;
    let r = (p.y / res).floor() as usize;
    (c < width && r < height).then_some((c, r))
}

/// Mark every cell whose center lies within `radius` of an occupied cell
/// (its nearest point, not its center) as lethal.
pub fn inflate(world: &World, radius: f64) -> Costmap {
    let (w, h) = (world.width, world.height);
    let res = world.resolution;
    let reach = (radius / res + 0.5).ceil() as isize;
    // Squared radius in cell units, with a tiny slack so that exact
    // boundary distances are included.
    let r2 = (radius / res).powi(2) * (1.0 + 1e-12);
    // squared distance from a cell center to the nearest point of a cell
    // offset by (dc, dr)
    let gap2 = |dc: isize, dr: isize| {
        let gx = (dc.abs() as f64 - 0.5).max(0.0);
        let gy = (dr.abs() as f64 - 0.5).max(0.0);
        gx * gx + gy * gy
    };
    let mut cells = vec![CellCost::Free; w * h];
    for r in 0..h {
        for c in 0..w {
            if !world.cells[r * w + c] {
                continue;
            }
            cells[r * w + c] = CellCost::Lethal;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    if gap2(dc, dr) > r2 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let idx = rr as usize * w + cc as usize;
                    if cells[idx] == CellCost::Free {
                        cells[idx] = CellCost::Inflated;
                    }
                }
            }
        }
    }
    Costmap {
        width: w,
        height: h,
        resolution: res,
        cells,
    }
}

/// Global path: world-frame points plus its grid cost in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Point2>,
    pub cells: Vec<Cell>,
    pub cost: f64,
}

impl Path {
    /// Drop the points preceding the one closest to `position`.
    pub fn remaining_from(&self, position: Point2) -> &[Point2] {
        let nearest = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.dist(&position)
                    .partial_cmp(&b.1.dist(&position))
                    .unwrap_or(Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.points[nearest..]
    }
}

/// Cost of a cell path as `straight + diagonal·√2` grid units.
pub fn cell_path_cost(cells: &[Cell]) -> f64 {
    let (mut straight, mut diagonal) = (0u32, 0u32);
    for w in cells.windows(2) {
        let dc = w[0].0.abs_diff(w[1].0);
        let dr = w[0].1.abs_diff(w[1].1);
        if dc + dr == 2 {
            diagonal += 1;
        } else {
            straight += 1;
        }
    }
    straight as f64 + diagonal as f64 * SQRT_2
}

const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Neighbors of `cell` reachable in one move, with their move cost.
/// Diagonal moves between two blocked orthogonal neighbors are excluded.
pub fn neighbors(costmap: &Costmap, (c, r): Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
    let (w, h) = (costmap.width as isize, costmap.height as isize);
    NEIGHBORS.iter().filter_map(move |&(dc, dr)| {
        let (nc, nr) = (c as isize + dc, r as isize + dr);
        if nc < 0 || nr < 0 || nc >= w || nr >= h {
            return None;
        }
        let next = (nc as usize, nr as usize);
        if costmap.is_lethal(next) {
            return None;
        }
        if dc != 0 && dr != 0 {
            let side_a = costmap.is_lethal((nc as usize, r));
            let side_b = costmap.is_lethal((c, nr as usize));
            if side_a && side_b {
                return None;
            }
            Some((next, SQRT_2))
        } else {
            Some((next, 1.0))
        }
    })
}

#[derive(Debug, PartialEq)]
struct OpenEntry {
    f: f64,
    order: u64,
    cell: Cell,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap on (f, insertion order)
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) + lo * SQRT_2
}

/// Minimum-cost 8-connected path over non-lethal cells.
///
/// Straight moves cost 1 and diagonal moves √2 (grid units); the returned
/// cost is in meters. Ties in the open list are resolved by insertion order.
pub fn plan_astar(costmap: &Costmap, start: Cell, goal: Cell) -> Result<Path> {
    let (w, h) = (costmap.width, costmap.height);
    if start.0 >= w || start.1 >= h || goal.0 >= w || goal.1 >= h {
        return Err(Error::NoPath);
    }
    if costmap.is_lethal(start) || costmap.is_lethal(goal) {
        return Err(Error::NoPath);
    }
    let idx = |(c, r): Cell| r * w + c;
    let mut g = vec![f64::INFINITY; w * h];
    let mut parent: Vec<Option<Cell>> = vec![None; w * h];
    let mut open = BinaryHeap::new();
    let mut order = 0u64;
    g[idx(start)] = 0.0;
    open.push(OpenEntry {
        f: octile(start, goal),
        order,
        cell: start,
    });
    while let Some(OpenEntry { f, cell, .. }) = open.pop() {
        let gc = g[idx(cell)];
        if f > gc + octile(cell, goal) {
            continue; // stale
        }
        if cell == goal {
            break;
        }
        for (next, step) in neighbors(costmap, cell) {
            let cand = gc + step;
            if cand < g[idx(next)] {
                g[idx(next)] = cand;
                parent[idx(next)] = Some(cell);
                order += 1;
                open.push(OpenEntry {
                    f: cand + octile(next, goal),
                    order,
                    cell: next,
                });
            }
        }
    }
    if !g[idx(goal)].is_finite() {
        return Err(Error::NoPath);
    }
    let mut cells = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[idx(cur)] {
        cells.push(p);
        cur = p;
    }
    cells.reverse();
    let cost = cell_path_cost(&cells) * costmap.resolution;
    let points = cells.iter().map(|&c| costmap.cell_center(c)).collect();
    Ok(Path {
        points,
        cells,
        cost,
    })
}

/// Nearest non-lethal cell to `from` (breadth-first over the whole grid,
/// ranked by Euclidean distance among the first ring found).
pub fn nearest_free_cell(costmap: &Costmap, from: Cell) -> Option<Cell> {
    if !costmap.is_lethal(from) {
        return Some(from);
    }
    let (w, h) = (costmap.width, costmap.height);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([(from, 0usize)]);
    seen[from.1 * w + from.0] = true;
    let mut best: Option<(Cell, usize, usize)> = None;
    while let Some((cell, depth)) = queue.pop_front() {
        if let Some((_, d, _)) = best {
            if depth > d + 1 {
                break;
            }
        }
        if !costmap.is_lethal(cell) {
            let d2 = cell.0.abs_diff(from.0).pow(2) + cell.1.abs_diff(from.1).pow(2);
            if best.is_none_or(|(_, _, bd2)| d2 < bd2) {
                best = Some((cell, depth, d2));
            }
            continue;
        }
        for &(dc, dr) in &NEIGHBORS {
            let (nc, nr) = (cell.0 as isize + dc, cell.1 as isize + dr);
            if nc < 0 || nr < 0 || nc >= w as isize || nr >= h as isize {
                continue;
            }
            let n = (nc as usize, nr as usize);
            if !seen[n.1 * w + n.0] {
                seen[n.1 * w + n.0] = true;
                queue.push_back((n, depth + 1));
            }
        }
    }
    best.map(|(c, _, _)| c)
}

/// Plan from a continuous pose to a continuous goal. When the pose sits in
/// an inflated cell the search starts from the nearest free cell and the
/// pose's own cell is prepended. The final point is replaced by `goal`.
pub fn plan_between(costmap: &Costmap, from: Point2, goal: Point2) -> Result<Path> {
    let start = costmap.cell_of(from).ok_or(Error::NoPath)?;
    let goal_cell = costmap.cell_of(goal).ok_or(Error::NoPath)?;
    let entry = nearest_free_cell(costmap, start).ok_or(Error::NoPath)?;
    let mut path = plan_astar(costmap, entry, goal_cell)?;
    if entry != start {
        path.cells.insert(0, start);
        path.points.insert(0, costmap.cell_center(start));
        path.cost = cell_path_cost(&path.cells) * costmap.resolution;
    }
    if let Some(last) = path.points.last_mut() {
        *last = goal;
    }
    Ok(path)
}

/// Local goal in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalGoal {
    pub point: Point2,
    pub unit: Point2,
    pub lookahead: f64,
    /// Set when no path point lies at least `lookahead` away.
    pub fallback: bool,
}

/// Pick the closest path point at least `lookahead` from the robot, in the
/// robot frame, and its unit direction. Ties go to the smallest index; if no
/// point qualifies, the final point is returned with `fallback` set.
pub fn extract_local_goal(path: &[Point2], pose: &Pose, lookahead: f64) -> Result<LocalGoal> {
    if path.is_empty() {
        return Err(Error::NoPath);
    }
    if !(lookahead > 0.0) {
        return Err(Error::InvalidConfig(format!("lookahead {lookahead} must be > 0")));
    }
    let mut best: Option<(Point2, f64)> = None;
    for p in path {
        let local = pose.to_local(*p);
        let d = local.norm();
        if d >= lookahead && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((local, d));
        }
    }
    let (point, dist, fallback) = match best {
        Some((p, d)) => (p, d, false),
        None => {
            let p = pose.to_local(*path.last().expect("non-empty"));
            (p, p.norm(), true)
        }
    };
    if dist < 1e-6 {
        return Err(Error::DegenerateGoal);
    }
    Ok(LocalGoal {
        point,
        unit: Point2::new(point.x / dist, point.y / dist),
        lookahead,
        fallback,
    })
}
