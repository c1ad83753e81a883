//! Brute-force reference implementations used to check the library.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use lics::expert::Action;
use lics::geometry::{Point2, Pose};
use lics::planning::{Cell, Costmap};
use lics::safety::SafetyConfig;
use lics::worldgen::World;
use rand::Rng;

/// Pose after holding `a` for `t` seconds from the origin (exact arc).
pub fn arc_pose(a: Action, t: f64) -> Pose {
    if a.w.abs() < 1e-12 {
        return Pose::new(a.v * t, 0.0, 0.0);
    }
    let th = a.w * t;
    let r = a.v / a.w;
    Pose::new(r * th.sin(), r * (1.0 - th.cos()), th)
}

/// Whether the widened footprint, grown by `grow` on every side, touches any
/// point while it moves along the commanded arc for the travel distance the
/// safety layer budgets. Sampled every 2.5 mm of travel and 0.125° of
/// heading. A command with `v = 0` sweeps a full turn.
pub fn swept_unsafe(points: &[Point2], a: Action, cfg: &SafetyConfig, grow: f64) -> bool {
    let hl = 0.5 * cfg.footprint.length + grow;
    let hw = 0.5 * cfg.footprint.width + cfg.margin + grow;
    let inside = |pose: &Pose| {
        points.iter().any(|p| {
            let l = pose.to_local(*p);
            l.x.abs() <= hl && l.y.abs() <= hw
        })
    };
    if a.v.abs() <= 1e-6 {
        let n = (std::f64::consts::TAU / 0.125f64.to_radians()).ceil() as usize;
        return (0..=n).any(|k| inside(&Pose::new(0.0, 0.0, std::f64::consts::TAU * k as f64 / n as f64)));
    }
    let travel = cfg.travel(a.v);
    let duration = travel / a.v.abs();
    let turn = a.w.abs() * duration;
    let n = ((travel / 0.0025).ceil().max((turn / 0.125f64.to_radians()).ceil()) as usize).max(1);
    (0..=n).any(|k| inside(&arc_pose(a, duration * k as f64 / n as f64)))
}

/// Whether some point lies within `band` of the swept region's boundary.
pub fn near_boundary(points: &[Point2], a: Action, cfg: &SafetyConfig, band: f64) -> bool {
    points
        .iter()
        .any(|p| swept_unsafe(&[*p], a, cfg, band) != swept_unsafe(&[*p], a, cfg, -band))
}

/// Dijkstra over the 8-connected grid, returning the optimal cost in meters
/// computed from the straight/diagonal move counts of the best path.
/// Diagonal moves are allowed unless both orthogonal neighbours are lethal.
pub fn dijkstra_cost(cm: &Costmap, start: Cell, goal: Cell) -> Option<f64> {
    if cm.is_lethal(start) || cm.is_lethal(goal) {
        return None;
    }
    let w = cm.width;
    let key = |s: u32, d: u32| s as f64 + d as f64 * std::f64::consts::SQRT_2;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; w * cm.height];
    let mut heap = BinaryHeap::new();
    best[start.1 * w + start.0] = Some((0, 0));
    heap.push(Reverse((Ordered(0.0), 0u32, 0u32, start)));
    while let Some(Reverse((Ordered(c), s, d, cell))) = heap.pop() {
        if best[cell.1 * w + cell.0].is_some_and(|(bs, bd)| key(bs, bd) < c) {
            continue;
        }
        if cell == goal {
            return Some(key(s, d) * cm.resolution);
        }
        for dc in -1isize..=1 {
            for dr in -1isize..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let (nc, nr) = (cell.0 as isize + dc, cell.1 as isize + dr);
                if nc < 0 || nr < 0 || nc >= w as isize || nr >= cm.height as isize {
                    continue;
                }
                let next = (nc as usize, nr as usize);
                if cm.is_lethal(next) {
                    continue;
                }
                let diagonal = dc != 0 && dr != 0;
                if diagonal && cm.is_lethal((nc as usize, cell.1)) && cm.is_lethal((cell.0, nr as usize)) {
                    continue;
                }
                let (ns, nd) = if diagonal { (s, d + 1) } else { (s + 1, d) };
                let nk = key(ns, nd);
                let slot = &mut best[next.1 * w + next.0];
                if slot.is_none_or(|(bs, bd)| nk < key(bs, bd)) {
                    *slot = Some((ns, nd));
                    heap.push(Reverse((Ordered(nk), ns, nd, next)));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);
impl Eq for Ordered {}
impl PartialOrd for Ordered {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ordered {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Random occupancy grid with border walls.
pub fn random_world<R: Rng>(rng: &mut R, size: usize, fill: f64) -> World {
    let mut w = World::empty("random", size, size, 0.15);
    for r in 0..size {
        for c in 0..size {
            let border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
            w.set_occupied(c, r, border || rng.random::<f64>() < fill);
        }
    }
    w
}

/// Closest path point (in the robot frame) at least `lookahead` away,
/// smallest index on ties, or the last point when none qualifies.
pub fn local_goal_reference(path: &[Point2], pose: &Pose, lookahead: f64) -> (Point2, bool) {
    let local: Vec<Point2> = path.iter().map(|p| pose.to_local(*p)).collect();
    let mut idx = None;
    for (i, p) in local.iter().enumerate() {
        if p.norm() >= lookahead && idx.is_none_or(|j: usize| p.norm() < local[j].norm()) {
            idx = Some(i);
        }
    }
    match idx {
        Some(i) => (local[i], false),
        None => (*local.last().unwrap(), true),
    }
}
