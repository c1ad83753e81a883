//! Policies that map an observation to a velocity command, and the
//! dynamic-window reference expert used to produce demonstrations.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Point2, Pose};
use crate::planning::{extract_local_goal, LocalGoal};
use crate::safety::scan_to_points;
use crate::sim::{integrate_arc, Footprint, LidarConfig, LidarScan, VelocityLimits, CONTROL_DT};

/// Velocity command `(v, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub w: f64,
}

impl Action {
    pub const fn new(v: f64, w: f64) -> Self {
        Action { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

/// What a policy sees at one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub scan: LidarScan,
    pub lidar: LidarConfig,
    pub local_goal: LocalGoal,
    /// Remaining global path in the robot frame. Privileged information for
    /// experts; learned policies ignore it. May be empty.
    pub path: Vec<Point2>,
    /// Current measured `(v, ω)`.
    pub velocity: Action,
    pub footprint: Footprint,
    pub limits: VelocityLimits,
}

pub trait Policy {
    fn name(&self) -> &str;

    fn act(&mut self, obs: &Observation) -> Result<Action>;
}

/// Always returns the same command.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub action: Action,
    pub name: String,
}

impl ScriptedPolicy {
    pub fn constant(action: Action) -> Self {
        ScriptedPolicy {
            action,
            name: "scripted".into(),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(self.action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwaConfig {
    pub n_v: usize,
    pub n_w: usize,
    /// Arc simulation horizon, s.
    pub horizon: f64,
    pub heading_weight: f64,
    pub clearance_weight: f64,
    pub velocity_weight: f64,
    /// Clearance above this counts as fully clear, m.
    pub clearance_cap: f64,
    /// Angular speed of the fallback rotation, rad/s.
    pub recover_w: f64,
    /// Footprint inflation for the arc collision test, m.
    pub collision_margin: f64,
    /// Distance along the path of the point the expert steers toward, m.
    /// Used instead of the observation's local goal when a path is given.
    pub goal_lookahead: f64,
    /// Period the dynamic window is computed over, s.
    pub window_dt: f64,
}

impl Default for DwaConfig {
    fn default() -> Self {
        DwaConfig {
            n_v: 11,
            n_w: 21,
            horizon: 1.5,
            heading_weight: 0.8,
            clearance_weight: 0.2,
            velocity_weight: 0.2,
            clearance_cap: 0.5,
            recover_w: 1.0,
            collision_margin: 0.05,
            goal_lookahead: 0.4,
            window_dt: CONTROL_DT,
        }
    }
}

/// Score breakdown of one window sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcEvaluation {
    pub action: Action,
    pub admissible: bool,
    pub heading: f64,
    pub clearance: f64,
    pub score: f64,
}

/// Reachable velocity window `(v_lo, v_hi, w_lo, w_hi)`. Forward motion only.
pub fn dynamic_window(current: Action, limits: &VelocityLimits, dt: f64) -> (f64, f64, f64, f64) {
    let v_lo = (current.v - limits.a_max * dt).max(0.0).min(limits.v_max);
    let v_hi = (current.v + limits.a_max * dt).min(limits.v_max).max(v_lo);
    let w_lo = (current.w - limits.alpha_max * dt).max(-limits.w_max);
    let w_hi = (current.w + limits.alpha_max * dt).min(limits.w_max);
    let (w_lo, w_hi) = if w_lo <= w_hi { (w_lo, w_hi) } else { (w_hi, w_lo) };
    (v_lo, v_hi, w_lo, w_hi)
}

/// `n` samples over `[lo, hi]` built around the midpoint, so that
/// negating the interval negates the samples exactly.
fn symmetric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    let c = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let m = (n - 1) as i64;
    (0..n as i64)
        .map(|k| c + half * ((2 * k - m) as f64 / m as f64))
        .collect()
}

/// Poses along the constant arc up to `t_end`, spaced at most 5 cm /
/// `dtheta` rad apart.
fn arc_samples(v: f64, w: f64, t_end: f64, dtheta: f64) -> Vec<(f64, Pose)> {
    let n = ((v.abs() * t_end / 0.05).max(w.abs() * t_end / dtheta).ceil() as usize).max(1);
    (1..=n)
        .map(|k| {
            let t = t_end * k as f64 / n as f64;
            (t, integrate_arc(Pose::default(), v, w, t))
        })
        .collect()
}

/// Poses while ramping from `current` to the command `(v, ω)` over `hold`
/// seconds at the acceleration limits, then braking both components to
/// zero.
fn braking_samples(current: Action, v: f64, w: f64, limits: &VelocityLimits, hold: f64) -> Vec<(f64, Pose)> {
    const STEP: f64 = 0.02;
    let toward = |from: f64, to: f64, rate: f64, t: f64| {
        if to >= from {
            (from + rate * t).min(to)
        } else {
            (from - rate * t).max(to)
        }
    };
    let mut out = Vec::new();
    let mut pose = Pose::default();
    let n = (hold / STEP).ceil().max(1.0) as usize;
    for k in 0..n {
        let (t0, t1) = (hold * k as f64 / n as f64, hold * (k + 1) as f64 / n as f64);
        let tm = 0.5 * (t0 + t1);
        let vm = toward(current.v, v, limits.a_max, tm);
        let wm = toward(current.w, w, limits.alpha_max, tm);
        pose = integrate_arc(pose, vm, wm, t1 - t0);
        out.push((t1, pose));
    }
    let t_stop = (v.abs() / limits.a_max).max(w.abs() / limits.alpha_max);
    let n = (t_stop / STEP).ceil() as usize;
    for k in 0..n {
        let (t0, t1) = (t_stop * k as f64 / n as f64, t_stop * (k + 1) as f64 / n as f64);
        let tm = 0.5 * (t0 + t1);
        let vm = toward(v, 0.0, limits.a_max, tm);
        let wm = toward(w, 0.0, limits.alpha_max, tm);
        pose = integrate_arc(pose, vm, wm, t1 - t0);
        out.push((hold + t1, pose));
    }
    out
}

/// Distance from a local point to the rectangle, 0 inside.
fn rect_distance(p: Point2, hl: f64, hw: f64) -> f64 {
    let dx = (p.x.abs() - hl).max(0.0);
    let dy = (p.y.abs() - hw).max(0.0);
    dx.hypot(dy)
}

/// Uniform bucket grid over robot-frame points for radius queries.
struct PointGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<Point2>>,
}

impl PointGrid {
    fn new(points: &[Point2], cell: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for p in points {
            let i = ((p.x - x0) / cell).floor() as usize;
            let j = ((p.y - y0) / cell).floor() as usize;
            buckets[j.min(ny - 1) * nx + i.min(nx - 1)].push(*p);
        }
        PointGrid { x0, y0, cell, nx, ny, buckets }
    }

    /// Visit every point in buckets overlapping the square of half-size
    /// `r` around `c`. Stops early when `f` returns false.
    fn visit(&self, c: Point2, r: f64, mut f: impl FnMut(Point2) -> bool) {
        let lo = |v: f64, o: f64| ((v - r - o) / self.cell).floor().max(0.0) as usize;
        let hi = |v: f64, o: f64, n: usize| {
            let k = ((v + r - o) / self.cell).floor();
            if k < 0.0 {
                None
            } else {
                Some((k as usize).min(n - 1))
            }
        };
        let (Some(i1), Some(j1)) = (hi(c.x, self.x0, self.nx), hi(c.y, self.y0, self.ny)) else {
            return;
        };
        for j in lo(c.y, self.y0)..=j1 {
            for i in lo(c.x, self.x0)..=i1 {
                for p in &self.buckets[j * self.nx + i] {
                    if !f(*p) {
                        return;
                    }
                }
            }
        }
    }
}

/// First contact time along the sampled arc (infinity if none) and the
/// minimum footprint-to-point distance before it, capped.
fn sweep_clearance(samples: &[(f64, Pose)], grid: &PointGrid, hl: f64, hw: f64, cap: f64) -> (f64, f64) {
    let body = hl.hypot(hw);
    let mut best2 = cap * cap;
    for &(t, pose) in samples {
        let (sn, cs) = pose.theta.sin_cos();
        let reach = body + best2.sqrt();
        let reach2 = reach * reach;
        let mut hit = false;
        grid.visit(pose.position(), reach, |p| {
            let dx = p.x - pose.x;
            let dy = p.y - pose.y;
            // the rectangle lies within `body` of the pose
            if dx * dx + dy * dy > reach2 {
                return true;
            }
            let ex = ((cs * dx + sn * dy).abs() - hl).max(0.0);
            let ey = ((-sn * dx + cs * dy).abs() - hw).max(0.0);
            let d2 = ex * ex + ey * ey;
            if d2 <= 0.0 {
                hit = true;
                return false;
            }
            best2 = best2.min(d2);
            true
        });
        if hit {
            return (t, 0.0);
        }
    }
    (f64::INFINITY, best2.sqrt())
}

/// Evaluate every `(v, ω)` in the discretized window against robot-frame
/// obstacle points and the robot-frame goal point.
pub fn evaluate_window(
    points: &[Point2],
    goal: Point2,
    current: Action,
    footprint: &Footprint,
    limits: &VelocityLimits,
    cfg: &DwaConfig,
) -> Vec<ArcEvaluation> {
    let (v_lo, v_hi, w_lo, w_hi) = dynamic_window(current, limits, cfg.window_dt);
    let vs = symmetric_grid(v_lo, v_hi, cfg.n_v);
    let ws = symmetric_grid(w_lo, w_hi, cfg.n_w);
    // An obstacle already inside the margin shrinks it to half the current
    // gap, so the robot may still move but never closes in further.
    let gap = points
        .iter()
        .map(|p| rect_distance(*p, 0.5 * footprint.length, 0.5 * footprint.width))
        .fold(f64::INFINITY, f64::min);
    let margin = if gap >= cfg.collision_margin {
        cfg.collision_margin
    } else {
        0.5 * gap
    };
    let hl = 0.5 * footprint.length + margin;
    let hw = 0.5 * footprint.width + margin;
    let body = hl.hypot(hw);
    let mut out = Vec::with_capacity(vs.len() * ws.len());
    let reach = v_hi * cfg.horizon + body + cfg.clearance_cap;
    let near: Vec<Point2> = points.iter().filter(|p| p.norm() <= reach).copied().collect();
    let grid = PointGrid::new(&near, 0.2);
    for &v in &vs {
        for &w in &ws {
            let mut samples = vec![(0.0, Pose::default())];
            samples.extend(arc_samples(v, w, cfg.horizon, 0.1));
            let (_, clearance) = sweep_clearance(&samples, &grid, hl, hw, cfg.clearance_cap);
            // admissible if reaching the command over one period and then
            // braking at the limits stays clear
            let mut stop = vec![(0.0, Pose::default())];
            stop.extend(braking_samples(current, v, w, limits, cfg.window_dt));
            let admissible = sweep_clearance(&stop, &grid, hl, hw, 0.0).0.is_infinite();
            // heading where the robot would come to rest
            let end = stop.last().map(|s| s.1).unwrap_or_default();
            let to_goal = end.to_local(goal);
            let bearing = to_goal.y.atan2(to_goal.x);
            let heading = 1.0 - bearing.abs() / std::f64::consts::PI;
            // speed only counts when it carries the robot toward the goal
            let speed = if v_hi > 0.0 { v / v_hi * bearing.cos().max(0.0) } else { 0.0 };
            let score = cfg.heading_weight * heading
                + cfg.clearance_weight * clearance / cfg.clearance_cap
                + cfg.velocity_weight * speed;
            out.push(ArcEvaluation {
                action: Action::new(v, w),
                admissible,
                heading,
                clearance,
                score,
            });
        }
    }
    out
}

/// Higher score, then higher v, then smaller |ω|, then smaller ω.
fn better(a: &ArcEvaluation, b: &ArcEvaluation) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.action.v != b.action.v {
        return a.action.v > b.action.v;
    }
    if a.action.w.abs() != b.action.w.abs() {
        return a.action.w.abs() < b.action.w.abs();
    }
    a.action.w < b.action.w
}

/// Best admissible window sample, or `None` if nothing is admissible.
pub fn select_action(evals: &[ArcEvaluation]) -> Option<Action> {
    let mut best: Option<&ArcEvaluation> = None;
    for e in evals.iter().filter(|e| e.admissible) {
        if best.is_none_or(|b| better(e, b)) {
            best = Some(e);
        }
    }
    best.map(|e| e.action)
}

/// Rotation in place toward the side of the goal.
pub fn recovery_action(goal: Point2, cfg: &DwaConfig) -> Action {
    let w = if goal.y < 0.0 { -cfg.recover_w } else { cfg.recover_w };
    Action::new(0.0, w)
}

/// DWA decision from robot-frame points.
pub fn dwa_action_from_points(
    points: &[Point2],
    goal: Point2,
    current: Action,
    footprint: &Footprint,
    limits: &VelocityLimits,
    cfg: &DwaConfig,
) -> Action {
    let evals = evaluate_window(points, goal, current, footprint, limits, cfg);
    select_action(&evals).unwrap_or_else(|| recovery_action(goal, cfg))
}

/// Point the expert steers toward: the path point at `goal_lookahead`, or
/// the observation's local goal when there is no path.
pub fn steering_target(obs: &Observation, cfg: &DwaConfig) -> Point2 {
    match extract_local_goal(&obs.path, &Pose::default(), cfg.goal_lookahead) {
        Ok(g) if !obs.path.is_empty() => g.point,
        _ => obs.local_goal.point,
    }
}

pub fn dwa_expert_action(obs: &Observation, cfg: &DwaConfig) -> Action {
    let points = scan_to_points(&obs.scan, &obs.lidar);
    dwa_action_from_points(
        &points,
        steering_target(obs, cfg),
        obs.velocity,
        &obs.footprint,
        &obs.limits,
        cfg,
    )
}

/// Reference expert.
#[derive(Debug, Clone, Default)]
pub struct DwaExpert {
    pub cfg: DwaConfig,
}

impl Policy for DwaExpert {
    fn name(&self) -> &str {
        "dwa"
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        Ok(dwa_expert_action(obs, &self.cfg))
    }
}
