//! Differential-drive kinematics, LiDAR raycasting, footprint collision and
//! odometry drift.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::Action;
use crate::geometry::{normalize_angle, Point2, Pose};
use crate::worldgen::World;

/// Control period, seconds.
pub const CONTROL_DT: f64 = 0.1;
/// Physics substep, seconds.
pub const PHYSICS_DT: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub w: f64,
    pub t: f64,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        RobotState {
            pose,
            ..Default::default()
        }
    }
}

/// Rectangular body centered on the axle midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    /// Extent along the robot x axis, m.
    pub length: f64,
    /// Extent along the robot y axis, m.
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Footprint {
            length: 0.50,
            width: 0.43,
        }
    }
}

impl Footprint {
    pub fn circumscribed_radius(&self) -> f64 {
        (0.5 * self.length).hypot(0.5 * self.width)
    }

    /// Corners in the robot frame, counter-clockwise from front-left.
    pub fn corners(&self) -> [Point2; 4] {
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        [
            Point2::new(hl, hw),
            Point2::new(-hl, hw),
            Point2::new(-hl, -hw),
            Point2::new(hl, -hw),
        ]
    }

    pub fn contains_local(&self, p: Point2) -> bool {
        p.x.abs() <= 0.5 * self.length && p.y.abs() <= 0.5 * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub beams: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    pub max_range: f64,
    /// Sensor origin in the robot frame.
    pub mount: Point2,
}

impl Default for LidarConfig {
    fn default() -> Self {
        let half_fov = 135f64.to_radians();
        LidarConfig {
            beams: 720,
            angle_min: -half_fov,
            angle_max: half_fov,
            max_range: 20.0,
            mount: Point2::default(),
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beams < 2 || !(self.angle_max > self.angle_min) || !(self.max_range > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid lidar config {self:?}")));
        }
        Ok(())
    }

    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * (self.angle_max - self.angle_min) / (self.beams - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub v_max: f64,
    pub w_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for VelocityLimits {
    // 3.14 is the platform limit, not π
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        VelocityLimits {
            v_max: 2.0,
            w_max: 3.14,
            a_max: 2.0,
            alpha_max: 6.0,
        }
    }
}

impl VelocityLimits {
    pub fn with_v_max(self, v_max: f64) -> Self {
        VelocityLimits { v_max, ..self }
    }

    pub fn clamp(&self, a: Action) -> Action {
        Action::new(
            a.v.clamp(-self.v_max, self.v_max),
            a.w.clamp(-self.w_max, self.w_max),
        )
    }
}

/// Advance a pose along a constant-twist arc.
pub fn integrate_arc(pose: Pose, v: f64, w: f64, dt: f64) -> Pose {
    if w.abs() < 1e-9 {
        let (s, c) = pose.theta.sin_cos();
        Pose::new(pose.x + v * c * dt, pose.y + v * s * dt, pose.theta)
    } else {
        let th1 = pose.theta + w * dt;
        let r = v / w;
        Pose::new(
            pose.x + r * (th1.sin() - pose.theta.sin()),
            pose.y - r * (th1.cos() - pose.theta.cos()),
            normalize_angle(th1),
        )
    }
}

/// Clamp the command to the velocity and acceleration limits, then advance
/// the pose by exact arc integration over `dt`.
pub fn step_dynamics(state: &RobotState, cmd: Action, dt: f64, limits: &VelocityLimits) -> RobotState {
    let target = limits.clamp(cmd);
    let dv = limits.a_max * dt;
    let dw = limits.alpha_max * dt;
    let v = target.v.clamp(state.v - dv, state.v + dv);
    let w = target.w.clamp(state.w - dw, state.w + dw);
    RobotState {
        pose: integrate_arc(state.pose, v, w, dt),
        v,
        w,
        t: state.t + dt,
    }
}

/// Smallest reported range when the sensor origin is inside an obstacle.
const MIN_RANGE: f64 = 1e-3;

/// Cast one ray through the grid with a DDA traversal. Cells outside the
/// grid never return a hit.
pub fn cast_ray(world: &World, origin: Point2, angle: f64, max_range: f64) -> f64 {
    let res = world.resolution;
    let (dy, dx) = angle.sin_cos();
    let mut cx = (origin.x / res).floor() as isize;
    let mut cy = (origin.y / res).floor() as isize;
    let inside = |cx: isize, cy: isize| {
        cx >= 0 && cy >= 0 && cx < world.width as isize && cy < world.height as isize
    };
    if inside(cx, cy) && world.is_occupied(cx as usize, cy as usize) {
        return MIN_RANGE;
    }
    let step_x: isize = if dx > 0.0 { 1 } else { -1 };
    let step_y: isize = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |c: isize, step: isize| (c + (step > 0) as isize) as f64 * res;
    let mut t_max_x = if dx != 0.0 {
        (next_boundary(cx, step_x) - origin.x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        (next_boundary(cy, step_y) - origin.y) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };
    loop {
        let t = if t_max_x < t_max_y {
            cx += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            cy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t >= max_range || !inside(cx, cy) {
            return max_range;
        }
        if world.is_occupied(cx as usize, cy as usize) {
            return t.max(MIN_RANGE);
        }
    }
}

/// Simulated 2D LiDAR scan at `pose`.
pub fn render_scan(world: &World, pose: &Pose, cfg: &LidarConfig) -> Result<LidarScan> {
    cfg.validate()?;
    let origin = pose.to_world(cfg.mount);
    if !world.contains(origin) {
        return Err(Error::OutOfBounds {
            x: origin.x,
            y: origin.y,
        });
    }
    let ranges = (0..cfg.beams)
        .map(|i| cast_ray(world, origin, pose.theta + cfg.beam_angle(i), cfg.max_range))
        .collect();
    Ok(LidarScan { ranges })
}

/// Whether the oriented footprint rectangle at `pose` overlaps an occupied
/// cell or leaves the grid.
pub fn footprint_collides(world: &World, pose: &Pose, fp: &Footprint) -> bool {
    let corners = fp.corners().map(|c| pose.to_world(c));
    let (w_m, h_m) = world.size_m();
    if corners
        .iter()
        .any(|c| !(c.x >= 0.0 && c.y >= 0.0 && c.x <= w_m && c.y <= h_m))
    {
        return true;
    }
    let res = world.resolution;
    let min_x = corners.iter().map(|c| c.x).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|c| c.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = corners.iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
    let max_y = corners.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max);
    let c0 = ((min_x / res).floor() as usize).min(world.width - 1);
    let c1 = ((max_x / res).floor() as usize).min(world.width - 1);
    let r0 = ((min_y / res).floor() as usize).min(world.height - 1);
    let r1 = ((max_y / res).floor() as usize).min(world.height - 1);
    let (s, c) = pose.theta.sin_cos();
    let (hl, hw) = (0.5 * fp.length, 0.5 * fp.width);
    for row in r0..=r1 {
        for col in c0..=c1 {
            if world.is_occupied(col, row)
                && obb_overlaps_cell(pose, s, c, hl, hw, col, row, res)
            {
                return true;
            }
        }
    }
    false
}

/// Separating-axis test between the oriented rectangle and one grid cell.
#[allow(clippy::too_many_arguments)]
fn obb_overlaps_cell(
    pose: &Pose,
    s: f64,
    c: f64,
    hl: f64,
    hw: f64,
    col: usize,
    row: usize,
    res: f64,
) -> bool {
    let half = 0.5 * res;
    let center = Point2::new((col as f64 + 0.5) * res, (row as f64 + 0.5) * res);
    let d = Point2::new(center.x - pose.x, center.y - pose.y);
    // world axes
    let ext_x = hl * c.abs() + hw * s.abs();
    let ext_y = hl * s.abs() + hw * c.abs();
    if d.x.abs() > ext_x + half || d.y.abs() > ext_y + half {
        return false;
    }
    // robot axes
    let u = d.x * c + d.y * s;
    let v = -d.x * s + d.y * c;
    let cell_ext = half * (c.abs() + s.abs());
    !(u.abs() > hl + cell_ext || v.abs() > hw + cell_ext)
}

/// Standard deviations of the per-tick velocity noise seen by odometry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomNoise {
    pub v_std: f64,
    pub w_std: f64,
}

/// Dead-reckoning estimate carried across steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomDriftState {
    pub estimate: Pose,
    pub noise: OdomNoise,
    /// Velocity error held for the current control tick.
    pub draw: (f64, f64),
}

impl OdomDriftState {
    pub fn new(initial: Pose, noise: OdomNoise) -> Self {
        OdomDriftState {
            estimate: initial,
            noise,
            draw: (0.0, 0.0),
        }
    }

    /// Draw the velocity error for the next control tick.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sample = |std: f64, rng: &mut R| {
            if std > 0.0 {
                Normal::new(0.0, std).expect("std > 0").sample(rng)
            } else {
                0.0
            }
        };
        let v = sample(self.noise.v_std, rng);
        let w = sample(self.noise.w_std, rng);
        self.draw = (v, w);
    }
}

/// Integrate the velocities of `true_state` (held over the last `dt`)
/// corrupted by the current draw into the estimate.
pub fn read_odometry(true_state: &RobotState, dt: f64, drift: &mut OdomDriftState) -> Pose {
    drift.estimate = integrate_arc(
        drift.estimate,
        true_state.v + drift.draw.0,
        true_state.w + drift.draw.1,
        dt,
    );
    drift.estimate
}

/// Linearly resample a scan to `beams_out` beams over normalized beam index.
pub fn resample_scan(scan: &LidarScan, beams_out: usize) -> Result<LidarScan> {
    let n = scan.len();
    if n < 2 || beams_out < 2 {
        return Err(Error::ShapeMismatch(format!(
            "resample needs >= 2 beams, got {n} -> {beams_out}"
        )));
    }
    let last = (n - 1) as f64;
    let ranges = (0..beams_out)
        .map(|j| {
            let u = j as f64 * last / (beams_out - 1) as f64;
            let i0 = u.floor() as usize;
            if i0 >= n - 1 {
                return scan.ranges[n - 1];
            }
            let f = u - i0 as f64;
            if f == 0.0 {
                scan.ranges[i0]
            } else {
                scan.ranges[i0] * (1.0 - f) + scan.ranges[i0 + 1] * f
            }
        })
        .collect();
    Ok(LidarScan { ranges })
}

/// How a simulation step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Moved,
    Collided,
}

/// One sequential simulation session: ground truth, odometry, collision.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: World,
    pub state: RobotState,
    pub footprint: Footprint,
    pub lidar: LidarConfig,
    pub limits: VelocityLimits,
    pub odom: OdomDriftState,
    pub collided: bool,
}

impl Simulation {
    pub fn new(
        world: World,
        footprint: Footprint,
        lidar: LidarConfig,
        limits: VelocityLimits,
        odom_noise: OdomNoise,
    ) -> Self {
        let start = world.start;
        Simulation {
            world,
            state: RobotState::at(start),
            footprint,
            lidar,
            limits,
            odom: OdomDriftState::new(start, odom_noise),
            collided: false,
        }
    }

    pub fn scan(&self) -> Result<LidarScan> {
        render_scan(&self.world, &self.state.pose, &self.lidar)
    }

    pub fn odometry(&self) -> Pose {
        self.odom.estimate
    }

    /// Hold `cmd` for one control period in physics substeps; stops at the
    /// first colliding substep.
    pub fn step<R: Rng + ?Sized>(&mut self, cmd: Action, rng: &mut R) -> StepEvent {
        self.odom.resample(rng);
        let substeps = (CONTROL_DT / PHYSICS_DT).round() as usize;
        for _ in 0..substeps {
            self.state = step_dynamics(&self.state, cmd, PHYSICS_DT, &self.limits);
            read_odometry(&self.state, PHYSICS_DT, &mut self.odom);
            if footprint_collides(&self.world, &self.state.pose, &self.footprint) {
                self.collided = true;
                return StepEvent::Collided;
            }
        }
        StepEvent::Moved
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn free_limits() -> VelocityLimits {
        VelocityLimits {
            v_max: 10.0,
            w_max: 10.0,
            a_max: 1e9,
            alpha_max: 1e9,
        }
    }

    #[test]
    fn straight_line() {
        let s = step_dynamics(&RobotState::default(), Action::new(1.0, 0.0), 0.1, &free_limits());
        assert!((s.pose.x - 0.1).abs() < 1e-15);
        assert_eq!(s.pose.y, 0.0);
        assert_eq!(s.pose.theta, 0.0);
    }

    #[test]
    fn pure_rotation() {
        let start = RobotState::at(Pose::new(1.0, 2.0, 0.0));
        let s = step_dynamics(&start, Action::new(0.0, PI), 0.5, &free_limits());
        assert_eq!((s.pose.x, s.pose.y), (1.0, 2.0));
        assert!((s.pose.theta - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn quarter_arc() {
        let start = RobotState {
            v: 1.0,
            w: 1.0,
            ..Default::default()
        };
        let s = step_dynamics(&start, Action::new(1.0, 1.0), FRAC_PI_2, &free_limits());
        assert!((s.pose.x - 1.0).abs() < 1e-12);
        assert!((s.pose.y - 1.0).abs() < 1e-12);
        assert!((s.pose.theta - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn acceleration_is_bounded() {
        let limits = VelocityLimits::default();
        let s = step_dynamics(&RobotState::default(), Action::new(5.0, -5.0), 0.1, &limits);
        assert!((s.v - 0.2).abs() < 1e-12);
        assert!((s.w + 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_world_scan_is_max_range() {
        let world = World::empty("e", 20, 20, 0.1);
        let scan = render_scan(&world, &Pose::new(1.0, 1.0, 0.3), &LidarConfig::default()).unwrap();
        assert_eq!(scan.len(), 720);
        assert!(scan.ranges.iter().all(|&r| r == 20.0));
    }

    #[test]
    fn wall_ahead() {
        let mut world = World::empty("w", 40, 40, 0.1);
        for r in 0..40 {
            world.set_occupied(30, r, true);
        }
        // wall face at x = 3.0, robot at x = 2.0
        let cfg = LidarConfig {
            beams: 3,
            angle_min: -0.5,
            angle_max: 0.5,
            ..Default::default()
        };
        let scan = render_scan(&world, &Pose::new(2.0, 2.05, 0.0), &cfg).unwrap();
        assert!((scan.ranges[1] - 1.0).abs() <= 0.1);
    }

    #[test]
    fn scan_outside_world() {
        let world = World::empty("e", 10, 10, 0.1);
        assert!(matches!(
            render_scan(&world, &Pose::new(-0.1, 0.5, 0.0), &LidarConfig::default()),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn collision_basic() {
        let mut world = World::empty("c", 40, 40, 0.1);
        let fp = Footprint::default();
        assert!(!footprint_collides(&world, &Pose::new(2.0, 2.0, 0.4), &fp));
        world.set_occupied(20, 20, true);
        assert!(footprint_collides(&world, &Pose::new(2.05, 2.05, 0.4), &fp));
        // near the grid edge
        assert!(footprint_collides(&world, &Pose::new(0.2, 2.0, 0.0), &fp));
    }

    #[test]
    fn lateral_clearance() {
        let mut world = World::empty("c", 40, 40, 0.1);
        for c in 0..40 {
            world.set_occupied(c, 30, true); // wall bottom face at y = 3.0
        }
        let fp = Footprint::default();
        let clear = 3.0 - fp.width / 2.0 - 0.01;
        let hit = 3.0 - fp.width / 2.0 + 0.01;
        assert!(!footprint_collides(&world, &Pose::new(2.0, clear, 0.0), &fp));
        assert!(footprint_collides(&world, &Pose::new(2.0, hit, 0.0), &fp));
    }

    #[test]
    fn zero_noise_odometry_is_exact() {
        let world = World::empty("o", 100, 100, 0.1);
        let mut sim = Simulation::new(
            World {
                start: Pose::new(2.0, 2.0, 0.1),
                ..world
            },
            Footprint::default(),
            LidarConfig::default(),
            VelocityLimits::default(),
            OdomNoise::default(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..30 {
            sim.step(Action::new(0.8, 0.6 * (k as f64 * 0.3).sin()), &mut rng);
            assert_eq!(sim.odometry(), sim.state.pose);
        }
    }

    #[test]
    fn resample_identity_and_constant() {
        let scan = LidarScan {
            ranges: vec![1.0, 2.0, 5.0, 3.0],
        };
        assert_eq!(resample_scan(&scan, 4).unwrap(), scan);
        let flat = LidarScan {
            ranges: vec![2.5; 7],
        };
        let r = resample_scan(&flat, 19).unwrap();
        assert!(r.ranges.iter().all(|&x| (x - 2.5).abs() < 1e-15));
        assert!(resample_scan(&flat, 1).is_err());
    }

    #[test]
    fn resample_ramp() {
        let n_in = 1081;
        let scan = LidarScan {
            ranges: (0..n_in).map(|i| i as f64 / (n_in - 1) as f64).collect(),
        };
        let out = resample_scan(&scan, 720).unwrap();
        assert_eq!(out.ranges[0], 0.0);
        assert_eq!(out.ranges[719], 1.0);
        for (j, r) in out.ranges.iter().enumerate() {
            assert!((r - j as f64 / 719.0).abs() < 1e-6);
        }
    }
}
