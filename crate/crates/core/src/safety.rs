//! Geometric safety layer: checks a velocity command against LiDAR points
//! in the robot frame and substitutes a recovery action when the region
//! swept by the footprint contains an obstacle.
//!
//! Linear motion sweeps a rectangle ahead of (or behind) the robot. Radial
//! motion sweeps an annular sector around the turn center bounded by the
//! inner radius `R - h/2` (clamped at 0) and the outer radius
//! `sqrt((R + h/2)² + (l/2)²)`; within that annulus a point is tested
//! exactly against the bearings the rotating footprint covers at the
//! point's radius. The travel distance in both cases is `|v|·Δt` plus the
//! braking distance `v²/(2a)`. The footprint is widened laterally by
//! `margin` on each side.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::expert::Action;
use crate::geometry::Point2;
use crate::sim::{Footprint, LidarConfig, LidarScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub footprint: Footprint,
    /// |ω| at or below this counts as straight motion, rad/s.
    pub eps_w: f64,
    /// Look-ahead horizon, s.
    pub horizon: f64,
    /// Deceleration used for the braking extension of the ROI, m/s².
    pub braking_decel: f64,
    /// Lateral inflation of the footprint, m.
    pub margin: f64,
    /// Angular speed of the rotate-in-place recovery, rad/s.
    pub recover_w: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            footprint: Footprint::default(),
            eps_w: 1e-3,
            horizon: 1.0,
            braking_decel: 2.0,
            margin: 0.05,
            recover_w: 1.0,
        }
    }
}

impl SafetyConfig {
    /// Distance travelled along the path within the horizon plus braking.
    pub fn travel(&self, v: f64) -> f64 {
        v.abs() * self.horizon + v * v / (2.0 * self.braking_decel)
    }

    fn half_length(&self) -> f64 {
        0.5 * self.footprint.length
    }

    fn half_width(&self) -> f64 {
        0.5 * self.footprint.width + self.margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Stationary,
    Linear,
    Radial,
    RotationInPlace,
}

/// Region the verdict was computed over, in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Roi {
    None,
    Rectangle {
        x_min: f64,
        x_max: f64,
        half_width: f64,
    },
    AnnularSector {
        center: Point2,
        r_inner: f64,
        r_outer: f64,
        /// Bearing of the robot origin seen from the center, rad.
        start_bearing: f64,
        /// Signed swept angle, rad.
        sweep: f64,
    },
    Disk {
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub safe: bool,
    pub class: MotionClass,
    pub offending: Vec<Point2>,
    pub region: Roi,
}

impl SafetyVerdict {
    fn new(class: MotionClass, offending: Vec<Point2>, region: Roi) -> Self {
        SafetyVerdict {
            safe: offending.is_empty(),
            class,
            offending,
            region,
        }
    }

    /// Outline of the ROI as a closed polygon, for display.
    pub fn roi_polygon(&self) -> Vec<Point2> {
        match self.region {
            Roi::None => Vec::new(),
            Roi::Rectangle {
                x_min,
                x_max,
                half_width,
            } => vec![
                Point2::new(x_min, -half_width),
                Point2::new(x_max, -half_width),
                Point2::new(x_max, half_width),
                Point2::new(x_min, half_width),
            ],
            Roi::Disk { radius } => (0..24)
                .map(|k| {
                    let a = TAU * k as f64 / 24.0;
                    Point2::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
            Roi::AnnularSector {
                center,
                r_inner,
                r_outer,
                start_bearing,
                sweep,
            } => {
                let n = 16;
                let at = |r: f64, k: usize| {
                    let a = start_bearing + sweep * k as f64 / n as f64;
                    Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
                };
                let mut poly: Vec<Point2> = (0..=n).map(|k| at(r_outer, k)).collect();
                poly.extend((0..=n).rev().map(|k| at(r_inner, k)));
                poly
            }
        }
    }
}

/// Convert a scan into robot-frame points, dropping beams without a return.
pub fn scan_to_points(scan: &LidarScan, lidar: &LidarConfig) -> Vec<Point2> {
    scan.ranges
        .iter()
        .enumerate()
        .filter(|(_, &r)| r.is_finite() && r < lidar.max_range)
        .map(|(i, &r)| {
            let (s, c) = lidar.beam_angle(i).sin_cos();
            Point2::new(lidar.mount.x + r * c, lidar.mount.y + r * s)
        })
        .collect()
}

pub fn classify_motion(action: Action, eps_w: f64) -> MotionClass {
    let still = action.v.abs() <= 1e-6;
    let straight = action.w.abs() <= eps_w;
    match (still, straight) {
        (true, true) => MotionClass::Stationary,
        (false, true) => MotionClass::Linear,
        (true, false) => MotionClass::RotationInPlace,
        (false, false) => MotionClass::Radial,
    }
}

/// Straight-line check: a point is offending when it lies on the side the
/// robot moves toward, within the widened body width, and no further than
/// the body half-length plus the travel distance.
pub fn check_linear(points: &[Point2], action: Action, cfg: &SafetyConfig) -> SafetyVerdict {
    let reach = cfg.half_length() + cfg.travel(action.v);
    let hw = cfg.half_width();
    let offending = points
        .iter()
        .filter(|p| p.x * action.v > 0.0 && p.y.abs() <= hw && p.x.abs() <= reach)
        .copied()
        .collect();
    let region = if action.v >= 0.0 {
        Roi::Rectangle {
            x_min: 0.0,
            x_max: reach,
            half_width: hw,
        }
    } else {
        Roi::Rectangle {
            x_min: -reach,
            x_max: 0.0,
            half_width: hw,
        }
    };
    SafetyVerdict::new(MotionClass::Linear, offending, region)
}

/// Inner and outer turning radii of the footprint for turn radius `r`.
pub fn turning_radii(r: f64, length: f64, width: f64) -> (f64, f64) {
    let r = r.abs();
    let outer = (r + 0.5 * width).hypot(0.5 * length);
    let inner = (r - 0.5 * width).max(0.0);
    (inner, outer)
}

/// Arc check for `|v| > 0, |ω| > 0`.
pub fn check_radial(points: &[Point2], action: Action, cfg: &SafetyConfig) -> SafetyVerdict {
    let (hl, hw) = (cfg.half_length(), cfg.half_width());
    let radius = (action.v / action.w).abs();
    let (r_inner, r_outer) = turning_radii(radius, 2.0 * hl, 2.0 * hw);
    // Canonical frame: forward motion turning left. Reversing mirrors x,
    // a right turn mirrors y.
    let flip_x = action.v < 0.0;
    let flip_y = (action.w < 0.0) != flip_x;
    let sweep = cfg.travel(action.v) / radius;
    let center = Point2::new(0.0, radius);
    let offending = points
        .iter()
        .filter(|p| {
            let q = Point2::new(
                if flip_x { -p.x } else { p.x },
                if flip_y { -p.y } else { p.y },
            );
            let d = Point2::new(q.x - center.x, q.y - center.y);
            let rho = d.norm();
            if rho < r_inner || rho > r_outer {
                return false;
            }
            swept_by_rotation(d, rho, radius, hl, hw, sweep)
        })
        .copied()
        .collect();
    let actual_center = Point2::new(0.0, action.v / action.w);
    let start_bearing = if actual_center.y > 0.0 { -PI / 2.0 } else { PI / 2.0 };
    SafetyVerdict::new(
        MotionClass::Radial,
        offending,
        Roi::AnnularSector {
            center: actual_center,
            r_inner,
            r_outer,
            start_bearing,
            sweep: sweep * action.w.signum(),
        },
    )
}

/// Whether a point at offset `d` (|d| = `rho`) from the turn center `(0, R)`
/// is covered by the rectangle `[-hl,hl]×[-hw,hw]` rotating counter-clockwise
/// about the center by any angle in `[0, sweep]`.
fn swept_by_rotation(d: Point2, rho: f64, radius: f64, hl: f64, hw: f64, sweep: f64) -> bool {
    if sweep >= TAU {
        return true;
    }
    let beta = d.y.atan2(d.x);
    // Rotating the body by s equals rotating the point back by s: the point
    // visits bearings [beta - sweep, beta] on the circle of radius rho.
    // Collect the bearings where that circle crosses the rectangle edges.
    let mut cuts: Vec<f64> = Vec::with_capacity(8);
    let cy = radius;
    for &x in &[-hl, hl] {
        // vertical edge x = const, y in [-hw, hw]
        let dy2 = rho * rho - x * x;
        if dy2 >= 0.0 {
            let dy = dy2.sqrt();
            for y in [cy - dy, cy + dy] {
                // circle point offset from center is (x, y - cy)
                if (-hw..=hw).contains(&y) {
                    cuts.push((y - cy).atan2(x));
                }
            }
        }
    }
    for &y in &[-hw, hw] {
        let off = y - cy;
        let dx2 = rho * rho - off * off;
        if dx2 >= 0.0 {
            let dx = dx2.sqrt();
            for x in [-dx, dx] {
                if (-hl..=hl).contains(&x) {
                    cuts.push(off.atan2(x));
                }
            }
        }
    }
    let inside_at = |a: f64| {
        let x = rho * a.cos();
        let y = cy + rho * a.sin();
        x.abs() <= hl && y.abs() <= hw
    };
    // A window endpoint inside the body settles it.
    if inside_at(beta) || inside_at(beta - sweep) {
        return true;
    }
    // Otherwise the window must contain a boundary crossing.
    let lo = beta - sweep;
    cuts.iter().any(|&a| {
        let k = ((lo - a) / TAU).ceil();
        let a = a + k * TAU;
        a >= lo && a <= beta
    })
}

/// Rotation in place: circumscribed disk of the widened footprint.
pub fn check_rotation(points: &[Point2], cfg: &SafetyConfig) -> SafetyVerdict {
    let radius = cfg.half_length().hypot(cfg.half_width());
    let offending = points.iter().filter(|p| p.norm() <= radius).copied().collect();
    SafetyVerdict::new(MotionClass::RotationInPlace, offending, Roi::Disk { radius })
}

pub fn check_action(points: &[Point2], action: Action, cfg: &SafetyConfig) -> SafetyVerdict {
    match classify_motion(action, cfg.eps_w) {
        MotionClass::Stationary => SafetyVerdict::new(MotionClass::Stationary, Vec::new(), Roi::None),
        MotionClass::Linear => check_linear(points, action, cfg),
        MotionClass::Radial => check_radial(points, action, cfg),
        MotionClass::RotationInPlace => check_rotation(points, cfg),
    }
}

/// Pass a safe proposal through unchanged; otherwise try half speed on the
/// same curvature, then rotation in place toward `goal`, then a full stop.
pub fn filter_action(points: &[Point2], proposed: Action, goal: Point2, cfg: &SafetyConfig) -> (Action, SafetyVerdict) {
    let verdict = check_action(points, proposed, cfg);
    if verdict.safe {
        return (proposed, verdict);
    }
    let turn = if goal.y < 0.0 { -cfg.recover_w } else { cfg.recover_w };
    let candidates = [
        Action::new(0.5 * proposed.v, 0.5 * proposed.w),
        Action::new(0.0, turn),
    ];
    for cand in candidates {
        let v = check_action(points, cand, cfg);
        if v.safe {
            return (cand, v);
        }
    }
    let stop = Action::new(0.0, 0.0);
    (stop, check_action(points, stop, cfg))
}
