mod common;

use std::f64::consts::PI;

use common::oracles::random_world;
use lics::expert::Action;
use lics::geometry::{Point2, Pose};
use lics::sim::{
    cast_ray, footprint_collides, integrate_arc, read_odometry, render_scan, resample_scan, step_dynamics, Footprint,
    LidarConfig, LidarScan, OdomDriftState, OdomNoise, RobotState, Simulation, StepEvent, VelocityLimits,
};
use lics::worldgen::World;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// March along the ray in 0.5 mm steps; out-of-grid means no return.
fn march(world: &World, origin: Point2, angle: f64, max_range: f64) -> f64 {
    let step = 5e-4;
    let (s, c) = angle.sin_cos();
    let mut t = 0.0;
    while t < max_range {
        let p = Point2::new(origin.x + t * c, origin.y + t * s);
        match world.cell_of(p) {
            None => return max_range,
            Some((col, row)) if world.is_occupied(col, row) => return t,
            _ => {}
        }
        t += step;
    }
    max_range
}

fn touches_occupied(world: &World, origin: Point2, angle: f64, t: f64) -> bool {
    let res = world.resolution;
    let p = Point2::new(origin.x + t * angle.cos(), origin.y + t * angle.sin());
    let (c0, r0) = ((p.x / res).floor() as isize, (p.y / res).floor() as isize);
    (c0 - 1..=c0 + 1).any(|c| {
        (r0 - 1..=r0 + 1).any(|r| {
            c >= 0
                && r >= 0
                && (c as usize) < world.width
                && (r as usize) < world.height
                && world.is_occupied(c as usize, r as usize)
                && p.x >= c as f64 * res - 1e-9
                && p.x <= (c + 1) as f64 * res + 1e-9
                && p.y >= r as f64 * res - 1e-9
                && p.y <= (r + 1) as f64 * res + 1e-9
        })
    })
}

#[test]
fn ray_cast_matches_ray_march() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hits = 0;
    for _ in 0..40 {
        let world = random_world(&mut rng, 30, 0.15);
        let (w, h) = world.size_m();
        for _ in 0..50 {
            let o = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            if world.cell_of(o).is_none_or(|(c, r)| world.is_occupied(c, r)) {
                continue;
            }
            let a = rng.random_range(-PI..PI);
            let fast = cast_ray(&world, o, a, 20.0);
            let slow = march(&world, o, a, 20.0);
            assert!(fast <= slow + 1e-3, "origin {o:?} angle {a}: {fast} vs {slow}");
            if slow - fast > 1e-3 {
                // the march can step over a grazing contact; the hit must touch an occupied cell
                assert!(touches_occupied(&world, o, a, fast), "origin {o:?} angle {a}: {fast} vs {slow}");
            }
            hits += (fast < 20.0) as usize;
        }
    }
    assert!(hits > 1000);
}

#[test]
fn scan_is_max_range_without_obstacles_and_clips() {
    let world = World::empty("e", 20, 20, 0.15);
    let cfg = LidarConfig::default();
    let scan = render_scan(&world, &Pose::new(1.5, 1.5, 0.3), &cfg).unwrap();
    assert_eq!(scan.len(), cfg.beams);
    assert!(scan.ranges.iter().all(|&r| r == cfg.max_range));
    let mut walled = World::empty("w", 20, 20, 0.15);
    for r in 0..20 {
        walled.set_occupied(15, r, true);
    }
    let short = LidarConfig {
        max_range: 0.5,
        ..cfg
    };
    let scan = render_scan(&walled, &Pose::new(1.5, 1.5, 0.0), &short).unwrap();
    assert!(scan.ranges.iter().all(|&r| r <= 0.5 && r.is_finite()));
    let scan = render_scan(&walled, &Pose::new(1.5, 1.5, 0.0), &cfg).unwrap();
    let mid = scan.ranges[cfg.beams / 2];
    assert!((mid - 0.75).abs() < 1e-2, "{mid}");
}

/// Dense point samples of the footprint against occupied cells.
fn raster_collides(world: &World, pose: &Pose, fp: &Footprint, grow: f64) -> bool {
    let (hl, hw) = (0.5 * fp.length + grow, 0.5 * fp.width + grow);
    let n = 60;
    for i in 0..=n {
        for j in 0..=n {
            let l = Point2::new(-hl + 2.0 * hl * i as f64 / n as f64, -hw + 2.0 * hw * j as f64 / n as f64);
            match world.cell_of(pose.to_world(l)) {
                None => return true,
                Some((c, r)) if world.is_occupied(c, r) => return true,
                _ => {}
            }
        }
    }
    false
}

#[test]
fn footprint_collision_matches_rasterized_footprint() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fp = Footprint::default();
    let (mut collisions, mut cases) = (0, 0);
    for _ in 0..20 {
        let world = random_world(&mut rng, 30, 0.1);
        let (w, h) = world.size_m();
        for _ in 0..200 {
            let pose = Pose::new(rng.random_range(0.0..w), rng.random_range(0.0..h), rng.random_range(-PI..PI));
            let exact = footprint_collides(&world, &pose, &fp);
            // the raster is inside the rectangle, so it can only under-report
            if raster_collides(&world, &pose, &fp, -1e-9) {
                assert!(exact, "{pose:?}");
            }
            // and a slightly grown raster catches everything the exact test does
            if exact {
                assert!(raster_collides(&world, &pose, &fp, 0.01), "{pose:?}");
            }
            collisions += exact as usize;
            cases += 1;
        }
    }
    assert!(collisions > 100 && collisions < cases - 100);
}

#[test]
fn half_steps_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = Pose::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
        let (v, w, dt) = (rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0), rng.random_range(0.01..0.5));
        let once = integrate_arc(p, v, w, dt);
        let twice = integrate_arc(integrate_arc(p, v, w, dt / 2.0), v, w, dt / 2.0);
        assert!((once.x - twice.x).abs() < 1e-12 && (once.y - twice.y).abs() < 1e-12);
        let dth = lics::geometry::normalize_angle(once.theta - twice.theta);
        assert!(dth.abs() < 1e-12);
    }
}

#[test]
fn step_respects_limits() {
    let limits = VelocityLimits::default();
    let mut s = RobotState::at(Pose::new(0.0, 0.0, 0.0));
    for _ in 0..100 {
        let next = step_dynamics(&s, Action::new(10.0, -10.0), 0.002, &limits);
        assert!((next.v - s.v).abs() <= limits.a_max * 0.002 + 1e-12);
        assert!((next.w - s.w).abs() <= limits.alpha_max * 0.002 + 1e-12);
        assert!(next.v <= limits.v_max && next.w >= -limits.w_max);
        s = next;
    }
}

#[test]
fn odometry_drifts_only_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let world = World::empty("e", 60, 60, 0.15);
    let run = |noise: OdomNoise, rng: &mut ChaCha8Rng| {
        let mut sim = Simulation::new(
            World {
                start: Pose::new(4.5, 4.5, 0.0),
                ..world.clone()
            },
            Footprint::default(),
            LidarConfig::default(),
            VelocityLimits::default(),
            noise,
        );
        for _ in 0..30 {
            assert_eq!(sim.step(Action::new(0.5, 0.4), rng), StepEvent::Moved);
        }
        (sim.state.pose, sim.odometry())
    };
    let (truth, est) = run(OdomNoise::default(), &mut rng);
    assert_eq!(truth, est);
    let (truth, est) = run(OdomNoise { v_std: 0.05, w_std: 0.05 }, &mut rng);
    assert!(truth.position().dist(&est.position()) > 1e-4);

    // drift state integrates the same arc when its draw is zero
    let mut drift = OdomDriftState::new(Pose::new(0.0, 0.0, 0.0), OdomNoise::default());
    let state = RobotState {
        pose: Pose::new(0.1, 0.0, 0.0),
        v: 1.0,
        w: 0.0,
        t: 0.1,
    };
    let est = read_odometry(&state, 0.1, &mut drift);
    assert!((est.x - 0.1).abs() < 1e-12);
}

#[test]
fn collision_stops_the_step() {
    let mut world = World::empty("wall", 30, 20, 0.15);
    for r in 0..20 {
        world.set_occupied(12, r, true);
    }
    world.start = Pose::new(1.0, 1.5, 0.0);
    let mut sim = Simulation::new(
        world,
        Footprint::default(),
        LidarConfig::default(),
        VelocityLimits::default(),
        OdomNoise::default(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut event = StepEvent::Moved;
    for _ in 0..50 {
        event = sim.step(Action::new(1.0, 0.0), &mut rng);
        if event == StepEvent::Collided {
            break;
        }
    }
    assert_eq!(event, StepEvent::Collided);
    // front edge is within one physics step of the wall face at x = 1.8
    let front = sim.state.pose.x + 0.25;
    assert!((1.8 - 0.01..=1.8 + 0.01).contains(&front), "{front}");
}

proptest! {
    #[test]
    fn resample_keeps_endpoints_and_bounds(ranges in prop::collection::vec(0.0f64..20.0, 2..200), n in 2usize..400) {
        let out = resample_scan(&LidarScan { ranges: ranges.clone() }, n).unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert_eq!(out.ranges[0], ranges[0]);
        prop_assert_eq!(out.ranges[n - 1], *ranges.last().unwrap());
        let lo = ranges.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ranges.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.ranges.iter().all(|&r| r >= lo - 1e-12 && r <= hi + 1e-12));
    }

    #[test]
    fn constant_scan_resamples_to_constant(r in 0.1f64..20.0, m in 2usize..100, n in 2usize..100) {
        let out = resample_scan(&LidarScan { ranges: vec![r; m] }, n).unwrap();
        prop_assert!(out.ranges.iter().all(|&x| (x - r).abs() < 1e-12));
    }
}
