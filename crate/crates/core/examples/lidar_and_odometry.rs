//! Drive a constant arc through a generated world and watch the LiDAR and
//! the drifting odometry estimate.

use lics::expert::Action;
use lics::sim::{Footprint, LidarConfig, OdomNoise, Simulation, StepEvent, VelocityLimits};
use lics::worldgen::{generate_world, WorldgenConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lics::Result<()> {
    let world = generate_world(&WorldgenConfig {
        seed: 3,
        fill_probability: 0.1,
        ..Default::default()
    })?;
    let lidar = LidarConfig::default();
    let mut sim = Simulation::new(
        world,
        Footprint::default(),
        lidar,
        VelocityLimits::default(),
        OdomNoise { v_std: 0.02, w_std: 0.02 },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("  t     x      y    theta | odom err | nearest  mean range");
    for tick in 0..40 {
        let scan = sim.scan()?;
        let nearest = scan.ranges.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = scan.ranges.iter().sum::<f64>() / scan.ranges.len() as f64;
        let p = sim.state.pose;
        let err = p.position().dist(&sim.odometry().position());
        if tick % 5 == 0 {
            println!(
                "{:4.1} {:6.2} {:6.2} {:6.2} |  {:6.3}  | {:6.2}   {:6.2}",
                sim.state.t,
                p.x,
                p.y,
                p.theta,
                err,
                nearest,
                mean
            );
        }
        if sim.step(Action::new(0.6, 0.3), &mut rng) == StepEvent::Collided {
            println!("collision at t = {:.1} s", sim.state.t);
            break;
        }
    }
    Ok(())
}
