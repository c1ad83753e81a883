//! Plan the global path on the inflated grid and pick local goals along it.

use lics::geometry::Pose;
use lics::planning::{extract_local_goal, inflate, plan_between};
use lics::sim::Footprint;
use lics::worldgen::{generate_world, WorldgenConfig};

fn main() -> lics::Result<()> {
    let world = generate_world(&WorldgenConfig {
        seed: 7,
        ..Default::default()
    })?;
    let costmap = inflate(&world, Footprint::default().circumscribed_radius());
    let path = plan_between(&costmap, world.start.position(), world.goal)?;
    println!(
        "{}: {} waypoints, {:.2} m, {} lethal cells",
        world.id,
        path.points.len(),
        path.cost,
        costmap.lethal_count()
    );

    // draw the path over the inflated grid, north up
    for r in (0..world.height).rev() {
        let line: String = (0..world.width)
            .map(|c| {
                if path.cells.contains(&(c, r)) {
                    '*'
                } else if world.is_occupied(c, r) {
                    '#'
                } else if costmap.is_lethal((c, r)) {
                    '+'
                } else {
                    '.'
                }
            })
            .collect();
        println!("{line}");
    }

    for &lookahead in &[0.5, 1.0, 2.0, 20.0] {
        let g = extract_local_goal(&path.points, &world.start, lookahead)?;
        println!(
            "lookahead {lookahead:4.1} m: goal ({:5.2}, {:5.2}) in robot frame, unit ({:5.2}, {:5.2}){}",
            g.point.x,
            g.point.y,
            g.unit.x,
            g.unit.y,
            if g.fallback { ", fallback to path end" } else { "" }
        );
    }
    let midway = path.points[path.points.len() / 2];
    let g = extract_local_goal(path.remaining_from(midway), &Pose::new(midway.x, midway.y, 0.0), 2.0)?;
    println!("halfway, facing east: unit goal ({:5.2}, {:5.2})", g.unit.x, g.unit.y);
    Ok(())
}
