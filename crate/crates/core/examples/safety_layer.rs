//! A reckless policy that always drives full speed ahead, with and without
//! the safety layer in the loop, plus single-command checks.

use lics::bench::{aggregate, run_benchmark, t_star_table, BenchConfig};
use lics::expert::{Action, ScriptedPolicy};
use lics::geometry::Point2;
use lics::safety::{check_action, filter_action, SafetyConfig};
use lics::worldgen::{generate_world, WorldgenConfig};

fn main() -> lics::Result<()> {
    let cfg = SafetyConfig::default();
    let wall: Vec<Point2> = (-10..=10).map(|i| Point2::new(1.0, 0.05 * i as f64)).collect();
    for a in [Action::new(1.0, 0.0), Action::new(0.3, 0.0), Action::new(0.8, 1.5), Action::new(0.0, 1.0)] {
        let v = check_action(&wall, a, &cfg);
        println!(
            "({:4.1}, {:4.1}) {:?}: {} ({} points in the ROI)",
            a.v,
            a.w,
            v.class,
            if v.safe { "safe" } else { "unsafe" },
            v.offending.len()
        );
    }
    let (out, v) = filter_action(&wall, Action::new(1.5, 0.0), Point2::new(1.0, 0.5), &cfg);
    println!("filter (1.5, 0.0) -> ({:.2}, {:.2}), {:?}", out.v, out.w, v.class);

    let worlds = (0..4)
        .map(|seed| generate_world(&WorldgenConfig { seed, fill_probability: 0.1, ..Default::default() }))
        .collect::<lics::Result<Vec<_>>>()?;
    let t_star = t_star_table(&worlds)?;
    let reckless = || ScriptedPolicy::constant(Action::new(1.0, 0.0));
    for safety in [None, Some(cfg)] {
        let bench = BenchConfig {
            trials: 1,
            safety,
            ..BenchConfig::default().with_max_v(1.0)
        };
        let report = aggregate(&run_benchmark(&worlds, reckless, &bench)?, &t_star)?;
        let outcomes: Vec<String> = report.rows.iter().map(|r| format!("{:?}", r.outcome)).collect();
        println!("safety {}: {}", if safety.is_some() { "on " } else { "off" }, outcomes.join(" "));
    }
    Ok(())
}
