//! Benchmark the DWA expert, and the checkpoint from `train_policy` if it
//! exists, on held-out worlds.

use lics::bench::{aggregate, run_benchmark, t_star_table, BenchConfig};
use lics::expert::DwaExpert;
use lics::model::{load_checkpoint, LearnedPolicy};
use lics::worldgen::{generate_world, WorldgenConfig};

fn main() -> lics::Result<()> {
    let worlds = (100..104)
        .map(|seed| generate_world(&WorldgenConfig { seed, ..Default::default() }))
        .collect::<lics::Result<Vec<_>>>()?;
    let t_star = t_star_table(&worlds)?;
    let cfg = BenchConfig {
        trials: 2,
        ..BenchConfig::default().with_max_v(1.0)
    };

    let mut results = run_benchmark(&worlds, DwaExpert::default, &cfg)?;
    if let Ok(params) = load_checkpoint("target/example-policy.ckpt") {
        results.extend(run_benchmark(&worlds, || LearnedPolicy::new(params.clone()), &cfg)?);
    }
    let report = aggregate(&results, &t_star)?;
    println!("world       trial policy        outcome      T      score");
    for r in &report.rows {
        println!(
            "{:<11} {:>5} {:<13} {:<10} {:6.2} {:6.3}",
            r.world_id,
            r.trial,
            r.policy,
            format!("{:?}", r.outcome),
            r.time,
            r.score
        );
    }
    for (policy, agg) in &report.per_policy {
        println!(
            "{policy}: {:.0}% success, avg score {:.3}, avg time {}",
            agg.success_rate,
            agg.avg_score,
            agg.avg_time.map_or("-".into(), |t| format!("{t:.2} s"))
        );
    }
    Ok(())
}
