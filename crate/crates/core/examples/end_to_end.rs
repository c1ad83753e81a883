//! The whole loop at a small scale: generate worlds, record demonstrations,
//! train, and benchmark learner against expert on held-out worlds.
//!
//!     cargo run --release --example end_to_end -- [worlds] [epochs]

use std::time::Instant;

use lics::bench::{aggregate, run_benchmark, t_star_table, BenchConfig};
use lics::demo::{build_dataset, DatasetConfig};
use lics::expert::DwaExpert;
use lics::model::{LearnedPolicy, ModelConfig};
use lics::trainer::{train, TrainConfig};
use lics::worldgen::{generate_world, split_worlds, WorldgenConfig};

fn main() -> lics::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(10, |s| s.parse().expect("worlds"));
    let epochs: usize = args.next().map_or(5, |s| s.parse().expect("epochs"));
    let t0 = Instant::now();

    let worlds = (0..n)
        .map(|seed| generate_world(&WorldgenConfig { seed, ..Default::default() }))
        .collect::<lics::Result<Vec<_>>>()?;
    let (train_worlds, test_worlds) = split_worlds(&worlds, 0.8, 0);

    let mut data_cfg = DatasetConfig::default();
    data_cfg.rollout.limits = data_cfg.rollout.limits.with_v_max(1.0);
    let dataset = build_dataset(&train_worlds, DwaExpert::default, &data_cfg)?;
    println!("{} records from {} worlds [{:.0?}]", dataset.records.len(), train_worlds.len(), t0.elapsed());

    let (params, report) = train(
        &dataset,
        &ModelConfig::default(),
        &TrainConfig {
            epochs,
            ..Default::default()
        },
    )?;
    println!(
        "trained {epochs} epochs, final train mse {:.4} [{:.0?}]",
        report.train_mse.last().unwrap(),
        t0.elapsed()
    );

    let t_star = t_star_table(&test_worlds)?;
    let cfg = BenchConfig::default().with_max_v(1.0);
    let mut results = run_benchmark(&test_worlds, DwaExpert::default, &cfg)?;
    results.extend(run_benchmark(&test_worlds, || LearnedPolicy::new(params.clone()), &cfg)?);
    let report = aggregate(&results, &t_star)?;
    for (policy, agg) in &report.per_policy {
        println!(
            "{policy}: {}/{} successes, score {:.3}",
            agg.successes, agg.trials, agg.avg_score
        );
    }
    println!("done in {:.0?}", t0.elapsed());
    Ok(())
}
