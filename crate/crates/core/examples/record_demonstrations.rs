//! Record noisy DWA demonstrations and save them as a dataset directory.
//!
//!     cargo run --example record_demonstrations -- [worlds] [sigma] [out_dir]

use lics::demo::{build_dataset, Dataset, DatasetConfig, NoiseConfig};
use lics::expert::DwaExpert;
use lics::worldgen::{generate_world, WorldgenConfig};

fn main() -> lics::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(4, |s| s.parse().expect("worlds"));
    let sigma: f64 = args.next().map_or(0.25, |s| s.parse().expect("sigma"));
    let out = args.next().unwrap_or_else(|| "target/example-dataset".into());

    let worlds = (0..n)
        .map(|seed| {
            generate_world(&WorldgenConfig {
                seed,
                ..Default::default()
            })
        })
        .collect::<lics::Result<Vec<_>>>()?;
    let mut cfg = DatasetConfig {
        noise: NoiseConfig { sigma, seed: 0 },
        ..Default::default()
    };
    cfg.rollout.limits = cfg.rollout.limits.with_v_max(1.0);

    let ds = build_dataset(&worlds, DwaExpert::default, &cfg)?;
    for w in &ds.manifest.worlds {
        println!("{}: {} episodes in {} attempts", w.world_id, w.episodes, w.attempts);
    }
    let spread = ds
        .records
        .iter()
        .map(|r| (r.a_exec[0] - r.a_star[0]).powi(2))
        .sum::<f64>()
        / ds.records.len() as f64;
    println!(
        "{} records; executed v deviates from the expert by {:.3} m/s rms",
        ds.records.len(),
        spread.sqrt()
    );
    ds.save(&out)?;
    let back = Dataset::load(&out)?;
    assert_eq!(back.records.len(), ds.records.len());
    println!("saved to {out}");
    Ok(())
}
