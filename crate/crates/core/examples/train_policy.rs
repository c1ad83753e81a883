//! Clone the DWA expert into a learned policy and save the checkpoint.
//!
//!     cargo run --release --example train_policy -- [transformer|mlp] [epochs]
//!
//! Uses the dataset written by `record_demonstrations` when present.

use lics::demo::{build_dataset, Dataset, DatasetConfig};
use lics::expert::DwaExpert;
use lics::model::{load_checkpoint, save_checkpoint, ModelConfig, Variant};
use lics::trainer::{constant_predictor_mse, evaluate_mse, records_to_batch, train, TrainConfig};
use lics::worldgen::{generate_world, WorldgenConfig};

fn main() -> lics::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let variant = match args.next().as_deref() {
        Some("mlp") => Variant::Mlp,
        _ => Variant::Transformer,
    };
    let epochs: usize = args.next().map_or(3, |s| s.parse().expect("epochs"));

    let dataset = match Dataset::load("target/example-dataset") {
        Ok(ds) => ds,
        Err(_) => {
            let worlds = (0..2)
                .map(|seed| generate_world(&WorldgenConfig { seed, ..Default::default() }))
                .collect::<lics::Result<Vec<_>>>()?;
            let mut cfg = DatasetConfig {
                episodes_per_world: 1,
                ..Default::default()
            };
            cfg.rollout.limits = cfg.rollout.limits.with_v_max(1.0);
            build_dataset(&worlds, DwaExpert::default, &cfg)?
        }
    };
    let model = ModelConfig::default().with_variant(variant);
    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    println!("{} records, {:?}, {epochs} epochs", dataset.records.len(), variant);
    let (params, report) = train(&dataset, &model, &cfg)?;
    for (e, (tr, va)) in report.train_mse.iter().zip(&report.val_mse).enumerate() {
        println!("epoch {e:3}: train {tr:.4}  val {va:.4}");
    }
    let all: Vec<_> = dataset.records.iter().collect();
    let batch = records_to_batch(&all, model.h, model.scan_scale)?;
    println!(
        "kept epoch {}: mse {:.4} vs constant-mean {:.4}; {} parameters, {:.0} s",
        report.best_epoch,
        evaluate_mse(&params, &batch)?,
        constant_predictor_mse(&batch),
        params.param_count(),
        report.wall_time_s
    );
    let path = "target/example-policy.ckpt";
    save_checkpoint(&params, path)?;
    // weights are stored as f32
    let reloaded = load_checkpoint(path)?;
    let a = params.predict(&batch.scans.view(), &batch.goals.view())?;
    let b = reloaded.predict(&batch.scans.view(), &batch.goals.view())?;
    let drift = (&a - &b).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    println!("checkpoint written to {path}; reload changes predictions by at most {drift:.1e}");
    Ok(())
}
