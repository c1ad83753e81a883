#![allow(dead_code)]

pub mod oracles;

use lics::demo::{Dataset, DemoRecord, EpisodeEntry, Manifest, SCHEMA_VERSION};
use lics::model::{Batch, ModelConfig};
use lics::sim::{Footprint, LidarConfig, VelocityLimits};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random records with `h`-beam scans in `[0, max_range)`, unit goals and
/// targets that depend smoothly on the inputs.
pub fn synthetic_dataset(n: usize, h: usize, max_range: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<DemoRecord> = (0..n)
        .map(|i| {
            let scan: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..max_range)).collect();
            let a: f64 = rng.random_range(-3.0..3.0);
            let near = scan.iter().cloned().fold(f64::INFINITY, f64::min) / max_range;
            DemoRecord {
                t: 0.1 * i as f64,
                world_id: "synthetic".into(),
                episode_id: 0,
                goal: [a.cos(), a.sin()],
                a_star: [0.5 + near, 0.8 * a.sin()],
                a_exec: [0.0, 0.0],
                scan,
            }
        })
        .collect();
    let lidar = LidarConfig {
        beams: h,
        max_range,
        ..LidarConfig::default()
    };
    Dataset {
        manifest: Manifest {
            schema_version: SCHEMA_VERSION,
            h,
            sigma: 0.25,
            expert: "synthetic".into(),
            limits: VelocityLimits::default(),
            lidar,
            footprint: Footprint::default(),
            seed,
            worlds: Vec::new(),
            episodes: vec![EpisodeEntry {
                episode_id: 0,
                world_id: "synthetic".into(),
                records: n,
                duration: 0.1 * n as f64,
            }],
            warnings: Vec::new(),
        },
        records,
    }
}

/// Batch of uniform normalized scans, unit goals and targets in [-1, 1].
pub fn random_batch(cfg: &ModelConfig, b: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scans = Array2::from_shape_simple_fn((b, cfg.h), || rng.random_range(0.0..1.0));
    let mut goals = Array2::zeros((b, 2));
    for mut g in goals.rows_mut() {
        let a: f64 = rng.random_range(-3.0..3.0);
        g[0] = a.cos();
        g[1] = a.sin();
    }
    let targets = Array2::from_shape_simple_fn((b, 2), || rng.random_range(-1.0..1.0));
    Batch::new(scans, goals, targets).unwrap()
}
