//! Demonstration recording with Gaussian exploration noise on the executed
//! command, and the on-disk dataset format.
//!
//! A dataset directory holds `manifest.json` and `records.ndjson`. Each
//! record line is one JSON object with the fields `t`, `world_id`,
//! `episode_id`, `scan`, `goal`, `a_star` and `a_exec`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{Action, Policy};
use crate::rollout::{run_episode, Outcome, RolloutConfig};
use crate::sim::{Footprint, LidarConfig, VelocityLimits};
use crate::worldgen::World;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub t: f64,
    pub world_id: String,
    pub episode_id: u32,
    pub scan: Vec<f64>,
    /// Unit local-goal direction in the robot frame.
    pub goal: [f64; 2],
    /// Expert output.
    pub a_star: [f64; 2],
    /// Command sent to the simulator.
    pub a_exec: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation applied to both v and ω.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.25,
            seed: 0,
        }
    }
}

/// Noisy command: the raw draws and the command after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbed {
    pub noise: (f64, f64),
    pub executed: Action,
}

/// Add independent `N(0, σ²)` draws to `v*` and `ω*`, then clamp.
pub fn perturb_action<R: Rng + ?Sized>(
    optimal: Action,
    sigma: f64,
    limits: &VelocityLimits,
    rng: &mut R,
) -> Perturbed {
    let nv: f64 = StandardNormal.sample(rng);
    let nw: f64 = StandardNormal.sample(rng);
    let noise = (sigma * nv, sigma * nw);
    let raw = Action::new(optimal.v + noise.0, optimal.w + noise.1);
    Perturbed {
        noise,
        executed: limits.clamp(raw),
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub records: Vec<DemoRecord>,
    pub outcome: Outcome,
    pub duration: f64,
}

/// Drive `expert` through `world`, recording one sample per control tick.
pub fn record_episode<P: Policy + ?Sized, R: Rng + ?Sized>(
    world: &World,
    expert: &mut P,
    sigma: f64,
    cfg: &RolloutConfig,
    episode_id: u32,
    rng: &mut R,
) -> Result<EpisodeResult> {
    let mut records = Vec::new();
    let limits = cfg.limits;
    let summary = run_episode(
        world,
        expert,
        cfg,
        rng,
        |_, a, rng| (perturb_action(a, sigma, &limits, rng).executed, None),
        |tick| {
            let g = tick.observation.local_goal.unit;
            records.push(DemoRecord {
                t: tick.t,
                world_id: world.id.clone(),
                episode_id,
                scan: tick.observation.scan.ranges.clone(),
                goal: [g.x, g.y],
                a_star: [tick.policy_action.v, tick.policy_action.w],
                a_exec: [tick.executed.v, tick.executed.w],
            })
        },
    )?;
    Ok(EpisodeResult {
        records,
        outcome: summary.outcome,
        duration: summary.duration,
    })
}

/// Independent per-stream seed from a master seed and stream coordinates.
pub fn derive_seed(master: u64, stream: &[u64]) -> u64 {
    // splitmix64 over the coordinates
    let mut z = master;
    for &s in stream {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15 ^ s.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEntry {
    pub world_id: String,
    pub attempts: u32,
    pub episodes: u32,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub episode_id: u32,
    pub world_id: String,
    pub records: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Beams per scan.
    pub h: usize,
    pub sigma: f64,
    pub expert: String,
    pub limits: VelocityLimits,
    pub lidar: LidarConfig,
    pub footprint: Footprint,
    pub seed: u64,
    pub worlds: Vec<WorldEntry>,
    pub episodes: Vec<EpisodeEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<DemoRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub rollout: RolloutConfig,
    pub noise: NoiseConfig,
    pub episodes_per_world: u32,
    pub max_attempts: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            rollout: RolloutConfig::default(),
            noise: NoiseConfig::default(),
            episodes_per_world: 2,
            max_attempts: 20,
        }
    }
}

/// Record episodes on every world until `episodes_per_world` successes are
/// collected or the attempt budget runs out. Only successful episodes are
/// kept. Worlds are processed in input order with seeds derived from
/// `(noise.seed, world index, attempt)`.
pub fn build_dataset<P, F>(worlds: &[World], mut make_expert: F, cfg: &DatasetConfig) -> Result<Dataset>
where
    P: Policy,
    F: FnMut() -> P,
{
    if worlds.is_empty() {
        return Err(Error::InvalidConfig("empty world set".into()));
    }
    let mut records = Vec::new();
    let mut world_entries = Vec::new();
    let mut episodes = Vec::new();
    let mut warnings = Vec::new();
    let mut expert_name = String::new();
    for (wi, world) in worlds.iter().enumerate() {
        let mut saved = 0;
        let mut attempts = 0;
        while saved < cfg.episodes_per_world && attempts < cfg.max_attempts {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.noise.seed,
                &[wi as u64, attempts as u64],
            ));
            attempts += 1;
            let mut expert = make_expert();
            expert_name = expert.name().to_string();
            let episode_id = episodes.len() as u32;
            let ep = record_episode(world, &mut expert, cfg.noise.sigma, &cfg.rollout, episode_id, &mut rng)?;
            if ep.outcome == Outcome::Success {
                episodes.push(EpisodeEntry {
                    episode_id,
                    world_id: world.id.clone(),
                    records: ep.records.len(),
                    duration: ep.duration,
                });
                records.extend(ep.records);
                saved += 1;
            }
        }
        let skipped = saved < cfg.episodes_per_world;
        if skipped {
            let msg = format!(
                "WorldSkipped: {} ({saved}/{} successes in {attempts} attempts)",
                world.id, cfg.episodes_per_world
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        world_entries.push(WorldEntry {
            world_id: world.id.clone(),
            attempts,
            episodes: saved,
            skipped,
        });
    }
    Ok(Dataset {
        manifest: Manifest {
            schema_version: SCHEMA_VERSION,
            h: cfg.rollout.lidar.beams,
            sigma: cfg.noise.sigma,
            expert: expert_name,
            limits: cfg.rollout.limits,
            lidar: cfg.rollout.lidar,
            footprint: cfg.rollout.footprint,
            seed: cfg.noise.seed,
            worlds: world_entries,
            episodes,
            warnings,
        },
        records,
    })
}

impl Dataset {
    pub fn save(&self, dir: impl AsRef<FsPath>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        )?;
        let mut out = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load and validate a dataset directory.
    pub fn load(dir: impl AsRef<FsPath>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                manifest.schema_version
            )));
        }
        let reader = BufReader::new(File::open(dir.join(RECORDS_FILE))?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DemoRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(i + 1, format!("{RECORDS_FILE}: {e}")))?;
            if rec.scan.len() != manifest.h {
                return Err(Error::SchemaMismatch(format!(
                    "record {} has {} beams, manifest says {}",
                    i + 1,
                    rec.scan.len(),
                    manifest.h
                )));
            }
            records.push(rec);
        }
        let expected: usize = manifest.episodes.iter().map(|e| e.records).sum();
        if expected != records.len() {
            return Err(Error::SchemaMismatch(format!(
                "manifest lists {expected} records, file has {}",
                records.len()
            )));
        }
        Ok(Dataset { manifest, records })
    }
}
