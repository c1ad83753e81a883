//! Closed-loop trials and the clipped traversal-time score.
//!
//! A trial's score is `T*/clip(T, 2T*, 8T*)` on success and 0 otherwise,
//! where `T* = L*/2` is the traversal time at 2 m/s along the shortest
//! path, whatever speed limit the trial runs at.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demo::derive_seed;
use crate::error::{Error, Result};
use crate::expert::Policy;
use crate::rollout::{run_episode, Outcome, RolloutConfig, EPISODE_TIMEOUT};
use crate::safety::{filter_action, scan_to_points, MotionClass, SafetyConfig};
use crate::sim::OdomNoise;
use crate::worldgen::World;

/// Speed that converts L* into T*, m/s.
pub const REFERENCE_SPEED: f64 = 2.0;

pub fn optimal_time(world: &World) -> Result<f64> {
    match world.lstar {
        Some(l) if l > 0.0 => Ok(l / REFERENCE_SPEED),
        _ => Err(Error::MissingLstar(world.id.clone())),
    }
}

pub fn score(success: bool, t: f64, t_star: f64) -> f64 {
    if !success {
        return 0.0;
    }
    t_star / t.clamp(2.0 * t_star, 8.0 * t_star)
}

pub fn score_trial(result: &TrialResult, t_star: f64) -> f64 {
    score(result.outcome == Outcome::Success, result.time, t_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub safe: bool,
    pub class: MotionClass,
}

/// One line of a trajectory trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub pose: [f64; 3],
    pub action: [f64; 2],
    pub verdict: Option<TraceVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub world_id: String,
    pub trial: u32,
    pub policy: String,
    pub outcome: Outcome,
    /// Traversal time, s.
    pub time: f64,
    pub max_v: f64,
    pub safety: bool,
    /// The policy returned an error; the trial counts as a timeout.
    pub policy_failure: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Speed limit, footprint, sensor and navigation settings. The timeout
    /// is replaced per world by `max(60 s, 10·T*)`.
    pub rollout: RolloutConfig,
    /// Safety layer between policy and actuator, if enabled.
    pub safety: Option<SafetyConfig>,
    pub trials: u32,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            rollout: RolloutConfig {
                odom_noise: OdomNoise {
                    v_std: 0.01,
                    w_std: 0.01,
                },
                ..RolloutConfig::default()
            },
            safety: None,
            trials: 3,
            seed: 0,
            record_trace: false,
        }
    }
}

impl BenchConfig {
    pub fn with_max_v(mut self, max_v: f64) -> Self {
        self.rollout.limits = self.rollout.limits.with_v_max(max_v);
        self
    }
}

pub fn trial_timeout(t_star: f64) -> f64 {
    EPISODE_TIMEOUT.max(10.0 * t_star)
}

fn world_key(id: &str) -> u64 {
    // FNV-1a, so trial seeds depend on the world, not on its position in a list
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of trial `trial` on `world`; identical for every policy so that
/// comparisons are paired.
pub fn trial_seed(master: u64, world: &World, trial: u32) -> u64 {
    derive_seed(master, &[world_key(&world.id), trial as u64])
}

pub fn run_trial<P: Policy + ?Sized>(world: &World, policy: &mut P, cfg: &BenchConfig, trial: u32) -> Result<TrialResult> {
    let t_star = optimal_time(world)?;
    let mut rollout = cfg.rollout;
    rollout.timeout = trial_timeout(t_star);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, world, trial));
    let mut trace = Vec::new();
    let mut last_t = 0.0;
    let safety = cfg.safety;
    let summary = run_episode(
        world,
        policy,
        &rollout,
        &mut rng,
        |obs, proposed, _| match &safety {
            Some(s) => {
                let points = scan_to_points(&obs.scan, &obs.lidar);
                let (a, v) = filter_action(&points, proposed, obs.local_goal.point, s);
                (a, Some(v))
            }
            None => (proposed, None),
        },
        |tick| {
            last_t = tick.t;
            if cfg.record_trace {
                trace.push(TraceRow {
                    t: tick.t,
                    pose: [tick.truth.x, tick.truth.y, tick.truth.theta],
                    action: [tick.executed.v, tick.executed.w],
                    verdict: tick.verdict.as_ref().map(|v| TraceVerdict {
                        safe: v.safe,
                        class: v.class,
                    }),
                });
            }
        },
    );
    let (outcome, time, policy_failure) = match summary {
        Ok(s) => (s.outcome, s.duration, false),
        Err(Error::Policy(msg)) => {
            log::warn!("policy {} failed on {}: {msg}", policy.name(), world.id);
            (Outcome::Timeout, last_t, true)
        }
        Err(e) => return Err(e),
    };
    Ok(TrialResult {
        world_id: world.id.clone(),
        trial,
        policy: policy.name().to_string(),
        outcome,
        time,
        max_v: rollout.limits.v_max,
        safety: safety.is_some(),
        policy_failure,
        trace,
    })
}

/// Run `cfg.trials` trials of a fresh policy on every world, in order.
pub fn run_benchmark<P, F>(worlds: &[World], mut make_policy: F, cfg: &BenchConfig) -> Result<Vec<TrialResult>>
where
    P: Policy,
    F: FnMut() -> P,
{
    let mut out = Vec::with_capacity(worlds.len() * cfg.trials as usize);
    for world in worlds {
        for trial in 0..cfg.trials {
            let mut policy = make_policy();
            out.push(run_trial(world, &mut policy, cfg, trial)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub successes: usize,
    /// Percent of trials that succeeded.
    pub success_rate: f64,
    /// Mean traversal time over successful trials; `None` without any.
    pub avg_time: Option<f64>,
    pub avg_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub world_id: String,
    pub trial: u32,
    pub policy: String,
    pub outcome: Outcome,
    #[serde(rename = "T")]
    pub time: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub overall: Aggregate,
    pub per_world: BTreeMap<String, Aggregate>,
    /// Keyed by policy name.
    pub per_policy: BTreeMap<String, Aggregate>,
}

fn summarize(rows: &[&ReportRow]) -> Aggregate {
    let n = rows.len();
    let times: Vec<f64> = rows
        .iter()
        .filter(|r| r.outcome == Outcome::Success)
        .map(|r| r.time)
        .collect();
    Aggregate {
        trials: n,
        successes: times.len(),
        success_rate: 100.0 * times.len() as f64 / n.max(1) as f64,
        avg_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
        avg_score: rows.iter().map(|r| r.score).sum::<f64>() / n.max(1) as f64,
    }
}

/// Score every trial with its world's T* and summarize overall, per world
/// and per policy.
pub fn aggregate(results: &[TrialResult], t_star: &BTreeMap<String, f64>) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::InvalidConfig("no trial results to aggregate".into()));
    }
    let rows = results
        .iter()
        .map(|r| {
            let ts = *t_star.get(&r.world_id).ok_or_else(|| Error::MissingLstar(r.world_id.clone()))?;
            Ok(ReportRow {
                world_id: r.world_id.clone(),
                trial: r.trial,
                policy: r.policy.clone(),
                outcome: r.outcome,
                time: r.time,
                score: score_trial(r, ts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let group = |key: fn(&ReportRow) -> &str| {
        let mut g: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
        for r in &rows {
            g.entry(key(r).to_string()).or_default().push(r);
        }
        g.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
    };
    let per_world = group(|r| &r.world_id);
    let per_policy = group(|r| &r.policy);
    let overall = summarize(&rows.iter().collect::<Vec<_>>());
    Ok(Report {
        rows,
        overall,
        per_world,
        per_policy,
    })
}

pub fn t_star_table(worlds: &[World]) -> Result<BTreeMap<String, f64>> {
    worlds.iter().map(|w| Ok((w.id.clone(), optimal_time(w)?))).collect()
}

impl Report {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "world_id,trial,policy,outcome,T,score")?;
        for r in &self.rows {
            let outcome = serde_json::to_value(r.outcome)?;
            writeln!(
                out,
                "{},{},{},{},{:.3},{:.6}",
                r.world_id,
                r.trial,
                r.policy,
                outcome.as_str().unwrap_or_default(),
                r.time,
                r.score
            )?;
        }
        Ok(())
    }
}

pub fn write_trace<W: Write>(trace: &[TraceRow], mut out: W) -> Result<()> {
    for row in trace {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
