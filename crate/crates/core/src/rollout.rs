//! Closed-loop episode driver shared by demonstration recording and the
//! benchmark: replan A* from the odometry estimate, extract the local goal,
//! ask the policy, let the caller adjust the command, step the simulator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expert::{Action, Observation, Policy};
use crate::geometry::Pose;
use crate::planning::{extract_local_goal, inflate, plan_between, Costmap, Path, DEFAULT_LOOKAHEAD};
use crate::safety::SafetyVerdict;
use crate::sim::{Footprint, LidarConfig, OdomNoise, Simulation, StepEvent, VelocityLimits, CONTROL_DT};
use crate::worldgen::World;

/// Distance from the goal that counts as arrival, m.
pub const GOAL_TOLERANCE: f64 = 0.3;
/// Episode timeout used for demonstrations, s.
pub const EPISODE_TIMEOUT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub footprint: Footprint,
    pub lidar: LidarConfig,
    pub limits: VelocityLimits,
    pub lookahead: f64,
    pub inflation_radius: f64,
    /// Global replanning period, s.
    pub replan_period: f64,
    pub goal_tolerance: f64,
    pub timeout: f64,
    pub odom_noise: OdomNoise,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        let footprint = Footprint::default();
        RolloutConfig {
            footprint,
            lidar: LidarConfig::default(),
            limits: VelocityLimits::default(),
            lookahead: DEFAULT_LOOKAHEAD,
            inflation_radius: footprint.circumscribed_radius(),
            replan_period: 1.0,
            goal_tolerance: GOAL_TOLERANCE,
            timeout: EPISODE_TIMEOUT,
            odom_noise: OdomNoise::default(),
        }
    }
}

/// Everything known about one control tick, before the step is taken.
#[derive(Debug, Clone)]
pub struct Tick {
    pub t: f64,
    pub truth: Pose,
    pub estimate: Pose,
    pub observation: Observation,
    pub policy_action: Action,
    pub executed: Action,
    pub verdict: Option<SafetyVerdict>,
}

#[derive(Debug, Clone)]
pub struct RolloutSummary {
    pub outcome: Outcome,
    pub duration: f64,
    pub ticks: usize,
}

/// Keeps the global path fresh and turns it into observations.
pub struct Navigator {
    costmap: Costmap,
    path: Option<Path>,
    last_plan: f64,
}

impl Navigator {
    pub fn new(world: &World, inflation_radius: f64) -> Self {
        Navigator {
            costmap: inflate(world, inflation_radius),
            path: None,
            last_plan: f64::NEG_INFINITY,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn costmap(&self) -> &Costmap {
        &self.costmap
    }

    /// Replan when the period has elapsed (or no path exists yet). A failed
    /// replan keeps the previous path.
    pub fn update(&mut self, sim: &Simulation, period: f64) {
        let t = sim.state.t;
        if self.path.is_some() && t - self.last_plan < period - 1e-9 {
            return;
        }
        self.last_plan = t;
        if let Ok(p) = plan_between(&self.costmap, sim.odometry().position(), sim.world.goal) {
            self.path = Some(p);
        }
    }

    pub fn observe(&self, sim: &Simulation, lookahead: f64) -> Result<Observation> {
        let estimate = sim.odometry();
        let goal_only = [sim.world.goal];
        let remaining = match &self.path {
            Some(p) => p.remaining_from(estimate.position()),
            None => &goal_only[..],
        };
        let local_goal = extract_local_goal(remaining, &estimate, lookahead)?;
        Ok(Observation {
            scan: sim.scan()?,
            lidar: sim.lidar,
            local_goal,
            path: remaining.iter().map(|p| estimate.to_local(*p)).collect(),
            velocity: Action::new(sim.state.v, sim.state.w),
            footprint: sim.footprint,
            limits: sim.limits,
        })
    }
}

pub fn reached_goal(sim: &Simulation, tolerance: f64) -> bool {
    sim.state.pose.position().dist(&sim.world.goal) <= tolerance
}

/// Run one episode. `adjust` turns the policy output into the executed
/// command (noise injection, safety filtering); `on_tick` sees every tick
/// before the step is applied.
pub fn run_episode<P, R, A, T>(
    world: &World,
    policy: &mut P,
    cfg: &RolloutConfig,
    rng: &mut R,
    mut adjust: A,
    mut on_tick: T,
) -> Result<RolloutSummary>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
    A: FnMut(&Observation, Action, &mut R) -> (Action, Option<SafetyVerdict>),
    T: FnMut(&Tick),
{
    let mut sim = Simulation::new(world.clone(), cfg.footprint, cfg.lidar, cfg.limits, cfg.odom_noise);
    let mut nav = Navigator::new(world, cfg.inflation_radius);
    let max_ticks = (cfg.timeout / CONTROL_DT).round() as usize;
    let mut ticks = 0;
    loop {
        if reached_goal(&sim, cfg.goal_tolerance) {
            return Ok(RolloutSummary {
                outcome: Outcome::Success,
                duration: sim.state.t,
                ticks,
            });
        }
        if ticks >= max_ticks {
            return Ok(RolloutSummary {
                outcome: Outcome::Timeout,
                duration: sim.state.t,
                ticks,
            });
        }
        nav.update(&sim, cfg.replan_period);
        let obs = nav.observe(&sim, cfg.lookahead)?;
        let proposed = policy.act(&obs)?;
        let (executed, verdict) = adjust(&obs, proposed, rng);
        on_tick(&Tick {
            t: sim.state.t,
            truth: sim.state.pose,
            estimate: sim.odometry(),
            observation: obs,
            policy_action: proposed,
            executed,
            verdict,
        });
        ticks += 1;
        if sim.step(executed, rng) == StepEvent::Collided {
            return Ok(RolloutSummary {
                outcome: Outcome::Collision,
                duration: sim.state.t,
                ticks,
            });
        }
    }
}
