//! Live teleoperation bridge: a WebSocket server that streams simulation
//! state to a browser client, drives the robot with the client's latest
//! command and records human demonstrations.
//!
//! Messages are JSON text frames. Client to server:
//! `{"type":"cmd","v":f,"w":f}`, `{"type":"record","on":bool}`,
//! `{"type":"reset","world":"id"}`, `{"type":"list_worlds"}`.
//! Server to client: `hello` on connect and after every reset, `state` once
//! per control tick, `worlds` in answer to `list_worlds`, and `error`.

use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use lics::demo::{Dataset, DemoRecord, EpisodeEntry, Manifest, WorldEntry, SCHEMA_VERSION};
use lics::expert::Action;
use lics::rollout::{reached_goal, Navigator, Outcome, RolloutConfig};
use lics::safety::{check_action, scan_to_points, SafetyConfig, SafetyVerdict};
use lics::sim::{resample_scan, Simulation, StepEvent, CONTROL_DT};
use lics::worldgen::{world_to_string, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tungstenite::{Message, WebSocket};

/// Beams per scan in state frames.
pub const STREAM_BEAMS: usize = 180;
/// Commands older than this are replaced by a stop.
pub const DEADMAN: Duration = Duration::from_millis(500);

#[derive(Debug, Clone)]
pub struct TeleopConfig {
    pub rollout: RolloutConfig,
    pub safety: SafetyConfig,
    /// Human dataset directory; successful recorded episodes are appended.
    pub record_dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd { v: f64, w: f64 },
    Record { on: bool },
    Reset { world: String },
    ListWorlds,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictFrame {
    pub safe: bool,
    pub roi: Vec<[f64; 2]>,
    pub class: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateFrame {
    #[serde(rename = "type")]
    pub kind: &'static str,
    /// Session time, s; strictly increasing across resets.
    pub t: f64,
    /// Time since the current episode started, s.
    pub episode_t: f64,
    pub world: String,
    pub pose: [f64; 3],
    pub scan: Vec<f64>,
    pub goal: [f64; 2],
    pub path: Vec<[f64; 2]>,
    /// Executed command.
    pub cmd: [f64; 2],
    pub verdict: VerdictFrame,
    pub recording: bool,
    pub outcome: Option<Outcome>,
}

/// Stale commands decay to a stop.
pub fn effective_command(latest: Option<(Action, Instant)>, now: Instant) -> Action {
    match latest {
        Some((a, at)) if now.saturating_duration_since(at) <= DEADMAN => a,
        _ => Action::default(),
    }
}

/// One simulated robot in one world, plus the recording buffer.
pub struct Session {
    worlds: Vec<World>,
    current: usize,
    cfg: TeleopConfig,
    sim: Simulation,
    nav: Navigator,
    rng: ChaCha8Rng,
    clock: f64,
    recording: bool,
    buffer: Vec<DemoRecord>,
    outcome: Option<Outcome>,
    episodes: u32,
}

impl Session {
    pub fn new(worlds: Vec<World>, cfg: TeleopConfig) -> Result<Session> {
        let first = worlds.first().cloned().ok_or_else(|| anyhow!("no worlds to serve"))?;
        let (sim, nav) = Self::fresh(&first, &cfg.rollout);
        Ok(Session {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            worlds,
            current: 0,
            cfg,
            sim,
            nav,
            clock: 0.0,
            recording: false,
            buffer: Vec::new(),
            outcome: None,
            episodes: 0,
        })
    }

    fn fresh(world: &World, r: &RolloutConfig) -> (Simulation, Navigator) {
        let sim = Simulation::new(world.clone(), r.footprint, r.lidar, r.limits, r.odom_noise);
        let nav = Navigator::new(world, r.inflation_radius);
        (sim, nav)
    }

    pub fn world_ids(&self) -> Vec<String> {
        self.worlds.iter().map(|w| w.id.clone()).collect()
    }

    pub fn world(&self) -> &World {
        &self.worlds[self.current]
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Restart in the named world, dropping any unfinished recording.
    pub fn reset(&mut self, id: &str) -> Result<()> {
        let idx = self
            .worlds
            .iter()
            .position(|w| w.id == id)
            .ok_or_else(|| anyhow!("unknown world `{id}`"))?;
        self.current = idx;
        let (sim, nav) = Self::fresh(&self.worlds[idx], &self.cfg.rollout);
        self.sim = sim;
        self.nav = nav;
        self.outcome = None;
        self.buffer.clear();
        Ok(())
    }

    pub fn set_recording(&mut self, on: bool) {
        if !on {
            self.buffer.clear();
        }
        self.recording = on;
    }

    pub fn hello(&self) -> serde_json::Value {
        let w = self.world();
        let r = &self.cfg.rollout;
        json!({
            "type": "hello",
            "world": w.id,
            "worlds": self.world_ids(),
            "grid": world_to_string(w),
            "limits": r.limits,
            "footprint": r.footprint,
            "lidar": r.lidar,
            "stream_beams": STREAM_BEAMS,
            "control_dt": CONTROL_DT,
        })
    }

    /// Advance one control tick with `cmd` (ignored once the episode ended).
    pub fn tick(&mut self, cmd: Action) -> Result<StateFrame> {
        let r = self.cfg.rollout;
        let cmd = if self.outcome.is_some() {
            Action::default()
        } else {
            r.limits.clamp(cmd)
        };
        self.nav.update(&self.sim, r.replan_period);
        let obs = self.nav.observe(&self.sim, r.lookahead)?;
        let points = scan_to_points(&obs.scan, &obs.lidar);
        let verdict = check_action(&points, cmd, &self.cfg.safety);
        if self.outcome.is_none() {
            if self.recording {
                let g = obs.local_goal.unit;
                self.buffer.push(DemoRecord {
                    t: self.sim.state.t,
                    world_id: self.world().id.clone(),
                    episode_id: 0,
                    scan: obs.scan.ranges.clone(),
                    goal: [g.x, g.y],
                    a_star: [cmd.v, cmd.w],
                    a_exec: [cmd.v, cmd.w],
                });
            }
            let event = self.sim.step(cmd, &mut self.rng);
            self.outcome = if event == StepEvent::Collided {
                Some(Outcome::Collision)
            } else if reached_goal(&self.sim, r.goal_tolerance) {
                Some(Outcome::Success)
            } else if self.sim.state.t >= r.timeout - 1e-9 {
                Some(Outcome::Timeout)
            } else {
                None
            };
            if let Some(o) = self.outcome {
                self.finish_episode(o)?;
            }
        }
        self.clock += CONTROL_DT;
        self.frame(cmd, &verdict)
    }

    fn finish_episode(&mut self, outcome: Outcome) -> Result<()> {
        let records = std::mem::take(&mut self.buffer);
        if !self.recording || outcome != Outcome::Success || records.is_empty() {
            return Ok(());
        }
        if let Some(dir) = &self.cfg.record_dir {
            append_episode(dir, records, self.sim.state.t, &self.cfg.rollout)?;
        }
        self.episodes += 1;
        Ok(())
    }

    fn frame(&self, cmd: Action, verdict: &SafetyVerdict) -> Result<StateFrame> {
        let s = &self.sim.state;
        let scan = resample_scan(&self.sim.scan()?, STREAM_BEAMS)?;
        let class = serde_json::to_value(verdict.class)?;
        Ok(StateFrame {
            kind: "state",
            t: self.clock,
            episode_t: s.t,
            world: self.world().id.clone(),
            pose: [s.pose.x, s.pose.y, s.pose.theta],
            scan: scan.ranges,
            goal: [self.sim.world.goal.x, self.sim.world.goal.y],
            path: self
                .nav
                .path()
                .map(|p| p.points.iter().map(|q| [q.x, q.y]).collect())
                .unwrap_or_default(),
            cmd: [cmd.v, cmd.w],
            verdict: VerdictFrame {
                safe: verdict.safe,
                roi: verdict.roi_polygon().iter().map(|p| [p.x, p.y]).collect(),
                class: class.as_str().unwrap_or_default().to_string(),
            },
            recording: self.recording,
            outcome: self.outcome,
        })
    }
}

/// Append one successful human episode to the dataset in `dir`, creating it
/// if needed. Human commands are both target and executed action; σ is 0.
pub fn append_episode(dir: &std::path::Path, mut records: Vec<DemoRecord>, duration: f64, r: &RolloutConfig) -> Result<()> {
    let mut ds = match Dataset::load(dir) {
        Ok(d) => d,
        Err(_) if !dir.join(lics::demo::MANIFEST_FILE).exists() => Dataset {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                h: r.lidar.beams,
                sigma: 0.0,
                expert: "human".into(),
                limits: r.limits,
                lidar: r.lidar,
                footprint: r.footprint,
                seed: 0,
                worlds: Vec::new(),
                episodes: Vec::new(),
                warnings: Vec::new(),
            },
            records: Vec::new(),
        },
        Err(e) => return Err(e).context("existing human dataset is invalid"),
    };
    let episode_id = ds.manifest.episodes.len() as u32;
    let world_id = records[0].world_id.clone();
    for rec in &mut records {
        rec.episode_id = episode_id;
    }
    ds.manifest.episodes.push(EpisodeEntry {
        episode_id,
        world_id: world_id.clone(),
        records: records.len(),
        duration,
    });
    match ds.manifest.worlds.iter_mut().find(|w| w.world_id == world_id) {
        Some(w) => {
            w.attempts += 1;
            w.episodes += 1;
        }
        None => ds.manifest.worlds.push(WorldEntry {
            world_id,
            attempts: 1,
            episodes: 1,
            skipped: false,
        }),
    }
    ds.records.extend(records);
    ds.save(dir)?;
    Ok(())
}

enum Control {
    Record(bool),
    Reset(String, Sender<Result<(), String>>),
}

/// State shared between the simulation owner and connection threads.
struct Shared {
    command: Mutex<Option<(Action, Instant)>>,
    frame: Mutex<(u64, Arc<String>)>,
    hello: Mutex<(u64, Arc<String>)>,
    driver: AtomicBool,
    world_ids: Vec<String>,
    stop: AtomicBool,
    ticks: AtomicU64,
}

/// Serve until `stop` is set. Steps the session at the control rate in the
/// calling thread.
pub fn serve(listener: TcpListener, mut session: Session, stop: Arc<AtomicBool>) -> Result<()> {
    let shared = Arc::new(Shared {
        command: Mutex::new(None),
        frame: Mutex::new((0, Arc::new(String::new()))),
        hello: Mutex::new((1, Arc::new(session.hello().to_string()))),
        driver: AtomicBool::new(false),
        world_ids: session.world_ids(),
        stop: AtomicBool::new(false),
        ticks: AtomicU64::new(0),
    });
    let (ctl_tx, ctl_rx) = mpsc::channel();
    listener.set_nonblocking(true)?;
    let acceptor = {
        let shared = shared.clone();
        thread::spawn(move || accept_loop(listener, shared, ctl_tx))
    };

    let period = Duration::from_secs_f64(CONTROL_DT);
    let mut next = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        drain_control(&ctl_rx, &mut session, &shared);
        let cmd = effective_command(*shared.command.lock().unwrap(), Instant::now());
        let frame = session.tick(cmd)?;
        let text = serde_json::to_string(&frame)?;
        {
            let mut slot = shared.frame.lock().unwrap();
            *slot = (slot.0 + 1, Arc::new(text));
        }
        shared.ticks.fetch_add(1, Ordering::Relaxed);
        // drift-free schedule
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    shared.stop.store(true, Ordering::Relaxed);
    let _ = acceptor.join();
    Ok(())
}

fn drain_control(rx: &Receiver<Control>, session: &mut Session, shared: &Shared) {
    while let Ok(msg) = rx.try_recv() {
        match msg {
            Control::Record(on) => session.set_recording(on),
            Control::Reset(id, reply) => {
                let r = session.reset(&id).map_err(|e| e.to_string());
                if r.is_ok() {
                    let mut h = shared.hello.lock().unwrap();
                    *h = (h.0 + 1, Arc::new(session.hello().to_string()));
                }
                let _ = reply.send(r);
            }
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, ctl: Sender<Control>) {
    let mut workers = Vec::new();
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let ctl = ctl.clone();
                workers.push(thread::spawn(move || {
                    if let Err(e) = handle_client(stream, &shared, &ctl) {
                        log::debug!("client closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn send_json(ws: &mut WebSocket<TcpStream>, v: &serde_json::Value) -> Result<()> {
    ws.send(Message::text(v.to_string()))?;
    Ok(())
}

fn reject(ws: &mut WebSocket<TcpStream>, message: &str) -> Result<()> {
    send_json(ws, &json!({"type": "error", "message": message}))?;
    ws.close(None)?;
    // flush the close frame
    let _ = ws.flush();
    Ok(())
}

fn handle_client(stream: TcpStream, shared: &Shared, ctl: &Sender<Control>) -> Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow!("handshake failed: {e}"))?;
    if shared
        .driver
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return reject(&mut ws, "another driver is connected");
    }
    let result = drive(&mut ws, shared, ctl);
    *shared.command.lock().unwrap() = None;
    shared.driver.store(false, Ordering::SeqCst);
    result
}

fn drive(ws: &mut WebSocket<TcpStream>, shared: &Shared, ctl: &Sender<Control>) -> Result<()> {
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(5)))?;
    let mut sent_frame = shared.frame.lock().unwrap().0;
    let mut sent_hello = 0;
    loop {
        if shared.stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        let hello = shared.hello.lock().unwrap().clone();
        if hello.0 != sent_hello {
            ws.send(Message::text(hello.1.as_str()))?;
            sent_hello = hello.0;
        }
        let frame = shared.frame.lock().unwrap().clone();
        if frame.0 != sent_frame {
            ws.send(Message::text(frame.1.as_str()))?;
            sent_frame = frame.0;
        }
        match ws.read() {
            Ok(Message::Text(text)) => match serde_json::from_str::<ClientMessage>(&text) {
                Ok(msg) => handle_message(ws, msg, shared, ctl)?,
                Err(e) => return reject(ws, &format!("bad message: {e}")),
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(Message::Binary(_)) => return reject(ws, "binary frames are not supported"),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => bail!(e),
        }
    }
}

fn handle_message(
    ws: &mut WebSocket<TcpStream>,
    msg: ClientMessage,
    shared: &Shared,
    ctl: &Sender<Control>,
) -> Result<()> {
    match msg {
        ClientMessage::Cmd { v, w } => {
            if !(v.is_finite() && w.is_finite()) {
                return reject(ws, "command values must be finite");
            }
            *shared.command.lock().unwrap() = Some((Action::new(v, w), Instant::now()));
        }
        ClientMessage::Record { on } => ctl.send(Control::Record(on))?,
        ClientMessage::Reset { world } => {
            let (tx, rx) = mpsc::channel();
            ctl.send(Control::Reset(world, tx))?;
            *shared.command.lock().unwrap() = None;
            match rx.recv_timeout(Duration::from_secs(2)) {
                Ok(Ok(())) => {}
                Ok(Err(msg)) => send_json(ws, &json!({"type": "error", "message": msg}))?,
                Err(_) => bail!("simulation loop did not answer the reset"),
            }
        }
        ClientMessage::ListWorlds => send_json(ws, &json!({"type": "worlds", "ids": shared.world_ids}))?,
    }
    Ok(())
}
