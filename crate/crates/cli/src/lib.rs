//! Command-line front end: `worldgen`, `record`, `train`, `eval`,
//! `safety-check` and the `teleop` bridge.
//!
//! Default paths live under `$LICS_DATA_DIR` (or `./data`).

pub mod teleop;

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lics::bench::{aggregate, run_benchmark, t_star_table, write_trace, BenchConfig, Report};
use lics::demo::{build_dataset, Dataset, DatasetConfig, NoiseConfig, RECORDS_FILE};
use lics::expert::{Action, DwaExpert};
use lics::model::{load_checkpoint, save_checkpoint, LearnedPolicy, ModelConfig, Variant};
use lics::rollout::RolloutConfig;
use lics::safety::{check_action, scan_to_points, SafetyConfig};
use lics::sim::{LidarConfig, LidarScan};
use lics::trainer::{train, TrainConfig};
use lics::worldgen::{generate_world, load_world, load_world_dir, save_world, split_worlds, World, WorldgenConfig};
use serde::{Deserialize, Serialize};

use crate::teleop::{serve, Session, TeleopConfig};

pub const DATA_DIR_ENV: &str = "LICS_DATA_DIR";

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Parser)]
#[command(name = "lics", version, about = "LiDAR navigation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate procedural worlds with their shortest-path lengths.
    Worldgen(WorldgenArgs),
    /// Record expert demonstrations.
    Record(RecordArgs),
    /// Train a policy on a demonstration dataset.
    Train(TrainArgs),
    /// Closed-loop evaluation of a policy on a set of worlds.
    Eval(EvalArgs),
    /// Vet one action against a scan; JSON on stdin, verdict on stdout.
    SafetyCheck,
    /// Serve the live teleoperation bridge over WebSocket.
    Teleop(TeleopArgs),
}

#[derive(Debug, clap::Args)]
pub struct WorldgenArgs {
    #[arg(long, default_value_t = 30)]
    pub count: u64,
    /// Seed of the first world; world i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: $LICS_DATA_DIR/worlds].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fill: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<usize>,
    /// Also write a shuffled train/ and test/ split with this train share.
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExpertKind {
    Dwa,
    Human,
}

#[derive(Debug, clap::Args)]
pub struct RecordArgs {
    /// World directory or single world file [default: $LICS_DATA_DIR/worlds/train].
    #[arg(long)]
    pub worlds: Option<PathBuf>,
    /// Dataset directory [default: $LICS_DATA_DIR/demos].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExpertKind::Dwa)]
    pub expert: ExpertKind,
    /// Std of the Gaussian noise added to both action components.
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2)]
    pub episodes: u32,
    #[arg(long, default_value_t = 20)]
    pub max_attempts: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub max_v: f64,
    #[arg(long)]
    pub lookahead: Option<f64>,
    /// Port of the teleop bridge for `--expert human`.
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Dataset directory or its records file [default: $LICS_DATA_DIR/demos].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path [default: $LICS_DATA_DIR/model.ckpt].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::Transformer)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Write the training report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Transformer,
    Mlp,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Checkpoint path, or `dwa` for the reference expert.
    #[arg(long)]
    pub policy: String,
    /// World directory or single world file [default: $LICS_DATA_DIR/worlds/test].
    #[arg(long)]
    pub worlds: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub trials: u32,
    #[arg(long, default_value_t = 1.0)]
    pub max_v: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Put the safety layer between policy and actuator.
    #[arg(long)]
    pub safety: bool,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write one JSON-lines trajectory per trial here.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct TeleopArgs {
    /// World directory or single world file [default: $LICS_DATA_DIR/worlds].
    #[arg(long)]
    pub worlds: Option<PathBuf>,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Human dataset directory [default: $LICS_DATA_DIR/human].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub max_v: f64,
}

/// Parse `argv` (including the program name) and run. Returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Worldgen(a) => worldgen(a),
        Command::Record(a) => record(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::SafetyCheck => {
            let mut input = String::new();
            std::io::stdin().read_to_string(&mut input)?;
            let out = safety_check(&input)?;
            println!("{out}");
            Ok(())
        }
        Command::Teleop(a) => teleop(a),
    }
}

fn worldgen(a: WorldgenArgs) -> Result<()> {
    let out = a.out.unwrap_or_else(|| data_dir().join("worlds"));
    let mut base = WorldgenConfig::default();
    if let Some(f) = a.fill {
        base.fill_probability = f;
    }
    if let Some(s) = a.smoothing {
        base.smoothing_iterations = s;
    }
    let worlds = (0..a.count)
        .map(|i| {
            generate_world(&WorldgenConfig {
                seed: a.seed + i,
                ..base
            })
        })
        .collect::<lics::Result<Vec<_>>>()?;
    write_worlds(&out, &worlds)?;
    if let Some(frac) = a.train_fraction {
        let (train, test) = split_worlds(&worlds, frac, a.seed);
        write_worlds(&out.join("train"), &train)?;
        write_worlds(&out.join("test"), &test)?;
        eprintln!("{} worlds ({} train, {} test) in {}", worlds.len(), train.len(), test.len(), out.display());
    } else {
        eprintln!("{} worlds in {}", worlds.len(), out.display());
    }
    Ok(())
}

fn write_worlds(dir: &Path, worlds: &[World]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for w in worlds {
        save_world(w, dir.join(format!("{}.world", w.id)))?;
    }
    Ok(())
}

/// Load a directory of `*.world` files or a single world file.
pub fn load_worlds(path: &Path) -> Result<Vec<World>> {
    let worlds = if path.is_dir() {
        load_world_dir(path)?
    } else {
        vec![load_world(path).with_context(|| format!("reading {}", path.display()))?]
    };
    if worlds.is_empty() {
        bail!("no worlds in {}", path.display());
    }
    Ok(worlds)
}

fn record(a: RecordArgs) -> Result<()> {
    let worlds_dir = a.worlds.unwrap_or_else(|| data_dir().join("worlds").join("train"));
    let out = a.out.unwrap_or_else(|| data_dir().join("demos"));
    let worlds = load_worlds(&worlds_dir)?;
    let mut rollout = RolloutConfig::default();
    rollout.limits = rollout.limits.with_v_max(a.max_v);
    if let Some(l) = a.lookahead {
        rollout.lookahead = l;
    }
    match a.expert {
        ExpertKind::Dwa => {
            let cfg = DatasetConfig {
                rollout,
                noise: NoiseConfig {
                    sigma: a.sigma,
                    seed: a.seed,
                },
                episodes_per_world: a.episodes,
                max_attempts: a.max_attempts,
            };
            let ds = build_dataset(&worlds, DwaExpert::default, &cfg)?;
            for w in &ds.manifest.warnings {
                log::warn!("{w}");
            }
            ds.save(&out)?;
            eprintln!(
                "{} records from {} episodes in {}",
                ds.records.len(),
                ds.manifest.episodes.len(),
                out.display()
            );
            Ok(())
        }
        ExpertKind::Human => serve_teleop(worlds, rollout, out, "127.0.0.1", a.port, a.seed),
    }
}

/// Accepts a dataset directory or the path of its records file.
fn dataset_dir(path: PathBuf) -> PathBuf {
    if path.file_name().is_some_and(|n| n == RECORDS_FILE) || path.extension().is_some_and(|e| e == "ndjson") {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = a.data.unwrap_or_else(|| data_dir().join("demos"));
    let out = a.out.unwrap_or_else(|| data_dir().join("model.ckpt"));
    if !data.exists() {
        bail!("dataset {} does not exist", data.display());
    }
    let ds = Dataset::load(dataset_dir(data.clone())).with_context(|| format!("loading {}", data.display()))?;
    let variant = match a.variant {
        VariantArg::Transformer => Variant::Transformer,
        VariantArg::Mlp => Variant::Mlp,
    };
    let model = ModelConfig {
        h: ds.manifest.h,
        scan_scale: ds.manifest.lidar.max_range,
        ..ModelConfig::default()
    }
    .with_variant(variant);
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.lr,
        init_seed: a.seed,
        shuffle_seed: a.seed,
        val_fraction: a.val_fraction,
        checkpoint: Some(out.clone()),
        ..TrainConfig::default()
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let (params, report) = train(&ds, &model, &cfg)?;
    save_checkpoint(&params, &out)?;
    let json = serde_json::to_string_pretty(&report)?;
    match a.report {
        Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    eprintln!(
        "final train MSE {:.5}, best epoch {}, checkpoint {}",
        report.train_mse.last().copied().unwrap_or(f64::NAN),
        report.best_epoch,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport<'a> {
    policy: &'a str,
    max_v: f64,
    trials: u32,
    safety: bool,
    #[serde(flatten)]
    report: &'a Report,
}

fn eval(a: EvalArgs) -> Result<()> {
    let worlds_dir = a.worlds.clone().unwrap_or_else(|| data_dir().join("worlds").join("test"));
    let worlds = load_worlds(&worlds_dir)?;
    let cfg = BenchConfig {
        trials: a.trials,
        seed: a.seed,
        safety: a.safety.then(SafetyConfig::default),
        record_trace: a.trace_dir.is_some(),
        ..BenchConfig::default().with_max_v(a.max_v)
    };
    let results = if a.policy == "dwa" {
        run_benchmark(&worlds, DwaExpert::default, &cfg)?
    } else {
        let params = load_checkpoint(&a.policy).with_context(|| format!("loading checkpoint {}", a.policy))?;
        run_benchmark(&worlds, || LearnedPolicy::new(params.clone()), &cfg)?
    };
    if let Some(dir) = &a.trace_dir {
        fs::create_dir_all(dir)?;
        for r in &results {
            let path = dir.join(format!("{}_{}_{}.jsonl", r.policy, r.world_id, r.trial));
            write_trace(&r.trace, fs::File::create(&path)?)?;
        }
    }
    let report = aggregate(&results, &t_star_table(&worlds)?)?;
    let out = EvalReport {
        policy: &a.policy,
        max_v: a.max_v,
        trials: a.trials,
        safety: a.safety,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&out)?;
    match &a.report {
        Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    if let Some(p) = &a.csv {
        report.write_csv(fs::File::create(p)?)?;
    }
    let o = &report.overall;
    eprintln!(
        "success {:.1}% ({}/{}), avg time {}, avg score {:.4}",
        o.success_rate,
        o.successes,
        o.trials,
        o.avg_time.map_or("n/a".to_string(), |t| format!("{t:.2} s")),
        o.avg_score
    );
    Ok(())
}

/// Input of `safety-check`. `lidar` and `config` fall back to the defaults.
#[derive(Debug, Deserialize)]
pub struct SafetyCheckInput {
    pub scan: Vec<f64>,
    #[serde(default)]
    pub lidar: Option<LidarConfig>,
    pub action: Action,
    #[serde(default)]
    pub config: Option<SafetyConfig>,
}

/// Verdict JSON (with the ROI polygon) for a `safety-check` request.
pub fn safety_check(input: &str) -> Result<String> {
    let req: SafetyCheckInput = serde_json::from_str(input).context("parsing safety-check input")?;
    let lidar = req.lidar.unwrap_or_default();
    if req.scan.len() != lidar.beams {
        bail!("scan has {} ranges, lidar expects {}", req.scan.len(), lidar.beams);
    }
    if !(req.action.v.is_finite() && req.action.w.is_finite()) {
        bail!("action must be finite");
    }
    let scan = LidarScan { ranges: req.scan };
    let cfg = req.config.unwrap_or_default();
    let verdict = check_action(&scan_to_points(&scan, &lidar), req.action, &cfg);
    let mut json = serde_json::to_value(&verdict)?;
    json["roi"] = serde_json::to_value(verdict.roi_polygon().iter().map(|p| [p.x, p.y]).collect::<Vec<_>>())?;
    Ok(json.to_string())
}

fn teleop(a: TeleopArgs) -> Result<()> {
    let worlds = load_worlds(&a.worlds.unwrap_or_else(|| data_dir().join("worlds")))?;
    let out = a.out.unwrap_or_else(|| data_dir().join("human"));
    let mut rollout = RolloutConfig::default();
    rollout.limits = rollout.limits.with_v_max(a.max_v);
    serve_teleop(worlds, rollout, out, &a.host, a.port, 0)
}

pub fn serve_teleop(worlds: Vec<World>, rollout: RolloutConfig, out: PathBuf, host: &str, port: u16, seed: u64) -> Result<()> {
    let listener = TcpListener::bind((host, port)).with_context(|| format!("port {port} is not available"))?;
    let session = Session::new(
        worlds,
        TeleopConfig {
            rollout,
            safety: SafetyConfig {
                footprint: rollout.footprint,
                ..SafetyConfig::default()
            },
            record_dir: Some(out),
            seed,
        },
    )?;
    // tests and scripts read the bound address from here
    println!("listening on ws://{}", listener.local_addr()?);
    std::io::stdout().flush()?;
    serve(listener, session, Arc::new(AtomicBool::new(false)))
}
