//! Behavior cloning: Adam on the MSE between network output and the
//! expert's `a_star`, with a held-out validation split and best-epoch
//! retention.

use std::path::PathBuf;
use std::time::Instant;

use log::info;
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demo::{Dataset, DemoRecord};
use crate::error::{Error, Result};
use crate::model::{mse_loss, save_checkpoint, Batch, ModelConfig, ModelParams, Tensors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Seeds weight initialization.
    pub init_seed: u64,
    /// Seeds the validation split and the per-epoch shuffles.
    pub shuffle_seed: u64,
    pub val_fraction: f64,
    /// Written with the best parameters so far every `checkpoint_every`
    /// epochs and at the end.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 50,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_seed: 0,
            shuffle_seed: 0,
            val_fraction: 0.1,
            checkpoint: None,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidConfig(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if !(self.learning_rate >= 0.0) || self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig("learning_rate must be >= 0, checkpoint_every >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss of each epoch.
    pub train_mse: Vec<f64>,
    /// Validation MSE after each epoch; empty without a validation split.
    pub val_mse: Vec<f64>,
    /// Epoch (0-based) whose parameters were retained.
    pub best_epoch: usize,
    pub train_records: usize,
    pub val_records: usize,
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Stack records into a batch: scans divided by `scan_scale`, targets from
/// `a_star` only.
pub fn records_to_batch(records: &[&DemoRecord], h: usize, scan_scale: f64) -> Result<Batch> {
    let n = records.len();
    let mut scans = Array2::zeros((n, h));
    let mut goals = Array2::zeros((n, 2));
    let mut targets = Array2::zeros((n, 2));
    for (i, r) in records.iter().enumerate() {
        if r.scan.len() != h {
            return Err(Error::SchemaMismatch(format!(
                "record {i} has {} beams, model expects {h}",
                r.scan.len()
            )));
        }
        for (dst, src) in scans.row_mut(i).iter_mut().zip(&r.scan) {
            *dst = src / scan_scale;
        }
        goals.row_mut(i).assign(&ndarray::arr1(&r.goal));
        targets.row_mut(i).assign(&ndarray::arr1(&r.a_star));
    }
    Batch::new(scans, goals, targets)
}

fn check_schema(dataset: &Dataset, model: &ModelConfig) -> Result<()> {
    let m = &dataset.manifest;
    if m.h != model.h {
        return Err(Error::SchemaMismatch(format!("dataset H {} != model H {}", m.h, model.h)));
    }
    if (m.lidar.max_range - model.scan_scale).abs() > 1e-9 {
        return Err(Error::SchemaMismatch(format!(
            "dataset max_range {} != model scan_scale {}",
            m.lidar.max_range, model.scan_scale
        )));
    }
    Ok(())
}

/// Mean MSE over `batch`, evaluated in chunks; parameters are untouched.
pub fn evaluate_mse(params: &ModelParams, batch: &Batch) -> Result<f64> {
    const CHUNK: usize = 256;
    let n = batch.len();
    if n == 0 {
        return Err(Error::InvalidConfig("cannot evaluate an empty slice".into()));
    }
    let mut total = 0.0;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let pred = params.predict(
            &batch.scans.slice(s![start..end, ..]),
            &batch.goals.slice(s![start..end, ..]),
        )?;
        total += mse_loss(&pred.view(), &batch.targets.slice(s![start..end, ..]))? * (end - start) as f64;
    }
    Ok(total / n as f64)
}

/// MSE of the best constant predictor, i.e. the per-column target variance
/// averaged over `v` and `ω`.
pub fn constant_predictor_mse(batch: &Batch) -> f64 {
    let mean = batch.targets.mean_axis(Axis(0)).expect("nonempty batch");
    let diff = &batch.targets - &mean;
    diff.mapv(|d| d * d).mean().unwrap_or(0.0)
}

struct Adam {
    m: Tensors,
    v: Tensors,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.tensors.zeros_like(),
            v: params.tensors.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &Tensors, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.adam_eps);
        for k in 0..grads.len() {
            ndarray::Zip::from(&mut params.tensors.values[k])
                .and(&mut self.m.values[k])
                .and(&mut self.v.values[k])
                .and(&grads.values[k])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Split record indices into (train, validation).
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

/// Fit a fresh model to the dataset. Returns the parameters of the epoch
/// with the lowest validation MSE (the last epoch without a validation
/// split).
pub fn train(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    check_schema(dataset, model)?;
    if dataset.records.is_empty() {
        return Err(Error::InvalidConfig("dataset has no records".into()));
    }
    let clock = Instant::now();
    let all: Vec<&DemoRecord> = dataset.records.iter().collect();
    let data = records_to_batch(&all, model.h, model.scan_scale)?;
    let (train_idx, val_idx) = split_indices(data.len(), cfg.val_fraction, cfg.shuffle_seed);
    let subset = |idx: &[usize]| Batch {
        scans: data.scans.select(Axis(0), idx),
        goals: data.goals.select(Axis(0), idx),
        targets: data.targets.select(Axis(0), idx),
    };
    let val = (!val_idx.is_empty()).then(|| subset(&val_idx));

    let mut params = ModelParams::init(model, cfg.init_seed)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed.wrapping_add(1));
    let mut order = train_idx.clone();
    let mut report = TrainReport {
        train_mse: Vec::with_capacity(cfg.epochs),
        val_mse: Vec::new(),
        best_epoch: 0,
        train_records: train_idx.len(),
        val_records: val_idx.len(),
        wall_time_s: 0.0,
        checkpoint: cfg.checkpoint.clone(),
    };
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = match params.backward(&subset(chunk)) {
                Ok(r) => r,
                Err(e @ Error::NonFinite(_)) => {
                    save_best(cfg, &best)?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grads, cfg);
        }
        let train_mse = sum / order.len() as f64;
        report.train_mse.push(train_mse);
        match &val {
            Some(v) => {
                let mse = evaluate_mse(&params, v)?;
                report.val_mse.push(mse);
                if mse < best_val {
                    best_val = mse;
                    best = params.clone();
                    report.best_epoch = epoch;
                }
                info!("epoch {epoch}: train {train_mse:.5} val {mse:.5}");
            }
            None => {
                best = params.clone();
                report.best_epoch = epoch;
                info!("epoch {epoch}: train {train_mse:.5}");
            }
        }
        if (epoch + 1) % cfg.checkpoint_every == 0 {
            save_best(cfg, &best)?;
        }
    }
    save_best(cfg, &best)?;
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok((best, report))
}

fn save_best(cfg: &TrainConfig, best: &ModelParams) -> Result<()> {
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(best, path)?;
    }
    Ok(())
}
