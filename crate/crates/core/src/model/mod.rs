//! Policy networks mapping a LiDAR scan and a unit local-goal direction to
//! `(v, ω)`: the patch transformer and an MLP ablation, both with manual
//! backpropagation in f64.
//!
//! The transformer splits the scan into `N` patches of `D = H/N` beams,
//! embeds them with learnable positional embeddings and runs pre-norm
//! self-attention blocks over them. A single goal token then cross-attends
//! to that memory through decoder blocks without self-attention, and a
//! linear head produces the action.

mod checkpoint;
pub mod layers;
mod mlp;
mod transformer;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{Action, Observation, Policy};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Transformer,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Scan length H.
    pub h: usize,
    /// Patch count N.
    pub n_patches: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    /// Hidden width of the MLP variant.
    pub mlp_hidden: usize,
    /// Scans are divided by this before entering the network, m.
    pub scan_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Transformer,
            h: 720,
            n_patches: 20,
            d_model: 128,
            n_heads: 4,
            d_ff: 256,
            n_layers_enc: 3,
            n_layers_dec: 3,
            mlp_hidden: 448,
            scan_scale: 20.0,
        }
    }
}

impl ModelConfig {
    /// H=24, N=4, d_model=8, 2 heads; used by gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            h: 24,
            n_patches: 4,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            mlp_hidden: 12,
            scan_scale: 1.0,
            ..ModelConfig::default()
        }
    }

    pub fn mlp() -> Self {
        ModelConfig {
            variant: Variant::Mlp,
            ..ModelConfig::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn patch_len(&self) -> usize {
        self.h / self.n_patches
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.h == 0 || self.n_patches == 0 || !self.h.is_multiple_of(self.n_patches) {
            return bad(format!("patch count {} must divide scan length {}", self.n_patches, self.h));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.n_heads));
        }
        if self.d_model == 0 || self.d_ff == 0 || self.mlp_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.n_layers_enc == 0 || self.n_layers_dec == 0 {
            return bad("layer counts must be positive".into());
        }
        if !(self.scan_scale > 0.0) {
            return bad(format!("scan_scale {} must be > 0", self.scan_scale));
        }
        Ok(())
    }
}

/// How a freshly created tensor is filled.
#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in ±1/√fan_in.
    FanIn(usize),
    Normal(f64),
    Const(f64),
}

/// Named 2-D tensors in creation order. Biases and norm parameters are
/// `(1, n)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

impl Tensors {
    fn new() -> Self {
        Tensors {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn zeros_like(&self) -> Tensors {
        Tensors {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (n, v) in self.names.iter().zip(&self.values) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(n.clone()));
            }
        }
        Ok(())
    }
}

/// Registers tensors during construction and hands back their indices.
struct Builder<'a> {
    tensors: Tensors,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let value = match (&mut self.rng, init) {
            (None, _) => Array2::zeros((rows, cols)),
            (Some(rng), Init::FanIn(fan_in)) => {
                let a = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
            }
            (Some(rng), Init::Normal(std)) => {
                let n = Normal::new(0.0, std).expect("std > 0");
                Array2::from_shape_simple_fn((rows, cols), || n.sample(&mut **rng))
            }
            (Some(_), Init::Const(c)) => Array2::from_elem((rows, cols), c),
        };
        self.tensors.names.push(name);
        self.tensors.values.push(value);
        self.tensors.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearIdx {
        LinearIdx {
            w: self.add(format!("{name}.w"), fan_in, fan_out, Init::FanIn(fan_in)),
            b: self.add(format!("{name}.b"), 1, fan_out, Init::FanIn(fan_in)),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIdx {
        NormIdx {
            g: self.add(format!("{name}.g"), 1, d, Init::Const(1.0)),
            b: self.add(format!("{name}.b"), 1, d, Init::Const(0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LinearIdx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NormIdx {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Transformer(transformer::Layout),
    Mlp(mlp::Layout),
}

/// Network weights together with the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Tensors,
    layout: Layout,
}

impl ModelParams {
    /// Fan-in uniform weights, N(0, 0.02) positional embeddings, unit
    /// norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, Some(&mut rng))
    }

    pub fn zeros(config: &ModelConfig) -> Result<ModelParams> {
        Self::build(config, None)
    }

    fn build(config: &ModelConfig, rng: Option<&mut ChaCha8Rng>) -> Result<ModelParams> {
        config.validate()?;
        let mut b = Builder {
            tensors: Tensors::new(),
            rng,
        };
        let layout = match config.variant {
            Variant::Transformer => Layout::Transformer(transformer::Layout::build(config, &mut b)),
            Variant::Mlp => Layout::Mlp(mlp::Layout::build(config, &mut b)),
        };
        Ok(ModelParams {
            config: config.clone(),
            tensors: b.tensors,
            layout,
        })
    }

    pub fn param_count(&self) -> usize {
        self.tensors.scalar_count()
    }

    /// Batched forward pass. `scans` are already divided by `scan_scale`.
    pub fn predict(&self, scans: &ArrayView2<f64>, goals: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(scans, goals)?;
        self.tensors.check_finite()?;
        Ok(match &self.layout {
            Layout::Transformer(l) => transformer::forward(l, self, scans, goals).0,
            Layout::Mlp(l) => mlp::forward(l, self, scans, goals).0,
        })
    }

    /// Single-sample forward pass on a raw scan (meters) and unit goal.
    pub fn forward(&self, scan: &[f64], goal: [f64; 2]) -> Result<Action> {
        let s = self.config.scan_scale;
        let scans = Array2::from_shape_fn((1, scan.len()), |(_, j)| scan[j] / s);
        let goals = Array2::from_shape_vec((1, 2), goal.to_vec()).expect("1×2");
        let out = self.predict(&scans.view(), &goals.view())?;
        Ok(Action::new(out[[0, 0]], out[[0, 1]]))
    }

    /// MSE loss of the batch and its gradient for every tensor.
    pub fn backward(&self, batch: &Batch) -> Result<(f64, Tensors)> {
        self.check_inputs(&batch.scans.view(), &batch.goals.view())?;
        let mut grads = self.tensors.zeros_like();
        let loss = match &self.layout {
            Layout::Transformer(l) => transformer::backward(l, self, batch, &mut grads),
            Layout::Mlp(l) => mlp::backward(l, self, batch, &mut grads),
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }

    fn check_inputs(&self, scans: &ArrayView2<f64>, goals: &ArrayView2<f64>) -> Result<()> {
        if scans.ncols() != self.config.h {
            return Err(Error::ShapeMismatch(format!(
                "scan length {} != model H {}",
                scans.ncols(),
                self.config.h
            )));
        }
        if goals.ncols() != 2 || goals.nrows() != scans.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "goals {:?} do not match {} scans",
                goals.shape(),
                scans.nrows()
            )));
        }
        Ok(())
    }
}

/// Training pairs: normalized scans `(B, H)`, unit goals `(B, 2)` and
/// target actions `(B, 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub scans: Array2<f64>,
    pub goals: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn new(scans: Array2<f64>, goals: Array2<f64>, targets: Array2<f64>) -> Result<Batch> {
        let b = scans.nrows();
        if goals.dim() != (b, 2) || targets.dim() != (b, 2) {
            return Err(Error::ShapeMismatch(format!(
                "batch of {b} scans with goals {:?} and targets {:?}",
                goals.dim(),
                targets.dim()
            )));
        }
        for g in goals.rows() {
            if (g[0].hypot(g[1]) - 1.0).abs() > 1e-6 {
                return Err(Error::ShapeMismatch(format!("goal ({}, {}) is not unit length", g[0], g[1])));
            }
        }
        Ok(Batch { scans, goals, targets })
    }

    pub fn len(&self) -> usize {
        self.scans.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean over all elements of the squared difference.
pub fn mse_loss(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", pred.dim(), target.dim())));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

fn mse_grad(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len().max(1) as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}

/// Reshape a scan into `N × D` patches, row-major.
pub fn patchify(scan: &[f64], n: usize) -> Result<Array2<f64>> {
    if n == 0 || !scan.len().is_multiple_of(n) {
        return Err(Error::ShapeMismatch(format!("{n} patches do not divide {} beams", scan.len())));
    }
    let d = scan.len() / n;
    Ok(Array2::from_shape_vec((n, d), scan.to_vec()).expect("n·d = len"))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub samples: usize,
    /// Tensor holding the worst entry.
    pub worst: String,
}

/// Compare `analytic` against central differences on `samples` scalar
/// parameters spread over every tensor.
pub fn check_gradients(
    params: &ModelParams,
    batch: &Batch,
    analytic: &Tensors,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_at = |p: &ModelParams| -> Result<f64> {
        let pred = p.predict(&batch.scans.view(), &batch.goals.view())?;
        mse_loss(&pred.view(), &batch.targets.view())
    };
    let count = params.tensors.len();
    let mut probe = params.clone();
    let mut max_rel = 0.0;
    let mut worst = String::new();
    for k in 0..samples.max(count) {
        // first visit every tensor once, then sample uniformly
        let t = if k < count { k } else { rng.random_range(0..count) };
        let i = rng.random_range(0..params.tensors.values[t].len());
        let orig = params.tensors.values[t].as_slice().expect("standard layout")[i];
        fn slot(p: &mut ModelParams, t: usize, i: usize) -> &mut f64 {
            &mut p.tensors.values[t].as_slice_mut().expect("standard layout")[i]
        }
        *slot(&mut probe, t, i) = orig + step;
        let up = loss_at(&probe)?;
        *slot(&mut probe, t, i) = orig - step;
        let down = loss_at(&probe)?;
        *slot(&mut probe, t, i) = orig;
        let fd = (up - down) / (2.0 * step);
        let ga = analytic.values[t].as_slice().expect("standard layout")[i];
        let rel = (ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
            worst = params.tensors.names[t].clone();
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        samples: samples.max(count),
        worst,
    })
}

/// Analytic gradients checked against finite differences on 128 sampled
/// parameters.
pub fn grad_check(params: &ModelParams, batch: &Batch, step: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&step) {
        return Err(Error::InvalidConfig(format!("step {step} outside [1e-6, 1e-3]")));
    }
    let (_, grads) = params.backward(batch)?;
    check_gradients(params, batch, &grads, step, 128, 0)
}

/// Learned policy: normalizes the scan and feeds the unit local goal.
pub struct LearnedPolicy {
    pub params: ModelParams,
    pub name: String,
}

impl LearnedPolicy {
    pub fn new(params: ModelParams) -> Self {
        let name = match params.config.variant {
            Variant::Transformer => "lics",
            Variant::Mlp => "lics-mlp",
        };
        LearnedPolicy {
            params,
            name: name.into(),
        }
    }
}

impl Policy for LearnedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let g = obs.local_goal.unit;
        let a = self
            .params
            .forward(&obs.scan.ranges, [g.x, g.y])
            .map_err(|e| Error::Policy(e.to_string()))?;
        if !a.is_finite() {
            return Err(Error::Policy("network produced a non-finite action".into()));
        }
        Ok(obs.limits.clamp(a))
    }
}
