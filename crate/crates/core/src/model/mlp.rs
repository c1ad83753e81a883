use ndarray::{concatenate, Array2, ArrayView2, Axis};

use super::layers::{linear, linear_backward};
use super::{mse_grad, Batch, Builder, LinearIdx, ModelConfig, ModelParams, Tensors};

const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Layout {
    hidden: Vec<LinearIdx>,
    out: LinearIdx,
}

impl Layout {
    pub(super) fn build(cfg: &ModelConfig, b: &mut Builder) -> Layout {
        let m = cfg.mlp_hidden;
        let hidden = (0..HIDDEN_LAYERS)
            .map(|i| {
                let fan_in = if i == 0 { cfg.h + 2 } else { m };
                b.linear(&format!("mlp{i}"), fan_in, m)
            })
            .collect();
        Layout {
            hidden,
            out: b.linear("head", m, 2),
        }
    }
}

/// Inputs of every linear layer, the last entry feeding the head.
pub(super) struct Cache {
    inputs: Vec<Array2<f64>>,
}

pub(super) fn forward(
    l: &Layout,
    params: &ModelParams,
    scans: &ArrayView2<f64>,
    goals: &ArrayView2<f64>,
) -> (Array2<f64>, Cache) {
    let p = &params.tensors;
    let mut x = concatenate(Axis(1), &[scans.view(), goals.view()]).expect("equal rows");
    let mut inputs = Vec::with_capacity(HIDDEN_LAYERS + 1);
    for h in &l.hidden {
        let y = linear(&x.view(), &p.values[h.w], &p.values[h.b]).mapv(f64::tanh);
        inputs.push(std::mem::replace(&mut x, y));
    }
    let out = linear(&x.view(), &p.values[l.out.w], &p.values[l.out.b]);
    inputs.push(x);
    (out, Cache { inputs })
}

pub(super) fn backward(l: &Layout, params: &ModelParams, batch: &Batch, g: &mut Tensors) -> f64 {
    let p = &params.tensors;
    let (pred, c) = forward(l, params, &batch.scans.view(), &batch.goals.view());
    let (loss, dpred) = mse_grad(&pred, &batch.targets);
    let layers: Vec<LinearIdx> = l.hidden.iter().copied().chain([l.out]).collect();
    let mut dy = dpred;
    for (k, lay) in layers.iter().enumerate().rev() {
        let x = &c.inputs[k];
        let (lo, hi) = g.values.split_at_mut(lay.b);
        let mut dx = linear_backward(&x.view(), &p.values[lay.w], &dy, &mut lo[lay.w], &mut hi[0]);
        if k == 0 {
            break;
        }
        // x = tanh(previous pre-activation)
        dx.zip_mut_with(x, |d, &t| *d *= 1.0 - t * t);
        dy = dx;
    }
    loss
}
