//! Batched building blocks with hand-written backward passes. Activations
//! are row-major `(rows, features)` matrices; every sample contributes a
//! fixed number of consecutive rows.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;

pub fn linear(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += &b.row(0);
    y
}

/// Accumulates parameter gradients into `dw`/`db` and returns `dx`.
pub fn linear_backward(
    x: &ArrayView2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub struct NormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(x: &ArrayView2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let mut xhat = x.to_owned();
    xhat -= &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let mut y = &xhat * &gain.row(0);
    y += &bias.row(0);
    (y, NormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &NormCache,
    gain: &Array2<f64>,
    dy: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * &gain.row(0);
    let mean_d = dxhat.sum_axis(Axis(1)) / d;
    let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&mean_d)
        .and(&mean_dx)
        .and(&cache.inv_std)
        .for_each(|mut row, xh, &md, &mdx, &is| {
            Zip::from(&mut row).and(&xh).for_each(|g, &x| *g = is * (*g - md - x * mdx));
        });
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Attention probabilities for every (sample, head), each `(nq, nk)`.
pub struct AttnCache {
    pub probs: Vec<Array2<f64>>,
}

/// Multi-head scaled dot-product attention. `q` has `nq` rows per sample,
/// `k` and `v` have `nk`; all are `(·, d)` with heads in column blocks.
pub fn attention(
    q: &ArrayView2<f64>,
    k: &ArrayView2<f64>,
    v: &ArrayView2<f64>,
    nq: usize,
    nk: usize,
    heads: usize,
) -> (Array2<f64>, AttnCache) {
    let d = q.ncols();
    let dh = d / heads;
    let batch = q.nrows() / nq;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(batch * heads);
    for b in 0..batch {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let qb = q.slice(s![b * nq..(b + 1) * nq, cols.clone()]);
            let kb = k.slice(s![b * nk..(b + 1) * nk, cols.clone()]);
            let vb = v.slice(s![b * nk..(b + 1) * nk, cols.clone()]);
            let mut p = qb.dot(&kb.t());
            p *= scale;
            for mut row in p.rows_mut() {
                let m = row.fold(f64::NEG_INFINITY, |a, &x| a.max(x));
                row.mapv_inplace(|x| (x - m).exp());
                let z = row.sum();
                row /= z;
            }
            out.slice_mut(s![b * nq..(b + 1) * nq, cols]).assign(&p.dot(&vb));
            probs.push(p);
        }
    }
    (out, AttnCache { probs })
}

/// Returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &ArrayView2<f64>,
    k: &ArrayView2<f64>,
    v: &ArrayView2<f64>,
    cache: &AttnCache,
    dout: &Array2<f64>,
    nq: usize,
    nk: usize,
    heads: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = q.ncols();
    let dh = d / heads;
    let batch = q.nrows() / nq;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(k.raw_dim());
    let mut dv = Array2::zeros(v.raw_dim());
    for b in 0..batch {
        for h in 0..heads {
            let p = &cache.probs[b * heads + h];
            let cols = h * dh..(h + 1) * dh;
            let rq = b * nq..(b + 1) * nq;
            let rk = b * nk..(b + 1) * nk;
            let qb = q.slice(s![rq.clone(), cols.clone()]);
            let kb = k.slice(s![rk.clone(), cols.clone()]);
            let vb = v.slice(s![rk.clone(), cols.clone()]);
            let dob = dout.slice(s![rq.clone(), cols.clone()]);
            dv.slice_mut(s![rk.clone(), cols.clone()]).assign(&p.t().dot(&dob));
            let dp = dob.dot(&vb.t());
            // softmax backward: ds = p ⊙ (dp − Σ_j dp·p)
            let mut ds = &dp * p;
            let row_dot = ds.sum_axis(Axis(1));
            ds -= &(p * &row_dot.insert_axis(Axis(1)));
            ds *= scale;
            dq.slice_mut(s![rq, cols.clone()]).assign(&ds.dot(&kb));
            dk.slice_mut(s![rk, cols]).assign(&ds.t().dot(&qb));
        }
    }
    (dq, dk, dv)
}
