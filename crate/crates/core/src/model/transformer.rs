use ndarray::{s, Array2, ArrayView2, Axis};

use super::layers::{
    attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward,
    AttnCache, NormCache,
};
use super::{mse_grad, Batch, Builder, Init, LinearIdx, ModelConfig, ModelParams, NormIdx, Tensors};

#[derive(Debug, Clone, PartialEq)]
struct EncIdx {
    ln1: NormIdx,
    qkv: LinearIdx,
    proj: LinearIdx,
    ln2: NormIdx,
    ff1: LinearIdx,
    ff2: LinearIdx,
}

#[derive(Debug, Clone, PartialEq)]
struct DecIdx {
    ln1: NormIdx,
    q: LinearIdx,
    kv: LinearIdx,
    proj: LinearIdx,
    ln2: NormIdx,
    ff1: LinearIdx,
    ff2: LinearIdx,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Layout {
    patch: LinearIdx,
    pos: usize,
    enc: Vec<EncIdx>,
    enc_norm: NormIdx,
    goal: LinearIdx,
    dec: Vec<DecIdx>,
    dec_norm: NormIdx,
    head: LinearIdx,
}

impl Layout {
    pub(super) fn build(cfg: &ModelConfig, b: &mut Builder) -> Layout {
        let (d, ff) = (cfg.d_model, cfg.d_ff);
        let patch = b.linear("patch", cfg.patch_len(), d);
        let pos = b.add("pos".into(), cfg.n_patches, d, Init::Normal(0.02));
        let enc = (0..cfg.n_layers_enc)
            .map(|i| EncIdx {
                ln1: b.norm(&format!("enc{i}.ln1"), d),
                qkv: b.linear(&format!("enc{i}.qkv"), d, 3 * d),
                proj: b.linear(&format!("enc{i}.proj"), d, d),
                ln2: b.norm(&format!("enc{i}.ln2"), d),
                ff1: b.linear(&format!("enc{i}.ff1"), d, ff),
                ff2: b.linear(&format!("enc{i}.ff2"), ff, d),
            })
            .collect();
        let enc_norm = b.norm("enc_norm", d);
        let goal = b.linear("goal", 2, d);
        let dec = (0..cfg.n_layers_dec)
            .map(|i| DecIdx {
                ln1: b.norm(&format!("dec{i}.ln1"), d),
                q: b.linear(&format!("dec{i}.q"), d, d),
                kv: b.linear(&format!("dec{i}.kv"), d, 2 * d),
                proj: b.linear(&format!("dec{i}.proj"), d, d),
                ln2: b.norm(&format!("dec{i}.ln2"), d),
                ff1: b.linear(&format!("dec{i}.ff1"), d, ff),
                ff2: b.linear(&format!("dec{i}.ff2"), ff, d),
            })
            .collect();
        let dec_norm = b.norm("dec_norm", d);
        let head = b.linear("head", d, 2);
        Layout {
            patch,
            pos,
            enc,
            enc_norm,
            goal,
            dec,
            dec_norm,
            head,
        }
    }
}

struct Ffn {
    input: Array2<f64>,
    norm: NormCache,
    pre: Array2<f64>,
    act: Array2<f64>,
}

struct EncCache {
    a: Array2<f64>,
    n1: NormCache,
    qkv: Array2<f64>,
    attn: AttnCache,
    o: Array2<f64>,
    ffn: Ffn,
}

struct DecCache {
    a: Array2<f64>,
    n1: NormCache,
    q: Array2<f64>,
    kv: Array2<f64>,
    attn: AttnCache,
    o: Array2<f64>,
    ffn: Ffn,
}

pub(super) struct Cache {
    patches: Array2<f64>,
    enc: Vec<EncCache>,
    mem_norm: NormCache,
    mem: Array2<f64>,
    dec: Vec<DecCache>,
    out_norm: NormCache,
    out_in: Array2<f64>,
}

fn lin(p: &Tensors, l: LinearIdx, x: &ArrayView2<f64>) -> Array2<f64> {
    linear(x, &p.values[l.w], &p.values[l.b])
}

fn lin_back(p: &Tensors, g: &mut Tensors, l: LinearIdx, x: &ArrayView2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let (dw, db) = pair_mut(&mut g.values, l.w, l.b);
    linear_backward(x, &p.values[l.w], dy, dw, db)
}

fn norm(p: &Tensors, n: NormIdx, x: &ArrayView2<f64>) -> (Array2<f64>, NormCache) {
    layer_norm(x, &p.values[n.g], &p.values[n.b])
}

fn norm_back(p: &Tensors, g: &mut Tensors, n: NormIdx, c: &NormCache, dy: &Array2<f64>) -> Array2<f64> {
    let (dg, db) = pair_mut(&mut g.values, n.g, n.b);
    layer_norm_backward(c, &p.values[n.g], dy, dg, db)
}

fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// `x + FFN(LN(x))`, in place.
fn ffn_forward(p: &Tensors, ln: NormIdx, ff1: LinearIdx, ff2: LinearIdx, x: &mut Array2<f64>) -> Ffn {
    let (input, norm_cache) = norm(p, ln, &x.view());
    let pre = lin(p, ff1, &input.view());
    let act = pre.mapv(gelu);
    *x += &lin(p, ff2, &act.view());
    Ffn {
        input,
        norm: norm_cache,
        pre,
        act,
    }
}

/// Gradient through the FFN branch only; the caller adds the residual.
fn ffn_backward(
    p: &Tensors,
    g: &mut Tensors,
    (ln, ff1, ff2): (NormIdx, LinearIdx, LinearIdx),
    c: &Ffn,
    dz: &Array2<f64>,
) -> Array2<f64> {
    let mut dh = lin_back(p, g, ff2, &c.act.view(), dz);
    dh.zip_mut_with(&c.pre, |d, &x| *d *= gelu_grad(x));
    let dn = lin_back(p, g, ff1, &c.input.view(), &dh);
    norm_back(p, g, ln, &c.norm, &dn)
}

pub(super) fn forward(
    l: &Layout,
    params: &ModelParams,
    scans: &ArrayView2<f64>,
    goals: &ArrayView2<f64>,
) -> (Array2<f64>, Cache) {
    let cfg = &params.config;
    let p = &params.tensors;
    let (b, n, d, heads) = (scans.nrows(), cfg.n_patches, cfg.d_model, cfg.n_heads);
    let patches = scans
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * n, cfg.patch_len()))
        .expect("contiguous scans");
    let mut x = lin(p, l.patch, &patches.view());
    let pos = &p.values[l.pos];
    for i in 0..b {
        let mut rows = x.slice_mut(s![i * n..(i + 1) * n, ..]);
        rows += pos;
    }

    let mut enc = Vec::with_capacity(l.enc.len());
    for e in &l.enc {
        let (a, n1) = norm(p, e.ln1, &x.view());
        let qkv = lin(p, e.qkv, &a.view());
        let (o, attn) = attention(
            &qkv.slice(s![.., 0..d]),
            &qkv.slice(s![.., d..2 * d]),
            &qkv.slice(s![.., 2 * d..]),
            n,
            n,
            heads,
        );
        x += &lin(p, e.proj, &o.view());
        let ffn = ffn_forward(p, e.ln2, e.ff1, e.ff2, &mut x);
        enc.push(EncCache {
            a,
            n1,
            qkv,
            attn,
            o,
            ffn,
        });
    }
    let (mem, mem_norm) = norm(p, l.enc_norm, &x.view());

    let mut t = lin(p, l.goal, goals);
    let mut dec = Vec::with_capacity(l.dec.len());
    for e in &l.dec {
        let (a, n1) = norm(p, e.ln1, &t.view());
        let q = lin(p, e.q, &a.view());
        let kv = lin(p, e.kv, &mem.view());
        let (o, attn) = attention(&q.view(), &kv.slice(s![.., 0..d]), &kv.slice(s![.., d..]), 1, n, heads);
        t += &lin(p, e.proj, &o.view());
        let ffn = ffn_forward(p, e.ln2, e.ff1, e.ff2, &mut t);
        dec.push(DecCache {
            a,
            n1,
            q,
            kv,
            attn,
            o,
            ffn,
        });
    }
    let (out_in, out_norm) = norm(p, l.dec_norm, &t.view());
    let out = lin(p, l.head, &out_in.view());
    (
        out,
        Cache {
            patches,
            enc,
            mem_norm,
            mem,
            dec,
            out_norm,
            out_in,
        },
    )
}

pub(super) fn backward(l: &Layout, params: &ModelParams, batch: &Batch, g: &mut Tensors) -> f64 {
    let cfg = &params.config;
    let p = &params.tensors;
    let (n, d, heads) = (cfg.n_patches, cfg.d_model, cfg.n_heads);
    let (pred, c) = forward(l, params, &batch.scans.view(), &batch.goals.view());
    let (loss, dpred) = mse_grad(&pred, &batch.targets);

    let dn = lin_back(p, g, l.head, &c.out_in.view(), &dpred);
    let mut dt = norm_back(p, g, l.dec_norm, &c.out_norm, &dn);
    let mut dmem = Array2::<f64>::zeros(c.mem.raw_dim());
    for (e, dc) in l.dec.iter().zip(&c.dec).rev() {
        dt += &ffn_backward(p, g, (e.ln2, e.ff1, e.ff2), &dc.ffn, &dt);
        let d_o = lin_back(p, g, e.proj, &dc.o.view(), &dt);
        let (dq, dk, dv) = attention_backward(
            &dc.q.view(),
            &dc.kv.slice(s![.., 0..d]),
            &dc.kv.slice(s![.., d..]),
            &dc.attn,
            &d_o,
            1,
            n,
            heads,
        );
        let mut dkv = Array2::zeros(dc.kv.raw_dim());
        dkv.slice_mut(s![.., 0..d]).assign(&dk);
        dkv.slice_mut(s![.., d..]).assign(&dv);
        dmem += &lin_back(p, g, e.kv, &c.mem.view(), &dkv);
        let da = lin_back(p, g, e.q, &dc.a.view(), &dq);
        dt += &norm_back(p, g, e.ln1, &dc.n1, &da);
    }
    lin_back(p, g, l.goal, &batch.goals.view(), &dt);

    let mut dx = norm_back(p, g, l.enc_norm, &c.mem_norm, &dmem);
    for (e, ec) in l.enc.iter().zip(&c.enc).rev() {
        dx += &ffn_backward(p, g, (e.ln2, e.ff1, e.ff2), &ec.ffn, &dx);
        let d_o = lin_back(p, g, e.proj, &ec.o.view(), &dx);
        let (dq, dk, dv) = attention_backward(
            &ec.qkv.slice(s![.., 0..d]),
            &ec.qkv.slice(s![.., d..2 * d]),
            &ec.qkv.slice(s![.., 2 * d..]),
            &ec.attn,
            &d_o,
            n,
            n,
            heads,
        );
        let mut dqkv = Array2::zeros(ec.qkv.raw_dim());
        dqkv.slice_mut(s![.., 0..d]).assign(&dq);
        dqkv.slice_mut(s![.., d..2 * d]).assign(&dk);
        dqkv.slice_mut(s![.., 2 * d..]).assign(&dv);
        let da = lin_back(p, g, e.qkv, &ec.a.view(), &dqkv);
        dx += &norm_back(p, g, e.ln1, &ec.n1, &da);
    }
    let dpos = &mut g.values[l.pos];
    let rows = dx.nrows() / n;
    *dpos += &dx
        .view()
        .into_shape_with_order((rows, n, d))
        .expect("contiguous")
        .sum_axis(Axis(0));
    lin_back(p, g, l.patch, &c.patches.view(), &dx);
    loss
}
