//! Pre-LayerNorm encoder-decoder transformer with explicit backpropagation.
//!
//! Parameters live in one flat list of named tensors so the optimizer,
//! checkpoint writer and gradient checker can treat them uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::ops::{
    add_assign, col_sum_acc, gelu, gelu_grad, log_softmax_at, matmul, matmul_a_bt, matmul_at_b_acc, softmax_row,
};
use super::vocab::TokenId;
use crate::scalar::{lit, Scalar};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            data: vec![T::zero(); n],
        }
    }
}

/// Named parameter (or gradient) blocks in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Flat coordinate → (tensor, offset).
    pub fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.data.len() {
                return (i, flat);
            }
            flat -= t.data.len();
        }
        panic!("coordinate out of range");
    }

    pub fn get_flat(&self, flat: usize) -> T {
        let (t, o) = self.locate(flat);
        self.tensors[t].data[o]
    }

    pub fn set_flat(&mut self, flat: usize, v: T) {
        let (t, o) = self.locate(flat);
        self.tensors[t].data[o] = v;
    }

    pub fn sq_norm(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum()
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            add_assign(&mut a.data, &b.data);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LnIdx {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct AttnIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct FfIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayerIdx {
    ln1: LnIdx,
    attn: AttnIdx,
    ln2: LnIdx,
    ff: FfIdx,
}

#[derive(Debug, Clone, Copy)]
struct DecLayerIdx {
    ln1: LnIdx,
    self_attn: AttnIdx,
    ln2: LnIdx,
    cross: AttnIdx,
    ln3: LnIdx,
    ff: FfIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    tok_emb: usize,
    enc_pos: usize,
    dec_pos: usize,
    enc: Vec<EncLayerIdx>,
    enc_ln: LnIdx,
    dec: Vec<DecLayerIdx>,
    dec_ln: LnIdx,
    w_out: usize,
    b_out: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

struct LayoutBuilder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIdx {
        LnIdx {
            g: self.push(format!("{prefix}.gamma"), vec![d], Init::Ones),
            b: self.push(format!("{prefix}.beta"), vec![d], Init::Zeros),
        }
    }

    fn linear(&mut self, prefix: &str, name: &str, din: usize, dout: usize) -> (usize, usize) {
        (
            self.push(format!("{prefix}.w{name}"), vec![din, dout], Init::Normal),
            self.push(format!("{prefix}.b{name}"), vec![dout], Init::Zeros),
        )
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let (wq, bq) = self.linear(prefix, "q", d, d);
        let (wk, bk) = self.linear(prefix, "k", d, d);
        let (wv, bv) = self.linear(prefix, "v", d, d);
        let (wo, bo) = self.linear(prefix, "o", d, d);
        AttnIdx {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn ff(&mut self, prefix: &str, d: usize, f: usize) -> FfIdx {
        let (w1, b1) = self.linear(prefix, "1", d, f);
        let (w2, b2) = self.linear(prefix, "2", f, d);
        FfIdx { w1, b1, w2, b2 }
    }
}

fn build_layout(config: &ModelConfig, vocab_size: usize) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let d = config.d_model;
    let mut b = LayoutBuilder { specs: Vec::new() };
    let tok_emb = b.push("tok_emb".into(), vec![vocab_size, d], Init::Normal);
    let enc_pos = b.push("enc_pos".into(), vec![config.context_len, d], Init::Normal);
    let dec_pos = b.push("dec_pos".into(), vec![config.decoder_len(), d], Init::Normal);
    let enc = (0..config.n_enc_layers)
        .map(|i| {
            let p = format!("enc.{i}");
            EncLayerIdx {
                ln1: b.ln(&format!("{p}.ln1"), d),
                attn: b.attn(&format!("{p}.attn"), d),
                ln2: b.ln(&format!("{p}.ln2"), d),
                ff: b.ff(&format!("{p}.ff"), d, config.ff_dim),
            }
        })
        .collect();
    let enc_ln = b.ln("enc.ln", d);
    let dec = (0..config.n_dec_layers)
        .map(|i| {
            let p = format!("dec.{i}");
            DecLayerIdx {
                ln1: b.ln(&format!("{p}.ln1"), d),
                self_attn: b.attn(&format!("{p}.self"), d),
                ln2: b.ln(&format!("{p}.ln2"), d),
                cross: b.attn(&format!("{p}.cross"), d),
                ln3: b.ln(&format!("{p}.ln3"), d),
                ff: b.ff(&format!("{p}.ff"), d, config.ff_dim),
            }
        })
        .collect();
    let dec_ln = b.ln("dec.ln", d);
    let w_out = b.push("out.w".into(), vec![d, vocab_size], Init::Normal);
    let b_out = b.push("out.b".into(), vec![vocab_size], Init::Zeros);
    (
        Layout {
            tok_emb,
            enc_pos,
            dec_pos,
            enc,
            enc_ln,
            dec,
            dec_ln,
            w_out,
            b_out,
        },
        b.specs,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForwardError {
    #[error("token id {0} outside vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("sequence of length {len} exceeds positional table of {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty {0} sequence")]
    Empty(&'static str),
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
}

/// The seq2seq network.
#[derive(Debug, Clone)]
pub struct Transformer<T> {
    config: ModelConfig,
    vocab_size: usize,
    layout: Layout,
    pub params: ParamStore<T>,
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct AttnCache<T> {
    xq: Vec<T>,
    xkv: Vec<T>,
    nq: usize,
    nkv: usize,
    q: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    p: Vec<Vec<T>>,
    o: Vec<T>,
}

struct FfCache<T> {
    x: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

struct EncLayerCache<T> {
    ln1: LnCache<T>,
    attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    ff: FfCache<T>,
    drop2: Option<Vec<T>>,
}

struct DecLayerCache<T> {
    ln1: LnCache<T>,
    self_attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    cross: AttnCache<T>,
    drop2: Option<Vec<T>>,
    ln3: LnCache<T>,
    ff: FfCache<T>,
    drop3: Option<Vec<T>>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T> {
    src: Vec<TokenId>,
    dec_in: Vec<TokenId>,
    enc_layers: Vec<EncLayerCache<T>>,
    enc_ln: LnCache<T>,
    enc_out: Vec<T>,
    dec_layers: Vec<DecLayerCache<T>>,
    dec_ln: LnCache<T>,
    hidden: Vec<T>,
    /// `dec_in.len() × vocab` logits.
    pub logits: Vec<T>,
}

/// Dropout state for a training-mode forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Transformer<T> {
    /// Scaled-normal initialization (std 0.02), seeded by `config.seed`.
    pub fn new(config: ModelConfig, vocab_size: usize) -> Self {
        let (layout, specs) = build_layout(&config, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors = specs
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| match init {
                        Init::Normal => T::from_f64_lossy(normal.sample(&mut rng)),
                        Init::Zeros => T::zero(),
                        Init::Ones => T::one(),
                    })
                    .collect();
                Tensor { name, shape, data }
            })
            .collect();
        Self {
            config,
            vocab_size,
            layout,
            params: ParamStore { tensors },
        }
    }

    /// Rebuild from stored parameter blocks, checking names and shapes.
    pub fn from_params(config: ModelConfig, vocab_size: usize, params: ParamStore<T>) -> Result<Self, ForwardError> {
        let (layout, specs) = build_layout(&config, vocab_size);
        if specs.len() != params.tensors.len() {
            return Err(ForwardError::Layout(format!(
                "expected {} tensors, found {}",
                specs.len(),
                params.tensors.len()
            )));
        }
        for ((name, shape, _), t) in specs.iter().zip(&params.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(ForwardError::Layout(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, name, shape
                )));
            }
        }
        Ok(Self {
            config,
            vocab_size,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    fn p(&self, idx: usize) -> &[T] {
        &self.params.tensors[idx].data
    }

    fn check_tokens(&self, toks: &[TokenId], what: &'static str, max: usize) -> Result<(), ForwardError> {
        if toks.is_empty() {
            return Err(ForwardError::Empty(what));
        }
        if toks.len() > max {
            return Err(ForwardError::TooLong { len: toks.len(), max });
        }
        if let Some(&t) = toks.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(ForwardError::TokenOutOfRange(t));
        }
        Ok(())
    }

    fn embed(&self, toks: &[TokenId], pos_idx: usize) -> Vec<T> {
        let d = self.config.d_model;
        let emb = self.p(self.layout.tok_emb);
        let pos = self.p(pos_idx);
        let mut x = Vec::with_capacity(toks.len() * d);
        for (i, &t) in toks.iter().enumerate() {
            let t = t as usize;
            x.extend(emb[t * d..(t + 1) * d].iter().zip(&pos[i * d..(i + 1) * d]).map(|(&a, &b)| a + b));
        }
        x
    }

    fn layer_norm(&self, x: &[T], idx: LnIdx) -> (Vec<T>, LnCache<T>) {
        let d = self.config.d_model;
        let (g, b) = (self.p(idx.g), self.p(idx.b));
        let n = x.len() / d;
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = vec![T::zero(); n];
        let df: T = lit(d as f64);
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / df;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
            let rs = T::one() / (var + lit(LN_EPS)).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * g[j] + b[j];
            }
        }
        (y, LnCache { xhat, rstd })
    }

    fn layer_norm_backward(&self, dy: &[T], cache: &LnCache<T>, idx: LnIdx, grads: &mut ParamStore<T>) -> Vec<T> {
        let d = self.config.d_model;
        let g = self.p(idx.g);
        let n = dy.len() / d;
        let df: T = lit(d as f64);
        let mut dx = vec![T::zero(); dy.len()];
        {
            let dg = &mut grads.tensors[idx.g].data;
            for r in 0..n {
                for j in 0..d {
                    dg[j] += dy[r * d + j] * cache.xhat[r * d + j];
                }
            }
        }
        col_sum_acc(dy, d, &mut grads.tensors[idx.b].data);
        for r in 0..n {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dyr = &dy[r * d..(r + 1) * d];
            let mut sum_dxh = T::zero();
            let mut sum_dxh_xh = T::zero();
            for j in 0..d {
                let dxh = dyr[j] * g[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
            }
            let rs = cache.rstd[r];
            for j in 0..d {
                let dxh = dyr[j] * g[j];
                dx[r * d + j] = rs * (dxh - sum_dxh / df - xh[j] * sum_dxh_xh / df);
            }
        }
        dx
    }

    fn linear(&self, x: &[T], w: usize, b: usize, din: usize, dout: usize) -> Vec<T> {
        let n = x.len() / din;
        let mut y = matmul(x, self.p(w), n, din, dout);
        let bias = self.p(b);
        for row in y.chunks_exact_mut(dout) {
            add_assign(row, bias);
        }
        y
    }

    #[allow(clippy::too_many_arguments)]
    fn linear_backward(
        &self,
        x: &[T],
        dy: &[T],
        w: usize,
        b: usize,
        din: usize,
        dout: usize,
        grads: &mut ParamStore<T>,
    ) -> Vec<T> {
        let n = x.len() / din;
        matmul_at_b_acc(x, dy, n, din, dout, &mut grads.tensors[w].data);
        col_sum_acc(dy, dout, &mut grads.tensors[b].data);
        matmul_a_bt(dy, self.p(w), n, dout, din)
    }

    fn attention(&self, xq: &[T], xkv: &[T], idx: AttnIdx, causal: bool) -> (Vec<T>, AttnCache<T>) {
        let d = self.config.d_model;
        let h = self.config.n_heads;
        let dh = self.config.head_dim();
        let nq = xq.len() / d;
        let nkv = xkv.len() / d;
        let q = self.linear(xq, idx.wq, idx.bq, d, d);
        let k = self.linear(xkv, idx.wk, idx.bk, d, d);
        let v = self.linear(xkv, idx.wv, idx.bv, d, d);
        let scale: T = lit(1.0 / (dh as f64).sqrt());
        let mut o = vec![T::zero(); nq * d];
        let (mut qs, mut ks, mut vs, mut ps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for head in 0..h {
            let qh = split_head(&q, nq, d, head, dh);
            let kh = split_head(&k, nkv, d, head, dh);
            let vh = split_head(&v, nkv, d, head, dh);
            let mut s = matmul_a_bt(&qh, &kh, nq, dh, nkv);
            for i in 0..nq {
                let row = &mut s[i * nkv..(i + 1) * nkv];
                for (j, val) in row.iter_mut().enumerate() {
                    *val = if causal && j > i { T::neg_infinity() } else { *val * scale };
                }
                softmax_row(row);
            }
            let oh = matmul(&s, &vh, nq, nkv, dh);
            merge_head(&mut o, &oh, nq, d, head, dh);
            qs.push(qh);
            ks.push(kh);
            vs.push(vh);
            ps.push(s);
        }
        let out = self.linear(&o, idx.wo, idx.bo, d, d);
        (
            out,
            AttnCache {
                xq: xq.to_vec(),
                xkv: xkv.to_vec(),
                nq,
                nkv,
                q: qs,
                k: ks,
                v: vs,
                p: ps,
                o,
            },
        )
    }

    /// Returns `(d xq, d xkv)`.
    fn attention_backward(
        &self,
        dout: &[T],
        c: &AttnCache<T>,
        idx: AttnIdx,
        grads: &mut ParamStore<T>,
    ) -> (Vec<T>, Vec<T>) {
        let d = self.config.d_model;
        let dh = self.config.head_dim();
        let (nq, nkv) = (c.nq, c.nkv);
        let scale: T = lit(1.0 / (dh as f64).sqrt());
        let d_o = self.linear_backward(&c.o, dout, idx.wo, idx.bo, d, d, grads);
        let mut dq = vec![T::zero(); nq * d];
        let mut dk = vec![T::zero(); nkv * d];
        let mut dv = vec![T::zero(); nkv * d];
        for head in 0..self.config.n_heads {
            let doh = split_head(&d_o, nq, d, head, dh);
            let p = &c.p[head];
            let dp = matmul_a_bt(&doh, &c.v[head], nq, dh, nkv);
            let mut dvh = vec![T::zero(); nkv * dh];
            matmul_at_b_acc(p, &doh, nq, nkv, dh, &mut dvh);
            let mut ds = vec![T::zero(); nq * nkv];
            for i in 0..nq {
                let pr = &p[i * nkv..(i + 1) * nkv];
                let dpr = &dp[i * nkv..(i + 1) * nkv];
                let dot: T = pr.iter().zip(dpr).map(|(&a, &b)| a * b).sum();
                for j in 0..nkv {
                    ds[i * nkv + j] = pr[j] * (dpr[j] - dot) * scale;
                }
            }
            let dqh = matmul(&ds, &c.k[head], nq, nkv, dh);
            let mut dkh = vec![T::zero(); nkv * dh];
            matmul_at_b_acc(&ds, &c.q[head], nq, nkv, dh, &mut dkh);
            merge_head(&mut dq, &dqh, nq, d, head, dh);
            merge_head(&mut dk, &dkh, nkv, d, head, dh);
            merge_head(&mut dv, &dvh, nkv, d, head, dh);
        }
        let dxq = self.linear_backward(&c.xq, &dq, idx.wq, idx.bq, d, d, grads);
        let mut dxkv = self.linear_backward(&c.xkv, &dk, idx.wk, idx.bk, d, d, grads);
        let dxv = self.linear_backward(&c.xkv, &dv, idx.wv, idx.bv, d, d, grads);
        add_assign(&mut dxkv, &dxv);
        (dxq, dxkv)
    }

    fn feed_forward(&self, x: &[T], idx: FfIdx) -> (Vec<T>, FfCache<T>) {
        let (d, f) = (self.config.d_model, self.config.ff_dim);
        let pre = self.linear(x, idx.w1, idx.b1, d, f);
        let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.linear(&act, idx.w2, idx.b2, f, d);
        (y, FfCache { x: x.to_vec(), pre, act })
    }

    fn feed_forward_backward(&self, dy: &[T], c: &FfCache<T>, idx: FfIdx, grads: &mut ParamStore<T>) -> Vec<T> {
        let (d, f) = (self.config.d_model, self.config.ff_dim);
        let mut dact = self.linear_backward(&c.act, dy, idx.w2, idx.b2, f, d, grads);
        for (g, &p) in dact.iter_mut().zip(&c.pre) {
            *g *= gelu_grad(p);
        }
        self.linear_backward(&c.x, &dact, idx.w1, idx.b1, d, f, grads)
    }

    /// Full teacher-forced pass. `dropout` is `None` at inference.
    pub fn forward(
        &self,
        src: &[TokenId],
        dec_in: &[TokenId],
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<ForwardCache<T>, ForwardError> {
        self.check_tokens(src, "source", self.config.context_len)?;
        self.check_tokens(dec_in, "decoder", self.config.decoder_len())?;
        let d = self.config.d_model;

        let mut x = self.embed(src, self.layout.enc_pos);
        let mut enc_layers = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let (a, ln1) = self.layer_norm(&x, l.ln1);
            let (mut y, attn) = self.attention(&a, &a, l.attn, false);
            let drop1 = apply_dropout(&mut y, dropout.as_mut());
            add_assign(&mut x, &y);
            let (b, ln2) = self.layer_norm(&x, l.ln2);
            let (mut f, ff) = self.feed_forward(&b, l.ff);
            let drop2 = apply_dropout(&mut f, dropout.as_mut());
            add_assign(&mut x, &f);
            enc_layers.push(EncLayerCache {
                ln1,
                attn,
                drop1,
                ln2,
                ff,
                drop2,
            });
        }
        let (enc_out, enc_ln) = self.layer_norm(&x, self.layout.enc_ln);

        let mut z = self.embed(dec_in, self.layout.dec_pos);
        let mut dec_layers = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let (a, ln1) = self.layer_norm(&z, l.ln1);
            let (mut y, self_attn) = self.attention(&a, &a, l.self_attn, true);
            let drop1 = apply_dropout(&mut y, dropout.as_mut());
            add_assign(&mut z, &y);
            let (b, ln2) = self.layer_norm(&z, l.ln2);
            let (mut c, cross) = self.attention(&b, &enc_out, l.cross, false);
            let drop2 = apply_dropout(&mut c, dropout.as_mut());
            add_assign(&mut z, &c);
            let (e, ln3) = self.layer_norm(&z, l.ln3);
            let (mut f, ff) = self.feed_forward(&e, l.ff);
            let drop3 = apply_dropout(&mut f, dropout.as_mut());
            add_assign(&mut z, &f);
            dec_layers.push(DecLayerCache {
                ln1,
                self_attn,
                drop1,
                ln2,
                cross,
                drop2,
                ln3,
                ff,
                drop3,
            });
        }
        let (hidden, dec_ln) = self.layer_norm(&z, self.layout.dec_ln);
        let logits = self.linear(&hidden, self.layout.w_out, self.layout.b_out, d, self.vocab_size);
        Ok(ForwardCache {
            src: src.to_vec(),
            dec_in: dec_in.to_vec(),
            enc_layers,
            enc_ln,
            enc_out,
            dec_layers,
            dec_ln,
            hidden,
            logits,
        })
    }

    /// Accumulate parameter gradients for upstream `dlogits`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut ParamStore<T>) {
        let d = self.config.d_model;
        let v = self.vocab_size;
        let dhidden = self.linear_backward(&cache.hidden, dlogits, self.layout.w_out, self.layout.b_out, d, v, grads);
        let mut dz = self.layer_norm_backward(&dhidden, &cache.dec_ln, self.layout.dec_ln, grads);
        let mut denc = vec![T::zero(); cache.enc_out.len()];

        for (l, c) in self.layout.dec.iter().zip(&cache.dec_layers).rev() {
            let df = undo_dropout(&dz, c.drop3.as_deref());
            let de = self.feed_forward_backward(&df, &c.ff, l.ff, grads);
            add_assign(&mut dz, &self.layer_norm_backward(&de, &c.ln3, l.ln3, grads));

            let dc = undo_dropout(&dz, c.drop2.as_deref());
            let (db, dkv) = self.attention_backward(&dc, &c.cross, l.cross, grads);
            add_assign(&mut denc, &dkv);
            add_assign(&mut dz, &self.layer_norm_backward(&db, &c.ln2, l.ln2, grads));

            let dy = undo_dropout(&dz, c.drop1.as_deref());
            let (mut da, dakv) = self.attention_backward(&dy, &c.self_attn, l.self_attn, grads);
            add_assign(&mut da, &dakv);
            add_assign(&mut dz, &self.layer_norm_backward(&da, &c.ln1, l.ln1, grads));
        }
        self.embed_backward(&cache.dec_in, &dz, self.layout.dec_pos, grads);

        let mut dx = self.layer_norm_backward(&denc, &cache.enc_ln, self.layout.enc_ln, grads);
        for (l, c) in self.layout.enc.iter().zip(&cache.enc_layers).rev() {
            let df = undo_dropout(&dx, c.drop2.as_deref());
            let db = self.feed_forward_backward(&df, &c.ff, l.ff, grads);
            add_assign(&mut dx, &self.layer_norm_backward(&db, &c.ln2, l.ln2, grads));

            let dy = undo_dropout(&dx, c.drop1.as_deref());
            let (mut da, dakv) = self.attention_backward(&dy, &c.attn, l.attn, grads);
            add_assign(&mut da, &dakv);
            add_assign(&mut dx, &self.layer_norm_backward(&da, &c.ln1, l.ln1, grads));
        }
        self.embed_backward(&cache.src, &dx, self.layout.enc_pos, grads);
    }

    fn embed_backward(&self, toks: &[TokenId], dx: &[T], pos_idx: usize, grads: &mut ParamStore<T>) {
        let d = self.config.d_model;
        for (i, &t) in toks.iter().enumerate() {
            let t = t as usize;
            let row = &dx[i * d..(i + 1) * d];
            add_assign(&mut grads.tensors[self.layout.tok_emb].data[t * d..(t + 1) * d], row);
            add_assign(&mut grads.tensors[pos_idx].data[i * d..(i + 1) * d], row);
        }
    }

    /// Logits for the token after the last decoder input.
    pub fn next_logits(&self, src: &[TokenId], dec_in: &[TokenId]) -> Result<Vec<T>, ForwardError> {
        let cache = self.forward(src, dec_in, None)?;
        let v = self.vocab_size;
        let n = dec_in.len();
        Ok(cache.logits[(n - 1) * v..n * v].to_vec())
    }

    /// Masked NLL of `targets` given teacher-forced inputs, plus its
    /// gradient w.r.t. every parameter (accumulated into `grads`).
    pub fn loss_and_grad(
        &self,
        src: &[TokenId],
        dec_in: &[TokenId],
        targets: &[TokenId],
        mask: &[bool],
        dropout: Option<Dropout<'_>>,
        grads: &mut ParamStore<T>,
    ) -> Result<T, ForwardError> {
        let cache = self.forward(src, dec_in, dropout)?;
        let v = self.vocab_size;
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(ForwardError::Empty("loss mask"));
        }
        let norm: T = lit(1.0 / count as f64);
        let mut loss = T::zero();
        let mut dlogits = vec![T::zero(); cache.logits.len()];
        for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            let row = &cache.logits[i * v..(i + 1) * v];
            loss -= log_softmax_at(row, t as usize);
            let drow = &mut dlogits[i * v..(i + 1) * v];
            drow.copy_from_slice(row);
            softmax_row(drow);
            drow[t as usize] -= T::one();
            drow.iter_mut().for_each(|g| *g *= norm);
        }
        self.backward(&cache, &dlogits, grads);
        Ok(loss * norm)
    }
}

fn split_head<T: Scalar>(x: &[T], n: usize, d: usize, head: usize, dh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * dh);
    for r in 0..n {
        out.extend_from_slice(&x[r * d + head * dh..r * d + (head + 1) * dh]);
    }
    out
}

fn merge_head<T: Scalar>(dst: &mut [T], src: &[T], n: usize, d: usize, head: usize, dh: usize) {
    for r in 0..n {
        add_assign(&mut dst[r * d + head * dh..r * d + (head + 1) * dh], &src[r * dh..(r + 1) * dh]);
    }
}

fn apply_dropout<T: Scalar>(x: &mut [T], dropout: Option<&mut Dropout<'_>>) -> Option<Vec<T>> {
    let dropout = dropout?;
    if dropout.rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - dropout.rate;
    let scale: T = lit(1.0 / keep);
    let mask: Vec<T> = (0..x.len())
        .map(|_| if dropout.rng.random::<f64>() < keep { scale } else { T::zero() })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn undo_dropout<T: Scalar>(dy: &[T], mask: Option<&[T]>) -> Vec<T> {
    match mask {
        None => dy.to_vec(),
        Some(m) => dy.iter().zip(m).map(|(&g, &k)| g * k).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_names_are_unique_and_counted() {
        let m = Transformer::<f64>::new(ModelConfig::micro(), 40);
        let mut names: Vec<_> = m.params.tensors.iter().map(|t| t.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(m.n_params() < 5000, "{}", m.n_params());
    }

    #[test]
    fn causal_decoder_ignores_future_inputs() {
        let m = Transformer::<f64>::new(ModelConfig::micro(), 20);
        let a = m.forward(&[3, 4, 5], &[1, 2, 6], None).unwrap();
        let b = m.forward(&[3, 4, 5], &[1, 2, 9], None).unwrap();
        let v = 20;
        assert_eq!(a.logits[..2 * v], b.logits[..2 * v]);
        assert_ne!(a.logits[2 * v..], b.logits[2 * v..]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = Transformer::<f32>::new(ModelConfig::micro(), 10);
        assert_eq!(m.forward(&[10], &[1], None).err(), Some(ForwardError::TokenOutOfRange(10)));
        assert_eq!(m.forward(&[], &[1], None).err(), Some(ForwardError::Empty("source")));
        let long = vec![1; 17];
        assert!(matches!(m.forward(&long, &[1], None), Err(ForwardError::TooLong { .. })));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Transformer::<f32>::new(ModelConfig::micro(), 30);
        let b = Transformer::<f32>::new(ModelConfig::micro(), 30);
        assert_eq!(a.params, b.params);
    }
}
