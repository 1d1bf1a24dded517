//! Patch transformer forward and reverse-mode passes over a batch.
//!
//! Rows are tokens: a batch of `B` samples is a `(B * n_patches) x patch_dim`
//! input and a `(B * n_tokens) x embed_dim` residual stream, sample-major,
//! with the CLS token first in each sample.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::config::ModelConfig;
use super::params::{BlockParams, ModelParams};
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.01;
const LN_EPS: f64 = 1e-5;

/// `PE[p, 2i] = sin(p / 10000^(2i/dim))`, `PE[p, 2i+1] = cos(...)`.
pub fn positional_encoding(n_tokens: usize, dim: usize) -> Result<Array2<f64>> {
    if n_tokens == 0 {
        return Err(Error::precondition("positional encoding needs n_tokens >= 1"));
    }
    if dim % 2 != 0 {
        return Err(Error::precondition(format!("positional encoding dim must be even (got {dim})")));
    }
    let mut pe = Array2::zeros((n_tokens, dim));
    for p in 0..n_tokens {
        for i in 0..dim / 2 {
            let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[[p, 2 * i]] = angle.sin();
            pe[[p, 2 * i + 1]] = angle.cos();
        }
    }
    Ok(pe)
}

/// Inverted-dropout masks (entries 0 or `1 / (1 - p)`), sampled before the
/// pass so that a pass is a deterministic function of its inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropoutMasks {
    pub proj: Option<Array2<f64>>,
    pub cls: Option<Array2<f64>>,
}

fn bernoulli_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Option<Array2<f64>> {
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

impl DropoutMasks {
    /// No dropout (evaluation).
    pub fn none() -> Self {
        DropoutMasks::default()
    }

    pub fn sample<R: Rng + ?Sized>(cfg: &ModelConfig, batch: usize, rng: &mut R) -> Self {
        DropoutMasks {
            proj: bernoulli_mask(batch * cfg.n_patches, cfg.embed_dim, cfg.drop_proj, rng),
            cls: bernoulli_mask(batch, cfg.embed_dim, cfg.drop_cls, rng),
        }
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn ln_forward(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        let s = *is;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * g;
    y += b;
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx`; accumulates scale/shift gradients.
fn ln_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * g;
    for ((mut row, xh), is) in dx
        .axis_iter_mut(Axis(0))
        .zip(cache.xhat.axis_iter(Axis(0)))
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (v, x) in row.iter_mut().zip(xh.iter()) {
            *v = is * (*v - mean_d - x * mean_dx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

struct BlockCache {
    ln1: LnCache,
    u1: Array2<f64>,
    qkv: Array2<f64>,
    /// `[sample][head][query][key]`.
    probs: Vec<f64>,
    attn: Array2<f64>,
    ln2: LnCache,
    u2: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
}

/// Output of a forward pass plus everything the reverse pass needs.
pub struct Forward {
    pub batch: usize,
    pub logits: Array2<f64>,
    /// Residual stream after the last block, `(B * n_tokens) x embed_dim`.
    pub encoded: Array2<f64>,
    /// Tokens entering the first block.
    pub tokens: Array2<f64>,
    z: Array2<f64>,
    blocks: Vec<BlockCache>,
    cls_in: Array2<f64>,
    masks: DropoutMasks,
}

impl Forward {
    /// Attention probabilities of a block, `[sample][head][query][key]`.
    pub fn attention(&self, block: usize) -> &[f64] {
        &self.blocks[block].probs
    }
}

fn check_input(cfg: &ModelConfig, x: &Array2<f64>) -> Result<usize> {
    if x.ncols() != cfg.patch_dim || x.nrows() == 0 || x.nrows() % cfg.n_patches != 0 {
        return Err(Error::Shape {
            expected: format!("(B * {}) x {}", cfg.n_patches, cfg.patch_dim),
            actual: format!("{} x {}", x.nrows(), x.ncols()),
        });
    }
    Ok(x.nrows() / cfg.n_patches)
}

/// Patch embedding: affine, LeakyReLU, dropout, CLS prepended, positions added.
/// Returns `(tokens, pre-activation)`.
fn project(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &Array2<f64>,
    masks: &DropoutMasks,
    pe: Option<&Array2<f64>>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let batch = check_input(cfg, x)?;
    let (n, t, d) = (cfg.n_patches, cfg.n_tokens(), cfg.embed_dim);
    let z = affine(x, &params.proj_w, &params.proj_b);
    let mut a = z.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
    if let Some(m) = &masks.proj {
        a *= m;
    }
    let mut tokens = Array2::zeros((batch * t, d));
    for b in 0..batch {
        tokens.row_mut(b * t).assign(&params.cls);
        tokens
            .slice_mut(s![b * t + 1..(b + 1) * t, ..])
            .assign(&a.slice(s![b * n..(b + 1) * n, ..]));
        if let Some(pe) = pe {
            let mut block = tokens.slice_mut(s![b * t..(b + 1) * t, ..]);
            block += pe;
        }
    }
    Ok((tokens, z))
}

/// Token embeddings for a batch, as fed to the encoder.
pub fn project_patches(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &Array2<f64>,
    masks: &DropoutMasks,
) -> Result<Array2<f64>> {
    let pe = positional_encoding(cfg.n_tokens(), cfg.embed_dim)?;
    Ok(project(cfg, params, x, masks, Some(&pe))?.0)
}

fn attention_forward(qkv: &Array2<f64>, batch: usize, t: usize, heads: usize, dh: usize) -> (Array2<f64>, Vec<f64>) {
    let d = heads * dh;
    let stride = 3 * d;
    let q = qkv.as_slice().expect("standard layout");
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((batch * t, d));
    let o = out.as_slice_mut().expect("standard layout");
    let mut probs = vec![0.0; batch * heads * t * t];
    let mut row = vec![0.0; t];
    for b in 0..batch {
        for h in 0..heads {
            let base = (b * heads + h) * t * t;
            for i in 0..t {
                let qi = &q[(b * t + i) * stride + h * dh..][..dh];
                for (j, r) in row.iter_mut().enumerate() {
                    let kj = &q[(b * t + j) * stride + d + h * dh..][..dh];
                    *r = scale * qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>();
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for r in row.iter_mut() {
                    *r = (*r - m).exp();
                    sum += *r;
                }
                let p = &mut probs[base + i * t..][..t];
                for (pj, r) in p.iter_mut().zip(&row) {
                    *pj = r / sum;
                }
                let oi = &mut o[(b * t + i) * d + h * dh..][..dh];
                for (j, pj) in p.iter().enumerate() {
                    let vj = &q[(b * t + j) * stride + 2 * d + h * dh..][..dh];
                    for (ok, vk) in oi.iter_mut().zip(vj) {
                        *ok += pj * vk;
                    }
                }
            }
        }
    }
    (out, probs)
}

fn attention_backward(
    dout: &Array2<f64>,
    qkv: &Array2<f64>,
    probs: &[f64],
    batch: usize,
    t: usize,
    heads: usize,
    dh: usize,
) -> Array2<f64> {
    let d = heads * dh;
    let stride = 3 * d;
    let q = qkv.as_slice().expect("standard layout");
    let dout = dout.as_slice().expect("standard layout");
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dqkv = Array2::zeros((batch * t, 3 * d));
    let dq = dqkv.as_slice_mut().expect("standard layout");
    let mut dp = vec![0.0; t];
    for b in 0..batch {
        for h in 0..heads {
            let base = (b * heads + h) * t * t;
            for i in 0..t {
                let doi = &dout[(b * t + i) * d + h * dh..][..dh];
                let p = &probs[base + i * t..][..t];
                for (j, dpj) in dp.iter_mut().enumerate() {
                    let vj = &q[(b * t + j) * stride + 2 * d + h * dh..][..dh];
                    *dpj = doi.iter().zip(vj).map(|(x, y)| x * y).sum::<f64>();
                    let dvj = &mut dq[(b * t + j) * stride + 2 * d + h * dh..][..dh];
                    for (dv, g) in dvj.iter_mut().zip(doi) {
                        *dv += p[j] * g;
                    }
                }
                let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                for j in 0..t {
                    let ds = scale * p[j] * (dp[j] - dot);
                    if ds == 0.0 {
                        continue;
                    }
                    for k in 0..dh {
                        let qk = q[(b * t + i) * stride + h * dh + k];
                        let kk = q[(b * t + j) * stride + d + h * dh + k];
                        dq[(b * t + i) * stride + h * dh + k] += ds * kk;
                        dq[(b * t + j) * stride + d + h * dh + k] += ds * qk;
                    }
                }
            }
        }
    }
    dqkv
}

fn block_forward(cfg: &ModelConfig, p: &BlockParams, h: &mut Array2<f64>, batch: usize) -> BlockCache {
    let (u1, ln1) = ln_forward(h, &p.ln1_g, &p.ln1_b);
    let qkv = affine(&u1, &p.w_qkv, &p.b_qkv);
    let (attn, probs) = attention_forward(&qkv, batch, cfg.n_tokens(), cfg.n_heads, cfg.head_dim());
    *h += &affine(&attn, &p.w_o, &p.b_o);
    let (u2, ln2) = ln_forward(h, &p.ln2_g, &p.ln2_b);
    let f = affine(&u2, &p.w_1, &p.b_1);
    let g = f.mapv(gelu);
    *h += &affine(&g, &p.w_2, &p.b_2);
    BlockCache {
        ln1,
        u1,
        qkv,
        probs,
        attn,
        ln2,
        u2,
        f,
        g,
    }
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Run the encoder blocks over a token matrix.
fn encode(
    cfg: &ModelConfig,
    params: &ModelParams,
    tokens: &Array2<f64>,
    batch: usize,
) -> Result<(Array2<f64>, Vec<BlockCache>)> {
    let mut h = tokens.clone();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for (i, p) in params.blocks.iter().enumerate() {
        caches.push(block_forward(cfg, p, &mut h, batch));
        if !all_finite(&h) {
            return Err(Error::NumericFailure {
                location: format!("encoder block {i}"),
            });
        }
    }
    Ok((h, caches))
}

/// Encoder on `(B * n_tokens) x embed_dim` tokens; returns the encoded tokens
/// and per-block attention probabilities.
pub fn encoder_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    tokens: &Array2<f64>,
) -> Result<(Array2<f64>, Vec<Vec<f64>>)> {
    let t = cfg.n_tokens();
    if tokens.ncols() != cfg.embed_dim || tokens.nrows() == 0 || tokens.nrows() % t != 0 {
        return Err(Error::Shape {
            expected: format!("(B * {t}) x {}", cfg.embed_dim),
            actual: format!("{} x {}", tokens.nrows(), tokens.ncols()),
        });
    }
    let (h, caches) = encode(cfg, params, tokens, tokens.nrows() / t)?;
    Ok((h, caches.into_iter().map(|c| c.probs).collect()))
}

pub fn forward(cfg: &ModelConfig, params: &ModelParams, x: &Array2<f64>, masks: &DropoutMasks) -> Result<Forward> {
    let pe = positional_encoding(cfg.n_tokens(), cfg.embed_dim)?;
    forward_with(cfg, params, x, masks, Some(&pe))
}

/// Forward pass with an explicit (or no) positional encoding.
pub fn forward_with(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &Array2<f64>,
    masks: &DropoutMasks,
    pe: Option<&Array2<f64>>,
) -> Result<Forward> {
    let batch = check_input(cfg, x)?;
    let t = cfg.n_tokens();
    let (tokens, z) = project(cfg, params, x, masks, pe)?;
    let (h, blocks) = encode(cfg, params, &tokens, batch)?;
    let mut cls_in = h.select(Axis(0), &(0..batch).map(|b| b * t).collect::<Vec<_>>());
    if let Some(m) = &masks.cls {
        cls_in *= m;
    }
    let logits = affine(&cls_in, &params.head_w, &params.head_b);
    if !all_finite(&logits) {
        return Err(Error::NumericFailure {
            location: "classifier head".into(),
        });
    }
    Ok(Forward {
        batch,
        logits,
        encoded: h,
        tokens,
        z,
        blocks,
        cls_in,
        masks: masks.clone(),
    })
}

/// Reverse pass from `d loss / d logits` to every parameter group.
pub fn backward(
    cfg: &ModelConfig,
    params: &ModelParams,
    x: &Array2<f64>,
    fwd: &Forward,
    dlogits: &Array2<f64>,
) -> Result<ModelParams> {
    let batch = fwd.batch;
    let (n, t, d) = (cfg.n_patches, cfg.n_tokens(), cfg.embed_dim);
    let mut grads = ModelParams::zeros(cfg);

    grads.head_w = fwd.cls_in.t().dot(dlogits);
    grads.head_b = dlogits.sum_axis(Axis(0));
    let mut dcls = dlogits.dot(&params.head_w.t());
    if let Some(m) = &fwd.masks.cls {
        dcls *= m;
    }
    let mut dh = Array2::zeros((batch * t, d));
    for b in 0..batch {
        dh.row_mut(b * t).assign(&dcls.row(b));
    }

    for (i, (p, c)) in params.blocks.iter().zip(&fwd.blocks).enumerate().rev() {
        let g = &mut grads.blocks[i];
        // MLP sublayer.
        g.w_2 = c.g.t().dot(&dh);
        g.b_2 = dh.sum_axis(Axis(0));
        let mut df = dh.dot(&p.w_2.t());
        df.zip_mut_with(&c.f, |dv, &f| *dv *= gelu_grad(f));
        g.w_1 = c.u2.t().dot(&df);
        g.b_1 = df.sum_axis(Axis(0));
        let du2 = df.dot(&p.w_1.t());
        dh += &ln_backward(&du2, &c.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        // Attention sublayer.
        g.w_o = c.attn.t().dot(&dh);
        g.b_o = dh.sum_axis(Axis(0));
        let dattn = dh.dot(&p.w_o.t());
        let dqkv = attention_backward(&dattn, &c.qkv, &c.probs, batch, t, cfg.n_heads, cfg.head_dim());
        g.w_qkv = c.u1.t().dot(&dqkv);
        g.b_qkv = dqkv.sum_axis(Axis(0));
        let du1 = dqkv.dot(&p.w_qkv.t());
        dh += &ln_backward(&du1, &c.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    }

    let mut dz = Array2::zeros((batch * n, d));
    for b in 0..batch {
        grads.cls += &dh.row(b * t);
        dz.slice_mut(s![b * n..(b + 1) * n, ..])
            .assign(&dh.slice(s![b * t + 1..(b + 1) * t, ..]));
    }
    if let Some(m) = &fwd.masks.proj {
        dz *= m;
    }
    dz.zip_mut_with(&fwd.z, |g, &z| {
        if z <= 0.0 {
            *g *= LEAKY_SLOPE
        }
    });
    grads.proj_w = x.t().dot(&dz);
    grads.proj_b = dz.sum_axis(Axis(0));

    if let Err(name) = grads.all_finite() {
        return Err(Error::NumericFailure {
            location: format!("gradient of {name}"),
        });
    }
    Ok(grads)
}
