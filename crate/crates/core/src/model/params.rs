use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Weights are stored `[in][out]` so a layer is `x · W + b` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w_qkv: Array2<f64>,
    pub b_qkv: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_1: Array2<f64>,
    pub b_1: Array1<f64>,
    pub w_2: Array2<f64>,
    pub b_2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub cls: Array1<f64>,
    pub blocks: Vec<BlockParams>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit LayerNorm scales and a
    /// small Gaussian CLS token.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let h = cfg.mlp_hidden;
        let proj_w = glorot(cfg.patch_dim, d, rng);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let cls = Array1::from_shape_simple_fn(d, || normal.sample(rng));
        let blocks = (0..cfg.n_blocks)
            .map(|_| BlockParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                w_qkv: glorot(d, 3 * d, rng),
                b_qkv: Array1::zeros(3 * d),
                w_o: glorot(d, d, rng),
                b_o: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w_1: glorot(d, h, rng),
                b_1: Array1::zeros(h),
                w_2: glorot(h, d, rng),
                b_2: Array1::zeros(d),
            })
            .collect();
        Ok(ModelParams {
            proj_w,
            proj_b: Array1::zeros(d),
            cls,
            blocks,
            head_w: glorot(d, cfg.n_classes, rng),
            head_b: Array1::zeros(cfg.n_classes),
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let h = cfg.mlp_hidden;
        ModelParams {
            proj_w: Array2::zeros((cfg.patch_dim, d)),
            proj_b: Array1::zeros(d),
            cls: Array1::zeros(d),
            blocks: (0..cfg.n_blocks)
                .map(|_| BlockParams {
                    ln1_g: Array1::zeros(d),
                    ln1_b: Array1::zeros(d),
                    w_qkv: Array2::zeros((d, 3 * d)),
                    b_qkv: Array1::zeros(3 * d),
                    w_o: Array2::zeros((d, d)),
                    b_o: Array1::zeros(d),
                    ln2_g: Array1::zeros(d),
                    ln2_b: Array1::zeros(d),
                    w_1: Array2::zeros((d, h)),
                    b_1: Array1::zeros(h),
                    w_2: Array2::zeros((h, d)),
                    b_2: Array1::zeros(d),
                })
                .collect(),
            head_w: Array2::zeros((d, cfg.n_classes)),
            head_b: Array1::zeros(cfg.n_classes),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visit every tensor as a flat slice, in a fixed order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, &'a [f64])) {
        f("proj.w", self.proj_w.as_slice().expect("standard layout"));
        f("proj.b", self.proj_b.as_slice().expect("standard layout"));
        f("cls", self.cls.as_slice().expect("standard layout"));
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in block_tensors(b) {
                f(&format!("block{i}.{name}"), t);
            }
        }
        f("head.w", self.head_w.as_slice().expect("standard layout"));
        f("head.b", self.head_b.as_slice().expect("standard layout"));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        f("proj.w", self.proj_w.as_slice_mut().expect("standard layout"));
        f("proj.b", self.proj_b.as_slice_mut().expect("standard layout"));
        f("cls", self.cls.as_slice_mut().expect("standard layout"));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in block_tensors_mut(b) {
                f(&format!("block{i}.{name}"), t);
            }
        }
        f("head.w", self.head_w.as_slice_mut().expect("standard layout"));
        f("head.b", self.head_b.as_slice_mut().expect("standard layout"));
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }

    pub fn n_values(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.len());
        n
    }

    /// Apply `f(self_tensor, other_tensor)` pairwise.
    pub fn zip_mut(&mut self, other: &ModelParams, mut f: impl FnMut(&mut [f64], &[f64])) {
        let mut others: Vec<&[f64]> = Vec::new();
        other.for_each(|_, t| others.push(t));
        let mut i = 0;
        self.for_each_mut(|_, t| {
            f(t, others[i]);
            i += 1;
        });
    }

    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = ModelParams::shapes(cfg);
        let mut actual = Vec::new();
        self.for_each(|n, t| actual.push((n.to_string(), t.len())));
        if actual != reference {
            return Err(Error::Shape {
                expected: format!("{} tensors for {:?}", reference.len(), cfg),
                actual: format!("{} tensors", actual.len()),
            });
        }
        Ok(())
    }

    /// Tensor names and element counts implied by a config.
    pub fn shapes(cfg: &ModelConfig) -> Vec<(String, usize)> {
        let d = cfg.embed_dim;
        let h = cfg.mlp_hidden;
        let mut out = vec![
            ("proj.w".to_string(), cfg.patch_dim * d),
            ("proj.b".to_string(), d),
            ("cls".to_string(), d),
        ];
        for i in 0..cfg.n_blocks {
            for (name, n) in [
                ("ln1.g", d),
                ("ln1.b", d),
                ("attn.w_qkv", d * 3 * d),
                ("attn.b_qkv", 3 * d),
                ("attn.w_o", d * d),
                ("attn.b_o", d),
                ("ln2.g", d),
                ("ln2.b", d),
                ("mlp.w_1", d * h),
                ("mlp.b_1", h),
                ("mlp.w_2", h * d),
                ("mlp.b_2", d),
            ] {
                out.push((format!("block{i}.{name}"), n));
            }
        }
        out.push(("head.w".to_string(), d * cfg.n_classes));
        out.push(("head.b".to_string(), cfg.n_classes));
        out
    }

    /// Load tensors from named flat blobs produced by [`ModelParams::for_each`].
    pub fn from_named(cfg: &ModelConfig, mut get: impl FnMut(&str) -> Option<Vec<f64>>) -> Result<Self> {
        cfg.validate()?;
        let mut params = ModelParams::zeros(cfg);
        let mut err = None;
        params.for_each_mut(|name, t| {
            if err.is_some() {
                return;
            }
            match get(name) {
                Some(v) if v.len() == t.len() => t.copy_from_slice(&v),
                Some(v) => {
                    err = Some(Error::Shape {
                        expected: format!("{name}: {} values", t.len()),
                        actual: format!("{} values", v.len()),
                    })
                }
                None => err = Some(Error::Malformed(format!("missing parameter tensor {name}"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(params),
        }
    }

    pub fn all_finite(&self) -> std::result::Result<(), String> {
        let mut bad = None;
        self.for_each(|n, t| {
            if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
                bad = Some(n.to_string());
            }
        });
        bad.map_or(Ok(()), Err)
    }
}

fn block_tensors<'a>(b: &'a BlockParams) -> [(&'static str, &'a [f64]); 12] {
    [
        ("ln1.g", b.ln1_g.as_slice().unwrap()),
        ("ln1.b", b.ln1_b.as_slice().unwrap()),
        ("attn.w_qkv", b.w_qkv.as_slice().unwrap()),
        ("attn.b_qkv", b.b_qkv.as_slice().unwrap()),
        ("attn.w_o", b.w_o.as_slice().unwrap()),
        ("attn.b_o", b.b_o.as_slice().unwrap()),
        ("ln2.g", b.ln2_g.as_slice().unwrap()),
        ("ln2.b", b.ln2_b.as_slice().unwrap()),
        ("mlp.w_1", b.w_1.as_slice().unwrap()),
        ("mlp.b_1", b.b_1.as_slice().unwrap()),
        ("mlp.w_2", b.w_2.as_slice().unwrap()),
        ("mlp.b_2", b.b_2.as_slice().unwrap()),
    ]
}

fn block_tensors_mut(b: &mut BlockParams) -> [(&'static str, &mut [f64]); 12] {
    [
        ("ln1.g", b.ln1_g.as_slice_mut().unwrap()),
        ("ln1.b", b.ln1_b.as_slice_mut().unwrap()),
        ("attn.w_qkv", b.w_qkv.as_slice_mut().unwrap()),
        ("attn.b_qkv", b.b_qkv.as_slice_mut().unwrap()),
        ("attn.w_o", b.w_o.as_slice_mut().unwrap()),
        ("attn.b_o", b.b_o.as_slice_mut().unwrap()),
        ("ln2.g", b.ln2_g.as_slice_mut().unwrap()),
        ("ln2.b", b.ln2_b.as_slice_mut().unwrap()),
        ("mlp.w_1", b.w_1.as_slice_mut().unwrap()),
        ("mlp.b_1", b.b_1.as_slice_mut().unwrap()),
        ("mlp.w_2", b.w_2.as_slice_mut().unwrap()),
        ("mlp.b_2", b.b_2.as_slice_mut().unwrap()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_match_config() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        p.check_shapes(&cfg).unwrap();
        assert_eq!(p.names().len(), 3 + 12 * 2 + 2);
        let total: usize = ModelParams::shapes(&cfg).iter().map(|(_, n)| n).sum();
        assert_eq!(p.n_values(), total);
    }

    #[test]
    fn named_round_trip() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut blobs = std::collections::HashMap::new();
        p.for_each(|n, t| {
            blobs.insert(n.to_string(), t.to_vec());
        });
        let q = ModelParams::from_named(&cfg, |n| blobs.get(n).cloned()).unwrap();
        assert_eq!(p, q);
        blobs.remove("head.b");
        assert!(ModelParams::from_named(&cfg, |n| blobs.get(n).cloned()).is_err());
    }
}
