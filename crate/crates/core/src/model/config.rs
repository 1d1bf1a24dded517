use serde::{Deserialize, Serialize};

use crate::dataset::{N_PATCHES, PATCH_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub mlp_hidden: usize,
    pub drop_proj: f64,
    pub drop_cls: f64,
    pub n_classes: usize,
    pub patch_dim: usize,
    pub n_patches: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 768,
            n_blocks: 2,
            n_heads: 8,
            mlp_hidden: 3072,
            drop_proj: 0.25,
            drop_cls: 0.20,
            n_classes: 22,
            patch_dim: PATCH_DIM,
            n_patches: N_PATCHES,
        }
    }
}

impl ModelConfig {
    /// Same architecture at a width that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 64,
            mlp_hidden: 256,
            ..ModelConfig::default()
        }
    }

    /// Smallest configuration used for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            embed_dim: 32,
            n_blocks: 2,
            n_heads: 4,
            mlp_hidden: 64,
            drop_proj: 0.25,
            drop_cls: 0.20,
            n_classes: 3,
            patch_dim: 8,
            n_patches: 2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// Patch tokens plus the CLS token.
    pub fn n_tokens(&self) -> usize {
        self.n_patches + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("embed_dim", self.embed_dim),
            ("n_blocks", self.n_blocks),
            ("n_heads", self.n_heads),
            ("mlp_hidden", self.mlp_hidden),
            ("n_classes", self.n_classes),
            ("patch_dim", self.patch_dim),
            ("n_patches", self.n_patches),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::precondition(format!("model {name} must be >= 1")));
            }
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(Error::precondition(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::precondition("embed_dim must be even for positional encoding"));
        }
        for (name, p) in [("drop_proj", self.drop_proj), ("drop_cls", self.drop_cls)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::precondition(format!("{name} must be in [0, 1) (got {p})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub batch: usize,
    pub focal_gamma: f64,
    pub eta_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Gaussian augmentation std relative to each window's std; 0 disables.
    pub augment_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-2,
            epochs: 50,
            batch: 64,
            focal_gamma: 2.0,
            eta_min: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            augment_sigma: 0.05,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning schedule derived from a base schedule: lr0 / 10, 10 epochs.
    pub fn fine_tune(&self) -> Self {
        TrainConfig {
            lr0: self.lr0 / 10.0,
            epochs: 10,
            eta_min: self.eta_min.min(self.lr0 / 10.0),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min >= 0.0 && self.lr0 > self.eta_min) {
            return Err(Error::precondition(format!(
                "need lr0 > eta_min >= 0 (lr0 {}, eta_min {})",
                self.lr0, self.eta_min
            )));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::precondition("epochs and batch must be >= 1"));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::precondition("focal_gamma must be >= 0"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::precondition("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
        }
        if !(self.augment_sigma >= 0.0) {
            return Err(Error::precondition("augment_sigma must be >= 0"));
        }
        Ok(())
    }
}
