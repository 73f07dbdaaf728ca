//! Vision-transformer surrogate: two-channel field images are cut into
//! patches, a condition-derived class token is prepended, pre-norm
//! transformer blocks mix the sequence, and a per-token linear decoder
//! rebuilds a density map.
//!
//! ```text
//! fields [B, 2, G, G] -> patches [B, N, 2 P^2] -> embed [B, N, D]
//! cond [B, C] -> MLP -> class token [B, 1, D]
//! [cls; tokens] + pos -> (mask) -> L blocks -> LN -> drop cls
//!   -> [B, N, P^2] -> unpatchify -> sigmoid -> [B, G, G]
//! ```

mod model;

pub use model::{
    apply_mask, attention_block, patchify, probe_forward, unpatchify, Batch, ForwardOutput, Mode,
    ViT,
};

use serde::{Deserialize, Serialize};

use crate::problem::STATIC_COND_DIM;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViTConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub patch: usize,
    pub grid: usize,
    pub in_channels: usize,
    pub mlp_ratio: usize,
    /// Fraction of patch tokens replaced by the mask embedding while training.
    pub mask_ratio: f64,
    pub cond_dim: usize,
}

impl Default for ViTConfig {
    fn default() -> Self {
        ViTConfig::desk()
    }
}

impl ViTConfig {
    fn family(hidden: usize, layers: usize, heads: usize) -> Self {
        ViTConfig {
            hidden,
            layers,
            heads,
            patch: 8,
            grid: 64,
            in_channels: 2,
            mlp_ratio: 4,
            mask_ratio: 0.15,
            cond_dim: STATIC_COND_DIM,
        }
    }

    pub fn desk() -> Self {
        Self::family(64, 4, 4)
    }
    pub fn tiny() -> Self {
        Self::family(192, 12, 3)
    }
    pub fn small() -> Self {
        Self::family(384, 12, 6)
    }
    pub fn base() -> Self {
        Self::family(768, 12, 12)
    }
    pub fn large() -> Self {
        Self::family(1024, 24, 16)
    }
    pub fn huge() -> Self {
        Self::family(1280, 32, 16)
    }

    /// Preset by name: desk, tiny, small, base, large, huge.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "desk" => Self::desk(),
            "tiny" => Self::tiny(),
            "small" => Self::small(),
            "base" => Self::base(),
            "large" => Self::large(),
            "huge" => Self::huge(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model preset {other:?}"
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.patch == 0 || self.grid % self.patch != 0 {
            return bad(format!(
                "grid {} not divisible by patch {}",
                self.grid, self.patch
            ));
        }
        if self.layers == 0 || self.in_channels == 0 || self.mlp_ratio == 0 || self.cond_dim == 0 {
            return bad("layers, channels, mlp ratio and condition size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad(format!("mask ratio {} outside [0, 1)", self.mask_ratio));
        }
        Ok(())
    }

    /// Patch tokens per image.
    pub fn n_tokens(&self) -> usize {
        let side = self.grid / self.patch;
        side * side
    }

    pub fn seq_len(&self) -> usize {
        self.n_tokens() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.in_channels
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Analytic parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.hidden;
        let f = d * self.mlp_ratio;
        let embed = self.patch_dim() * d + d;
        let cls = self.cond_dim * d + d + d * d + d;
        let pos = self.seq_len() * d;
        let block = 4 * (d * d + d) + 2 * (2 * d) + (d * f + f) + (f * d + d);
        let head = 2 * d + d * self.patch * self.patch + self.patch * self.patch;
        embed + cls + pos + d + self.layers * block + head
    }
}
