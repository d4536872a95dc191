use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network sizes. Defaults are the desk-scale model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder output channels `C`.
    pub feat_channels: usize,
    /// Channels of the embedded mask appended to the features.
    pub mask_embed_channels: usize,
    /// Hidden width of the channel-attention MLP is `max(1, C' / ratio)`.
    pub oga_reduction: usize,
    /// When false the mask branch and channel gating are skipped.
    pub oga_enabled: bool,
    pub dec_dim: usize,
    pub dec_blocks: usize,
    pub dec_heads: usize,
    pub ffn_mult: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub est_dim: usize,
    pub est_blocks: usize,
    pub est_heads: usize,
    /// Longest token sequence, visual tokens included.
    pub max_seq: usize,
    pub max_answer_tokens: usize,
    pub max_placeholders: usize,
    /// Replace the predicted mask by the ground truth when available.
    pub use_gt_mask: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feat_channels: 32,
            mask_embed_channels: 8,
            oga_reduction: 16,
            oga_enabled: true,
            dec_dim: 128,
            dec_blocks: 2,
            dec_heads: 4,
            ffn_mult: 4,
            lora_rank: 8,
            lora_alpha: 16.0,
            est_dim: 64,
            est_blocks: 3,
            est_heads: 4,
            max_seq: 96,
            max_answer_tokens: 32,
            max_placeholders: 8,
            use_gt_mask: false,
        }
    }
}

impl ModelConfig {
    /// Small enough for unit tests.
    pub fn tiny() -> Self {
        ModelConfig {
            feat_channels: 8,
            mask_embed_channels: 4,
            oga_reduction: 4,
            dec_dim: 16,
            dec_blocks: 1,
            dec_heads: 2,
            ffn_mult: 2,
            lora_rank: 2,
            lora_alpha: 4.0,
            est_dim: 8,
            est_blocks: 1,
            est_heads: 2,
            max_seq: 48,
            max_answer_tokens: 16,
            ..Default::default()
        }
    }

    /// Sized for training a few hundred counting samples in seconds.
    pub fn small() -> Self {
        ModelConfig {
            feat_channels: 16,
            mask_embed_channels: 8,
            oga_reduction: 4,
            dec_dim: 32,
            dec_blocks: 2,
            dec_heads: 2,
            ffn_mult: 2,
            lora_rank: 4,
            lora_alpha: 8.0,
            est_dim: 32,
            est_blocks: 3,
            est_heads: 2,
            max_seq: 32,
            ..Default::default()
        }
    }

    pub fn guided_channels(&self) -> usize {
        if self.oga_enabled {
            self.feat_channels + self.mask_embed_channels
        } else {
            self.feat_channels
        }
    }

    pub fn oga_hidden(&self) -> usize {
        (self.guided_channels() / self.oga_reduction).max(1)
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora_alpha / self.lora_rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feat_channels", self.feat_channels),
            ("mask_embed_channels", self.mask_embed_channels),
            ("oga_reduction", self.oga_reduction),
            ("dec_dim", self.dec_dim),
            ("dec_heads", self.dec_heads),
            ("ffn_mult", self.ffn_mult),
            ("lora_rank", self.lora_rank),
            ("est_dim", self.est_dim),
            ("est_blocks", self.est_blocks),
            ("est_heads", self.est_heads),
            ("max_seq", self.max_seq),
            ("max_answer_tokens", self.max_answer_tokens),
            ("max_placeholders", self.max_placeholders),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.dec_dim % self.dec_heads != 0 {
            return Err(Error::Config("model.dec_dim must be divisible by model.dec_heads".into()));
        }
        if self.est_dim % self.est_heads != 0 {
            return Err(Error::Config("model.est_dim must be divisible by model.est_heads".into()));
        }
        if self.lora_rank > self.dec_dim {
            return Err(Error::Config("model.lora_rank must not exceed model.dec_dim".into()));
        }
        if !(self.lora_alpha.is_finite() && self.lora_alpha > 0.0) {
            return Err(Error::Config("model.lora_alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub poly_power: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 2e-4, poly_power: 0.9, epochs: 10, batch_size: 8, max_grad_norm: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if !(self.poly_power.is_finite() && self.poly_power >= 0.0) {
            return Err(Error::Config("train.poly_power must be non-negative".into()));
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm >= 0.0) {
            return Err(Error::Config("train.max_grad_norm must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        Ok(())
    }
}
