use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;

/// How each position mixes the value vectors of its prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Causal softmax attention with learned positional embeddings.
    Standard,
    /// Uniform average over the whole prefix; no positional embeddings.
    Bow,
    /// Uniform average over the last `k` positions (current included); no
    /// positional embeddings.
    Window(usize),
}

impl AttentionMode {
    pub fn has_positions(self) -> bool {
        matches!(self, AttentionMode::Standard)
    }

    pub fn is_uniform(self) -> bool {
        !self.has_positions()
    }

    /// First position (inclusive) that position `t` averages over.
    pub(crate) fn window_start(self, t: usize) -> usize {
        match self {
            AttentionMode::Window(k) => (t + 1).saturating_sub(k),
            _ => 0,
        }
    }

    pub fn label(self) -> String {
        match self {
            AttentionMode::Standard => "standard".into(),
            AttentionMode::Bow => "bow".into(),
            AttentionMode::Window(k) => format!("window{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub attention: AttentionMode,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale stand-in for the 512-wide, 4-layer, 4-head tiny GPT-2.
    pub fn tiny(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            width: 64,
            layers: 1,
            heads: 4,
            seq_len: 32,
            vocab_size,
            attention: AttentionMode::Standard,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.width == 0 || self.heads == 0 || self.layers == 0 {
            return bad("width, layers and heads must be positive".into());
        }
        if self.width % self.heads != 0 {
            return bad(format!(
                "width {} is not divisible by heads {}",
                self.width, self.heads
            ));
        }
        if self.seq_len < 2 {
            return bad("seq_len must be at least 2".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if let AttentionMode::Window(0) = self.attention {
            return bad("window size must be at least 1".into());
        }
        Ok(())
    }

    pub fn head_size(&self) -> usize {
        self.width / self.heads
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub checkpoint_schedule: Vec<u64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Seed for the batch order; model init uses `ModelConfig::seed`.
    #[serde(default)]
    pub data_seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            warmup_steps: 100,
            max_grad_norm: 1.0,
            batch_size: 16,
            total_steps: 2000,
            checkpoint_schedule: (1..=10).map(|i| i * 200).collect(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            data_seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule for the seed-consistency replication: a small
    /// peak rate reached only at the last step, so early checkpoints stay
    /// close to initialization.
    pub fn desk(data_seed: u64) -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            warmup_steps: 2000,
            data_seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.checkpoint_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoint_schedule must be strictly increasing");
        }
        if self
            .checkpoint_schedule
            .last()
            .is_some_and(|&s| s > self.total_steps)
        {
            return bad("checkpoint_schedule extends past total_steps");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        Ok(())
    }

    /// `lr * min(1, step / warmup)`, steps counted from 1.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        self.learning_rate * (step as f64 / self.warmup_steps as f64).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisibility_is_checked() {
        let mut c = ModelConfig::tiny(10, 0);
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 4;
        c.attention = AttentionMode::Window(0);
        assert!(c.validate().is_err());
        c.attention = AttentionMode::Window(5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn window_start_includes_current() {
        assert_eq!(AttentionMode::Window(1).window_start(7), 7);
        assert_eq!(AttentionMode::Window(5).window_start(7), 3);
        assert_eq!(AttentionMode::Window(5).window_start(2), 0);
        assert_eq!(AttentionMode::Bow.window_start(9), 0);
    }

    #[test]
    fn warmup_is_linear() {
        let tc = TrainConfig {
            learning_rate: 1e-3,
            warmup_steps: 100,
            ..Default::default()
        };
        assert!((tc.lr_at(1) - 1e-5).abs() < 1e-18);
        assert!((tc.lr_at(50) - 5e-4).abs() < 1e-15);
        assert_eq!(tc.lr_at(100), 1e-3);
        assert_eq!(tc.lr_at(5000), 1e-3);
    }

    #[test]
    fn schedule_validation() {
        let mut tc = TrainConfig {
            total_steps: 20,
            checkpoint_schedule: vec![10, 20],
            ..Default::default()
        };
        assert!(tc.validate().is_ok());
        tc.checkpoint_schedule = vec![10, 10];
        assert!(tc.validate().is_err());
        tc.checkpoint_schedule = vec![10, 30];
        assert!(tc.validate().is_err());
    }

    #[test]
    fn mode_serde_shape() {
        assert_eq!(serde_json::to_string(&AttentionMode::Bow).unwrap(), "\"bow\"");
        assert_eq!(
            serde_json::to_string(&AttentionMode::Window(5)).unwrap(),
            "{\"window\":5}"
        );
    }
}
