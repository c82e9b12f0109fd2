use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// When a dev-perplexity check triggers a learning-rate decay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRule {
    /// Current perplexity is not below the best of the last three.
    #[default]
    MinOfLastThree,
    /// Current perplexity is not below any of the last three.
    AllOfLastThree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmtConfig {
    pub layers: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub reverse_source: bool,
    pub minibatch: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_rule: DecayRule,
    pub clip_norm: f64,
    pub epochs: usize,
    pub eval_every_batches: usize,
    pub init_range: f64,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub seed: u64,
}

impl Default for NmtConfig {
    fn default() -> Self {
        NmtConfig {
            layers: 3,
            hidden_size: 512,
            embed_size: 512,
            source_vocab: 40_000,
            target_vocab: 40_000,
            reverse_source: true,
            minibatch: 128,
            lr0: 0.5,
            lr_decay: 0.99,
            decay_rule: DecayRule::MinOfLastThree,
            clip_norm: 5.0,
            epochs: 10,
            eval_every_batches: 1500,
            init_range: 0.06,
            beam_size: 8,
            max_decode_len: 60,
            seed: 1,
        }
    }
}

impl NmtConfig {
    /// Small model that trains on one CPU core in minutes.
    pub fn desk_scale(source_vocab: usize, target_vocab: usize) -> Self {
        NmtConfig {
            layers: 1,
            hidden_size: 64,
            embed_size: 64,
            source_vocab,
            target_vocab,
            minibatch: 16,
            eval_every_batches: 50,
            ..NmtConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("hidden_size", self.hidden_size),
            ("embed_size", self.embed_size),
            ("source_vocab", self.source_vocab),
            ("minibatch", self.minibatch),
            ("eval_every_batches", self.eval_every_batches),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        // The decoder needs room for UNK, BOS and EOS.
        if self.target_vocab < 3 {
            return Err(Error::Config("target_vocab must be at least 3".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("lr0 must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.init_range > 0.0 && self.init_range.is_finite()) {
            return Err(Error::Config("init_range must be positive".into()));
        }
        Ok(())
    }
}
