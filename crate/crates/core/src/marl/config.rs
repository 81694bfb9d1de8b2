use serde::{Deserialize, Serialize};

use crate::belief::BeliefVariant;
use crate::{Error, Result};

/// Training hyperparameters. Every key is required in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: u64,
    /// Environments stepped together.
    pub envs: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Actor and critic learning rate.
    pub lr: f64,
    pub bimdn_lr: f64,
    pub bimdn_batch: usize,
    /// BiMDN update every this many vector steps.
    pub bimdn_interval: u64,
    pub checkpoint_interval: u64,
    /// Standard deviation of the Gaussian exploration noise.
    pub exploration_std: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions required before the first actor-critic update.
    pub warmup: usize,
    /// Samples kept per agent for BiMDN training.
    pub belief_capacity: usize,
    pub belief_warmup: usize,
    /// Vector steps per metrics row.
    pub metrics_interval: u64,
    /// Belief input of both agents.
    pub variant: BeliefVariant,
    /// Multiplier on rewards inside the critic target only.
    pub reward_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            envs: 8,
            gamma: 0.99,
            tau: 0.005,
            lr: 5e-4,
            bimdn_lr: 0.002,
            bimdn_batch: 256,
            bimdn_interval: 10,
            checkpoint_interval: 250,
            exploration_std: 0.1,
            replay_capacity: 100_000,
            batch_size: 512,
            warmup: 1000,
            belief_capacity: 25_000,
            belief_warmup: 10_000,
            metrics_interval: 500,
            variant: BeliefVariant::Ours,
            reward_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("envs", self.envs as f64),
            ("tau", self.tau),
            ("lr", self.lr),
            ("bimdn_lr", self.bimdn_lr),
            ("bimdn_batch", self.bimdn_batch as f64),
            ("bimdn_interval", self.bimdn_interval as f64),
            ("checkpoint_interval", self.checkpoint_interval as f64),
            ("replay_capacity", self.replay_capacity as f64),
            ("batch_size", self.batch_size as f64),
            ("belief_capacity", self.belief_capacity as f64),
            ("metrics_interval", self.metrics_interval as f64),
            ("reward_scale", self.reward_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "train.{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "train.gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.tau > 1.0 {
            return Err(Error::Config(format!(
                "train.tau must not exceed 1, got {}",
                self.tau
            )));
        }
        if !(self.exploration_std >= 0.0 && self.exploration_std.is_finite()) {
            return Err(Error::Config(
                "train.exploration_std must be non-negative".into(),
            ));
        }
        if self.belief_warmup > self.belief_capacity {
            return Err(Error::Config(
                "train.belief_warmup exceeds belief_capacity".into(),
            ));
        }
        Ok(())
    }

    /// Episode budget multiplied by `scale`, checkpoint spacing alike.
    pub fn scaled(&self, scale: f64) -> Self {
        let s = |x: u64| ((x as f64 * scale).round() as u64).max(1);
        Self {
            episodes: if self.episodes == 0 {
                0
            } else {
                s(self.episodes)
            },
            checkpoint_interval: s(self.checkpoint_interval),
            ..self.clone()
        }
    }
}
