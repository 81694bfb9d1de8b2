//! Scripted baselines and learned actors behind one interface.

pub mod learned;
pub mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::belief::GaussianMixture;
use crate::sim::{Action, EnvConfig, Observation, Role};
use crate::{Error, Result};

pub use learned::{
    actor_actions, actor_input_dim, actor_prefix, bimdn_prefix, explore, mixed_action, role_name,
    BeliefTracker, LearnedPolicy, MixedRule, PolicyMeta,
};
pub use scripted::{
    ExternalPolicy, GreedyEvader, PurePursuit, RandomWalkEvader, Stationary, RANDOM_WALK_DECISIONS,
    SEARCH_DECISIONS, WANDER_DECISIONS,
};

/// One agent's decision rule. Implementations keep their own per-episode
/// state and random stream; `reset` starts a new episode.
pub trait Policy: Send {
    fn name(&self) -> &str;
    fn reset(&mut self, seed: u64);
    fn act(&mut self, obs: &Observation) -> Result<Action>;

    /// Latest belief over the opponent, in meters, if the policy keeps one.
    fn belief(&self) -> Option<GaussianMixture> {
        None
    }
}

/// Policy selection as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Stationary,
    PurePursuit {
        #[serde(default = "default_lookahead")]
        lookahead: f64,
    },
    RandomWalk,
    Greedy,
    /// Agent of the matching role from a training checkpoint.
    Learned {
        path: PathBuf,
        #[serde(default)]
        mixed_rule: MixedRule,
    },
    /// Placeholder for the Rash evader; it has to be supplied through
    /// [`ExternalPolicy`].
    Rash,
}

fn default_lookahead() -> f64 {
    1.0
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Stationary => "stationary".into(),
            PolicySpec::PurePursuit { .. } => "pure_pursuit".into(),
            PolicySpec::RandomWalk => "random_walk".into(),
            PolicySpec::Greedy => "greedy".into(),
            PolicySpec::Learned { path, .. } => path.display().to_string(),
            PolicySpec::Rash => "rash".into(),
        }
    }

    pub fn build(&self, config: &EnvConfig, role: Role, seed: u64) -> Result<Box<dyn Policy>> {
        let wrong_role =
            |what: &str| Error::Config(format!("{what} cannot play the {} role", role_name(role)));
        Ok(match self {
            PolicySpec::Stationary => Box::new(Stationary),
            PolicySpec::PurePursuit { lookahead } => {
                if role != Role::Pursuer {
                    return Err(wrong_role("pure_pursuit"));
                }
                Box::new(PurePursuit::new(config, *lookahead, seed)?)
            }
            PolicySpec::RandomWalk => {
                if role != Role::Evader {
                    return Err(wrong_role("random_walk"));
                }
                Box::new(RandomWalkEvader::new(seed))
            }
            PolicySpec::Greedy => {
                if role != Role::Evader {
                    return Err(wrong_role("greedy"));
                }
                Box::new(GreedyEvader::new(config)?)
            }
            PolicySpec::Learned { path, mixed_rule } => {
                let ckpt = pposg_nn::Checkpoint::load(path)?;
                Box::new(
                    LearnedPolicy::from_checkpoint(self.label(), &ckpt, role, seed)?
                        .with_mixed_rule(*mixed_rule),
                )
            }
            PolicySpec::Rash => {
                return Err(Error::Config(
                    "the rash evader is an external slot; register an ExternalPolicy to use it"
                        .into(),
                ))
            }
        })
    }
}
