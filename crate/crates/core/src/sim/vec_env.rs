use super::config::EnvConfig;
use super::dynamics::Action;
use super::env::{Env, StepResult};
use super::observation::Observation;
use crate::Result;

/// Independent environments stepped in lockstep. Instance `i` is seeded
/// with `seed + i`; no state is shared between instances.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct VecEnv {
    envs: Vec<Env>,
}

impl VecEnv {
    pub fn new(config: &EnvConfig, n: usize, seed: u64) -> Result<Self> {
        let envs = (0..n)
            .map(|i| Env::new(config.clone(), seed.wrapping_add(i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [Env] {
        &mut self.envs
    }

    /// Steps every environment with its `[pursuer, evader]` action pair.
    pub fn step_all(&mut self, actions: &[[Action; 2]]) -> Result<Vec<StepResult>> {
        self.envs
            .iter_mut()
            .zip(actions)
            .map(|(env, [p, e])| env.step(*p, *e))
            .collect()
    }

    /// Resets every terminal environment, returning `(index, observations)`.
    pub fn reset_done(&mut self) -> Vec<(usize, [Observation; 2])> {
        self.envs
            .iter_mut()
            .enumerate()
            .filter(|(_, e)| e.terminal().is_some())
            .map(|(i, e)| (i, e.reset()))
            .collect()
    }
}
