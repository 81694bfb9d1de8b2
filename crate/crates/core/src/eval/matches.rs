use serde::{Deserialize, Serialize};

use crate::policies::{LearnedPolicy, MixedRule, Policy, PolicySpec};
use crate::sim::{Env, EnvConfig, Role, TerminalCause, TrajectoryRecord};
use crate::stamp::derive_seed;
use crate::Result;

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub winner: Role,
    pub cause: TerminalCause,
    /// Decision index of the capture, or the limit `T` on timeout.
    pub steps: u32,
    pub limit: u32,
    pub seed: u64,
    pub pursuer: String,
    pub evader: String,
}

impl EpisodeResult {
    pub fn captured(&self) -> bool {
        self.cause == TerminalCause::Capture
    }

    /// Capture time as a fraction of the limit; timeouts give 1.
    pub fn normalized_time(&self) -> f64 {
        if self.captured() {
            self.steps as f64 / self.limit as f64
        } else {
            1.0
        }
    }
}

/// Builds fresh policy instances for one side of a match.
pub trait PolicySource: Send + Sync {
    fn label(&self) -> String;
    fn make(&self, role: Role, seed: u64) -> Result<Box<dyn Policy>>;
}

/// Scripted baseline or checkpoint named by a [`PolicySpec`]. Checkpoints
/// are read once.
pub struct SpecSource {
    label: String,
    spec: PolicySpec,
    config: EnvConfig,
    checkpoint: Option<(pposg_nn::Checkpoint, MixedRule)>,
}

impl SpecSource {
    pub fn new(spec: PolicySpec, config: &EnvConfig) -> Result<Self> {
        let checkpoint = match &spec {
            PolicySpec::Learned { path, mixed_rule } => {
                Some((pposg_nn::Checkpoint::load(path)?, *mixed_rule))
            }
            _ => None,
        };
        Ok(Self {
            label: spec.label(),
            spec,
            config: config.clone(),
            checkpoint,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl PolicySource for SpecSource {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn make(&self, role: Role, seed: u64) -> Result<Box<dyn Policy>> {
        match &self.checkpoint {
            Some((ckpt, rule)) => Ok(Box::new(
                LearnedPolicy::from_checkpoint(self.label.clone(), ckpt, role, seed)?
                    .with_mixed_rule(*rule),
            )),
            None => self.spec.build(&self.config, role, seed),
        }
    }
}

/// Source backed by a closure.
pub struct FnSource<F> {
    label: String,
    f: F,
}

impl<F> FnSource<F>
where
    F: Fn(Role, u64) -> Result<Box<dyn Policy>> + Send + Sync,
{
    pub fn new(label: impl Into<String>, f: F) -> Self {
        Self {
            label: label.into(),
            f,
        }
    }
}

impl<F> PolicySource for FnSource<F>
where
    F: Fn(Role, u64) -> Result<Box<dyn Policy>> + Send + Sync,
{
    fn label(&self) -> String {
        self.label.clone()
    }

    fn make(&self, role: Role, seed: u64) -> Result<Box<dyn Policy>> {
        (self.f)(role, seed)
    }
}

/// Policy seeds for an episode seed, one per role.
pub fn policy_seeds(seed: u64) -> [u64; 2] {
    [derive_seed(seed, &[1]), derive_seed(seed, &[2])]
}

/// Plays `env` from its current state to the end. Policies must already be
/// reset. `on_step` sees every transition.
pub fn run_episode(
    env: &mut Env,
    pursuer: &mut dyn Policy,
    evader: &mut dyn Policy,
    seed: u64,
    on_step: &mut dyn FnMut(&TrajectoryRecord) -> Result<()>,
) -> Result<EpisodeResult> {
    let (mut obs, _) = env.observe();
    loop {
        let actions = [pursuer.act(&obs[0])?, evader.act(&obs[1])?];
        let r = env.step(actions[0], actions[1])?;
        let s = env.state();
        on_step(&TrajectoryRecord {
            t: s.t,
            pursuer: s.pursuer,
            evader: s.evader,
            actions,
            rewards: r.rewards,
            visible: r.visible,
            terminal: r.terminal,
            belief: pursuer.belief().map(|b| b.to_record()),
        })?;
        if let Some(cause) = r.terminal {
            return Ok(EpisodeResult {
                winner: match cause {
                    TerminalCause::Capture => Role::Pursuer,
                    TerminalCause::Timeout => Role::Evader,
                },
                cause,
                steps: s.t,
                limit: env.config().timeout,
                seed,
                pursuer: pursuer.name().to_string(),
                evader: evader.name().to_string(),
            });
        }
        obs = r.observations;
    }
}

/// One episode spawned from `seed`; policies are reset from the same seed,
/// so a repeated call reproduces the result exactly.
pub fn run_match(
    pursuer: &mut dyn Policy,
    evader: &mut dyn Policy,
    config: &EnvConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut env = Env::new(config.clone(), seed)?;
    let [sp, se] = policy_seeds(seed);
    pursuer.reset(sp);
    evader.reset(se);
    run_episode(&mut env, pursuer, evader, seed, &mut |_| Ok(()))
}

/// How timeouts enter the mean capture time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutRule {
    /// Timeouts count as normalized time 1.
    #[default]
    CountAsOne,
    /// Average over captured episodes only.
    CapturesOnly,
}

/// Aggregate of a set of episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureStats {
    pub episodes: usize,
    pub captures: usize,
    /// Mean normalized capture time.
    pub mean_time: f64,
    /// Population standard deviation of the normalized times.
    pub std_time: f64,
    pub rate: f64,
}

impl CaptureStats {
    pub fn timeout_rate(&self) -> f64 {
        1.0 - self.rate
    }
}

/// Mean and spread of normalized capture times, and the capture rate.
/// With no episodes (or no captures under `CapturesOnly`) the mean is 1 and
/// the spread 0.
pub fn capture_stats(results: &[EpisodeResult], rule: TimeoutRule) -> CaptureStats {
    let captures = results.iter().filter(|r| r.captured()).count();
    let times: Vec<f64> = results
        .iter()
        .filter(|r| rule == TimeoutRule::CountAsOne || r.captured())
        .map(EpisodeResult::normalized_time)
        .collect();
    let (mean_time, std_time) = if times.is_empty() {
        (1.0, 0.0)
    } else {
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    CaptureStats {
        episodes: results.len(),
        captures,
        mean_time,
        std_time,
        rate: if results.is_empty() {
            0.0
        } else {
            captures as f64 / results.len() as f64
        },
    }
}
