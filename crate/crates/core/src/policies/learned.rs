use pposg_nn::{Checkpoint, Mlp, MlpSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::belief::{
    mean_features, mixed_points, BeliefVariant, BiMdn, BiMdnSpec, GaussianMixture, HistoryWindow,
    ObservationHistory, UkfTracker, MIXED_SAMPLES,
};
use crate::sim::{Action, EnvConfig, FrameStack, Observation, Role};
use crate::{Error, Result};

/// Width of an actor's input: two stacked observations plus belief features.
pub fn actor_input_dim(config: &EnvConfig, variant: BeliefVariant) -> usize {
    2 * config.observation_dim() + variant.feature_dim()
}

/// Per-agent, per-episode input pipeline: frame stack, observation history
/// for the BiMDN and the UKF baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefTracker {
    variant: BeliefVariant,
    stack: FrameStack,
    history: Option<ObservationHistory>,
    ukf: Option<UkfTracker>,
}

impl BeliefTracker {
    pub fn new(variant: BeliefVariant, config: &EnvConfig, role: Role) -> Self {
        Self {
            variant,
            stack: FrameStack::default(),
            history: variant
                .uses_bimdn()
                .then(|| ObservationHistory::standard(config.observation_dim())),
            ukf: (variant == BeliefVariant::Ukf).then(|| UkfTracker::new(config, role)),
        }
    }

    pub fn variant(&self) -> BeliefVariant {
        self.variant
    }

    pub fn reset(&mut self) {
        self.stack.reset();
        if let Some(h) = &mut self.history {
            h.clear();
        }
        if let Some(u) = &mut self.ukf {
            u.reset();
        }
    }

    /// Records a new observation and returns the stacked frame.
    pub fn observe(&mut self, obs: &Observation) -> Vec<f32> {
        if let Some(h) = &mut self.history {
            h.push(&obs.data);
        }
        if let Some(u) = &mut self.ukf {
            u.update(obs);
        }
        self.stack.push(obs)
    }

    /// Current BiMDN input, for variants that use one.
    pub fn window(&self) -> Option<HistoryWindow> {
        self.history.as_ref().and_then(|h| h.window().ok())
    }

    pub fn ukf_features(&self) -> Option<[f32; 4]> {
        self.ukf.as_ref().map(|u| u.features())
    }

    pub fn ukf(&self) -> Option<&UkfTracker> {
        self.ukf.as_ref()
    }
}

/// Runs the actor on a batch of input rows.
pub fn actor_actions(actor: &Mlp<f32>, rows: &[Vec<f32>]) -> Result<Vec<Action>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let width = rows[0].len();
    let flat: Vec<f32> = rows.iter().flatten().copied().collect();
    let x = Tensor::from_vec(&[rows.len(), width], flat)?;
    let y = actor.infer(&x)?;
    if !y.is_finite() {
        return Err(Error::NonFinite("actor output".into()));
    }
    Ok((0..rows.len())
        .map(|i| {
            let r = y.row(i);
            Action::new(r[0] as f64, r[1] as f64).clamped()
        })
        .collect())
}

/// Adds independent Gaussian noise to both components, then clamps.
pub fn explore<R: Rng + ?Sized>(action: Action, sigma: f64, rng: &mut R) -> Action {
    if sigma <= 0.0 {
        return action;
    }
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    Action::new(action.u1 + n.sample(rng), action.u2 + n.sample(rng)).clamped()
}

/// Mixed-strategy decision: the actor evaluated at points sampled from the
/// (normalized) belief mixture, combined per `rule`.
pub fn mixed_action<R: Rng + ?Sized>(
    actor: &Mlp<f32>,
    stacked: &[f32],
    mix: &GaussianMixture,
    rule: MixedRule,
    rng: &mut R,
) -> Result<Action> {
    let pts = mixed_points(mix, MIXED_SAMPLES, rng);
    let row = |p: &[f32; 2]| {
        let mut r = stacked.to_vec();
        r.extend_from_slice(p);
        r
    };
    let rows: Vec<Vec<f32>> = match rule {
        MixedRule::Average => pts.iter().map(row).collect(),
        MixedRule::Single => vec![row(&pts[rng.gen_range(0..pts.len())])],
    };
    let actions = actor_actions(actor, &rows)?;
    let n = actions.len() as f64;
    let (s1, s2) = actions
        .iter()
        .fold((0.0, 0.0), |(a, b), x| (a + x.u1, b + x.u2));
    Ok(Action::new(s1 / n, s2 / n))
}

/// How the mixed-strategy variant turns sampled belief points into one action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedRule {
    /// Average the actor's actions over all samples.
    #[default]
    Average,
    /// Act on one uniformly chosen sample.
    Single,
}

/// Layout and hyperparameters needed to rebuild an agent's networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub env: EnvConfig,
    pub variant: BeliefVariant,
    pub actor: MlpSpec,
    pub bimdn: Option<BiMdnSpec>,
}

impl PolicyMeta {
    pub fn new(env: &EnvConfig, variant: BeliefVariant) -> Self {
        let input = actor_input_dim(env, variant);
        Self {
            env: env.clone(),
            variant,
            actor: MlpSpec::two_hidden(input, 2, pposg_nn::Activation::Tanh),
            bimdn: variant
                .uses_bimdn()
                .then(|| BiMdnSpec::standard(env.observation_dim())),
        }
    }
}

/// Tensor-name prefix of an agent's actor in checkpoints.
pub fn actor_prefix(role: Role) -> String {
    format!("{}.actor", role_name(role))
}

/// Tensor-name prefix of an agent's BiMDN in checkpoints.
pub fn bimdn_prefix(role: Role) -> String {
    format!("{}.bimdn", role_name(role))
}

pub fn role_name(role: Role) -> &'static str {
    match role {
        Role::Pursuer => "pursuer",
        Role::Evader => "evader",
    }
}

/// Trained actor with its belief pipeline.
#[derive(Clone, Debug)]
pub struct LearnedPolicy {
    name: String,
    role: Role,
    variant: BeliefVariant,
    actor: Mlp<f32>,
    bimdn: Option<BiMdn<f32>>,
    tracker: BeliefTracker,
    noise_std: f64,
    mixed_rule: MixedRule,
    last_mixture: Option<GaussianMixture>,
    bounds: crate::sim::Bounds,
    rng: ChaCha8Rng,
}

impl LearnedPolicy {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        meta: &PolicyMeta,
        actor: Mlp<f32>,
        bimdn: Option<BiMdn<f32>>,
        seed: u64,
    ) -> Result<Self> {
        if actor.spec.input() != actor_input_dim(&meta.env, meta.variant)
            || actor.spec.output_width() != 2
        {
            return Err(Error::Config(format!(
                "actor layout {:?} does not fit variant {:?}",
                actor.spec.sizes, meta.variant
            )));
        }
        if meta.variant.uses_bimdn() != bimdn.is_some() {
            return Err(Error::Config(format!(
                "variant {:?} and BiMDN presence disagree",
                meta.variant
            )));
        }
        Ok(Self {
            name: name.into(),
            role,
            variant: meta.variant,
            actor,
            bimdn,
            tracker: BeliefTracker::new(meta.variant, &meta.env, role),
            noise_std: 0.0,
            mixed_rule: MixedRule::default(),
            last_mixture: None,
            bounds: meta.env.bounds,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Rebuilds the `role` agent stored in a training checkpoint.
    pub fn from_checkpoint(
        name: impl Into<String>,
        ckpt: &Checkpoint,
        role: Role,
        seed: u64,
    ) -> Result<Self> {
        let meta: PolicyMeta = serde_json::from_value(
            ckpt.meta
                .get("policy")
                .cloned()
                .ok_or_else(|| Error::Config("checkpoint has no policy metadata".into()))?,
        )?;
        let mut actor = Mlp::zeros(&meta.actor);
        ckpt.load_params(&actor_prefix(role), &mut actor)?;
        let bimdn = match meta.bimdn {
            Some(spec) => {
                let mut net = BiMdn::zeros(spec);
                ckpt.load_params(&bimdn_prefix(role), &mut net)?;
                Some(net)
            }
            None => None,
        };
        Self::new(name, role, &meta, actor, bimdn, seed)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn variant(&self) -> BeliefVariant {
        self.variant
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_std = sigma;
        self
    }

    pub fn with_mixed_rule(mut self, rule: MixedRule) -> Self {
        self.mixed_rule = rule;
        self
    }

    fn decide(&mut self, stacked: Vec<f32>) -> Result<Action> {
        let with = |feats: &[f32]| {
            let mut row = stacked.clone();
            row.extend_from_slice(feats);
            row
        };
        let action = match self.variant {
            BeliefVariant::None => actor_actions(&self.actor, &[stacked.clone()])?[0],
            BeliefVariant::Ukf => {
                let feats = self
                    .tracker
                    .ukf_features()
                    .expect("UKF variant tracks a filter");
                actor_actions(&self.actor, &[with(&feats)])?[0]
            }
            BeliefVariant::Ours | BeliefVariant::OursMixed => {
                let window = self
                    .tracker
                    .window()
                    .expect("history holds the current frame");
                let net = self.bimdn.as_ref().expect("BiMDN variant has a network");
                let mix = net.infer(&[&window])?.remove(0);
                let action = if self.variant == BeliefVariant::Ours {
                    actor_actions(&self.actor, &[with(&mean_features(&mix))])?[0]
                } else {
                    mixed_action(&self.actor, &stacked, &mix, self.mixed_rule, &mut self.rng)?
                };
                self.last_mixture = Some(mix);
                action
            }
        };
        Ok(explore(action, self.noise_std, &mut self.rng))
    }
}

impl Policy for LearnedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self, seed: u64) {
        self.tracker.reset();
        self.last_mixture = None;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let stacked = self.tracker.observe(obs);
        self.decide(stacked)
    }

    fn belief(&self) -> Option<GaussianMixture> {
        self.last_mixture
            .as_ref()
            .map(|m| m.denormalized(&self.bounds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Env;

    fn policy(variant: BeliefVariant, seed: u64) -> LearnedPolicy {
        let cfg = EnvConfig::desk();
        let meta = PolicyMeta::new(&cfg, variant);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&meta.actor, &mut rng);
        let bimdn = meta
            .bimdn
            .map(|s| BiMdn::new(BiMdnSpec { hidden: 8, ..s }, &mut rng));
        LearnedPolicy::new("t", Role::Pursuer, &meta, actor, bimdn, 1).unwrap()
    }

    #[test]
    fn every_variant_acts_in_range() {
        let mut env = Env::new(EnvConfig::desk(), 2).unwrap();
        for v in [
            BeliefVariant::None,
            BeliefVariant::Ours,
            BeliefVariant::OursMixed,
            BeliefVariant::Ukf,
        ] {
            let mut p = policy(v, 3);
            let mut obs = env.reset();
            for _ in 0..30 {
                let a = p.act(&obs[0]).unwrap();
                assert!(a.in_range(), "{v:?} {a:?}");
                match env.step(a, Action::ZERO).unwrap() {
                    r if r.terminal.is_some() => break,
                    r => obs = r.observations,
                }
            }
            assert_eq!(p.belief().is_some(), v.uses_bimdn());
        }
    }

    #[test]
    fn zero_noise_is_repeatable() {
        let env = Env::new(EnvConfig::desk(), 4).unwrap();
        let obs = env.observe().0;
        let mut a = policy(BeliefVariant::None, 5);
        let mut b = policy(BeliefVariant::None, 5);
        assert_eq!(a.act(&obs[0]).unwrap(), b.act(&obs[0]).unwrap());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let cfg = EnvConfig::desk();
        let meta = PolicyMeta::new(&cfg, BeliefVariant::Ukf);
        let wrong = Mlp::zeros(&MlpSpec::two_hidden(5, 2, pposg_nn::Activation::Tanh));
        assert!(LearnedPolicy::new("x", Role::Pursuer, &meta, wrong, None, 0).is_err());
    }
}
