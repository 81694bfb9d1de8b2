use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pposg_nn::{Adam, AdamConfig, Checkpoint, Mlp, Params, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::TrainConfig;
use super::replay::{Batch, BeliefBuffer, ReplayBuffer, Transition};
use super::update::{
    bimdn_update, critic_spec, maddpg_update, AgentNets, UpdateLosses, UpdateParams,
};
use crate::belief::{mean_features, BeliefVariant, BiMdn, BiMdnTrainer, ObservationHistory};
use crate::policies::{
    actor_actions, actor_input_dim, actor_prefix, bimdn_prefix, explore, role_name, BeliefTracker,
    PolicyMeta,
};
use crate::sim::{curriculum, Action, Env, EnvConfig, Observation, Role, TerminalCause};
use crate::stamp::{derive_seed, Stamp};
use crate::{Error, Result};

/// Layout version of trainer state checkpoints.
pub const STATE_VERSION: u32 = 1;
const STATE_FORMAT: &str = "pposg-trainer";

/// Rewards and outcomes summed over one metrics window (all environments).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Episodes completed when the row was written.
    pub episode: u64,
    /// Vector steps taken so far.
    pub step: u64,
    pub pursuer_reward: f64,
    pub evader_reward: f64,
    pub captures: u64,
    pub timeouts: u64,
}

impl MetricsRow {
    pub const HEADER: &'static str = "episode,step,pursuer_reward,evader_reward,captures,timeouts";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.episode,
            self.step,
            self.pursuer_reward,
            self.evader_reward,
            self.captures,
            self.timeouts
        )
    }
}

/// End of one training episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub env: usize,
    /// Global completion index, from 1.
    pub episode: u64,
    pub cause: TerminalCause,
    pub steps: u32,
}

/// Receives everything a training run produces.
pub trait TrainSink {
    /// `policy` holds actors (and BiMDNs); `state` everything needed to resume.
    fn checkpoint(&mut self, episode: u64, policy: &Checkpoint, state: &Checkpoint) -> Result<()>;
    fn metrics(&mut self, row: &MetricsRow) -> Result<()>;
    fn episode(&mut self, _log: &EpisodeLog) -> Result<()> {
        Ok(())
    }
    fn diagnostic(&mut self, dump: &Value) -> Result<()>;
}

/// Keeps everything in memory.
#[derive(Default)]
pub struct MemorySink {
    pub checkpoints: Vec<(u64, Checkpoint, Checkpoint)>,
    pub metrics: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeLog>,
    pub diagnostics: Vec<Value>,
}

impl TrainSink for MemorySink {
    fn checkpoint(&mut self, episode: u64, policy: &Checkpoint, state: &Checkpoint) -> Result<()> {
        self.checkpoints
            .push((episode, policy.clone(), state.clone()));
        Ok(())
    }

    fn metrics(&mut self, row: &MetricsRow) -> Result<()> {
        self.metrics.push(*row);
        Ok(())
    }

    fn episode(&mut self, log: &EpisodeLog) -> Result<()> {
        self.episodes.push(*log);
        Ok(())
    }

    fn diagnostic(&mut self, dump: &Value) -> Result<()> {
        self.diagnostics.push(dump.clone());
        Ok(())
    }
}

/// Writes `metrics.csv`, `checkpoints/policy_NNNNNN.pposg`,
/// `checkpoints/state_NNNNNN.pposg` and `diagnostic.json` under a directory.
pub struct DirSink {
    dir: PathBuf,
    metrics: fs::File,
    keep_all_states: bool,
    last_state: Option<PathBuf>,
}

impl DirSink {
    /// Creates the layout; with `keep_all_states` unset only the newest state
    /// file is kept. `append` continues an existing metrics file.
    pub fn create(
        dir: impl AsRef<Path>,
        stamp: Option<&Stamp>,
        keep_all_states: bool,
        append: bool,
    ) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("checkpoints"))?;
        let path = dir.join("metrics.csv");
        let metrics = if append && path.exists() {
            fs::OpenOptions::new().append(true).open(&path)?
        } else {
            let mut f = fs::File::create(&path)?;
            if let Some(s) = stamp {
                writeln!(f, "{}", s.comment())?;
            }
            writeln!(f, "{}", MetricsRow::HEADER)?;
            f
        };
        Ok(Self {
            dir,
            metrics,
            keep_all_states,
            last_state: None,
        })
    }

    pub fn policy_path(dir: &Path, episode: u64) -> PathBuf {
        dir.join("checkpoints")
            .join(format!("policy_{episode:06}.pposg"))
    }

    pub fn state_path(dir: &Path, episode: u64) -> PathBuf {
        dir.join("checkpoints")
            .join(format!("state_{episode:06}.pposg"))
    }
}

impl TrainSink for DirSink {
    fn checkpoint(&mut self, episode: u64, policy: &Checkpoint, state: &Checkpoint) -> Result<()> {
        policy.save(Self::policy_path(&self.dir, episode))?;
        let sp = Self::state_path(&self.dir, episode);
        state.save(&sp)?;
        if !self.keep_all_states {
            if let Some(old) = self.last_state.replace(sp.clone()) {
                if old != sp {
                    fs::remove_file(old)?;
                }
            }
        }
        Ok(())
    }

    fn metrics(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.metrics, "{}", row.csv())?;
        Ok(())
    }

    fn diagnostic(&mut self, dump: &Value) -> Result<()> {
        fs::write(
            self.dir.join("diagnostic.json"),
            serde_json::to_vec_pretty(dump)?,
        )?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Progress {
    completed: u64,
    step: u64,
    next_checkpoint: u64,
    last_checkpoint: Option<u64>,
    window: MetricsRow,
    last_losses: Option<UpdateLosses>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub completed: u64,
    pub steps: u64,
    pub updates: u64,
    pub last_losses: Option<UpdateLosses>,
}

/// Full MADDPG training state: networks, optimizers, buffers, environments,
/// per-agent input pipelines and the random stream.
pub struct Trainer {
    env_config: EnvConfig,
    config: TrainConfig,
    seed: u64,
    stamp: Option<Stamp>,
    meta: PolicyMeta,
    agents: [AgentNets; 2],
    bimdn: Option<[BiMdnTrainer; 2]>,
    replay: ReplayBuffer,
    beliefs: Option<[BeliefBuffer; 2]>,
    envs: Vec<Env>,
    trackers: Vec<[BeliefTracker; 2]>,
    current: Vec<[Vec<f32>; 2]>,
    rng: ChaCha8Rng,
    progress: Progress,
    updates: u64,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, config: TrainConfig, seed: u64) -> Result<Self> {
        env_config.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
        let meta = PolicyMeta::new(&env_config, config.variant);
        let width = actor_input_dim(&env_config, config.variant);
        let critic = critic_spec([width, width], 2);
        let agents = [
            AgentNets::init(&meta.actor, &critic, config.lr, &mut rng),
            AgentNets::init(&meta.actor, &critic, config.lr, &mut rng),
        ];
        let bimdn = match meta.bimdn {
            Some(spec) => Some([
                BiMdnTrainer::new(BiMdn::new(spec, &mut rng), config.bimdn_lr),
                BiMdnTrainer::new(BiMdn::new(spec, &mut rng), config.bimdn_lr),
            ]),
            None => None,
        };
        let beliefs = bimdn.as_ref().map(|_| {
            [
                BeliefBuffer::new(config.belief_capacity),
                BeliefBuffer::new(config.belief_capacity),
            ]
        });
        let start = curriculum(0, config.episodes, &env_config);
        let mut envs = Vec::with_capacity(config.envs);
        for i in 0..config.envs {
            let mut env = Env::new(env_config.clone(), derive_seed(seed, &[1, i as u64]))?;
            env.set_curriculum(start);
            envs.push(env);
        }
        let trackers = (0..config.envs)
            .map(|_| Role::BOTH.map(|r| BeliefTracker::new(config.variant, &env_config, r)))
            .collect();
        let mut t = Self {
            replay: ReplayBuffer::new(config.replay_capacity, [width, width]),
            progress: Progress {
                next_checkpoint: config.checkpoint_interval,
                ..Progress::default()
            },
            env_config,
            config,
            seed,
            stamp: None,
            meta,
            agents,
            bimdn,
            beliefs,
            envs,
            trackers,
            current: Vec::new(),
            rng,
            updates: 0,
        };
        let first: Vec<(usize, [Observation; 2])> = (0..t.envs.len())
            .map(|i| (i, t.envs[i].observe().0))
            .collect();
        t.current = t.observe_batch(&first)?;
        Ok(t)
    }

    pub fn with_stamp(mut self, stamp: Stamp) -> Self {
        self.stamp = Some(stamp);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_config
    }

    pub fn policy_meta(&self) -> &PolicyMeta {
        &self.meta
    }

    pub fn completed(&self) -> u64 {
        self.progress.completed
    }

    pub fn steps(&self) -> u64 {
        self.progress.step
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn belief_buffer(&self, role: Role) -> Option<&BeliefBuffer> {
        self.beliefs.as_ref().map(|b| &b[role.index()])
    }

    pub fn agent(&self, role: Role) -> &AgentNets {
        &self.agents[role.index()]
    }

    pub fn agent_mut(&mut self, role: Role) -> &mut AgentNets {
        &mut self.agents[role.index()]
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    /// Feeds fresh observations through each agent's pipeline and returns
    /// actor inputs. BiMDN variants also record supervised samples.
    fn observe_batch(&mut self, items: &[(usize, [Observation; 2])]) -> Result<Vec<[Vec<f32>; 2]>> {
        let mut rows: Vec<[Vec<f32>; 2]> = items
            .iter()
            .map(|(i, obs)| {
                let tr = &mut self.trackers[*i];
                [tr[0].observe(&obs[0]), tr[1].observe(&obs[1])]
            })
            .collect();
        match self.config.variant {
            BeliefVariant::None => {}
            BeliefVariant::Ukf => {
                for ((i, _), row) in items.iter().zip(rows.iter_mut()) {
                    for (a, r) in row.iter_mut().enumerate() {
                        let f = self.trackers[*i][a]
                            .ukf_features()
                            .expect("UKF variant tracks a filter");
                        r.extend_from_slice(&f);
                    }
                }
            }
            BeliefVariant::Ours | BeliefVariant::OursMixed => {
                if items.is_empty() {
                    return Ok(rows);
                }
                let nets = self.bimdn.as_ref().expect("BiMDN variant has networks");
                let buffers = self.beliefs.as_mut().expect("BiMDN variant has buffers");
                for (a, role) in Role::BOTH.into_iter().enumerate() {
                    let windows: Vec<_> = items
                        .iter()
                        .map(|(i, _)| {
                            self.trackers[*i][a]
                                .window()
                                .expect("history holds the current frame")
                        })
                        .collect();
                    let refs: Vec<_> = windows.iter().collect();
                    let mixes = nets[a].net.infer(&refs)?;
                    for (((i, _), row), (mix, window)) in items
                        .iter()
                        .zip(rows.iter_mut())
                        .zip(mixes.iter().zip(windows))
                    {
                        row[a].extend_from_slice(&mean_features(mix));
                        let (x, y) = self.envs[*i].state().agent(role.opponent()).position();
                        let (nx, ny) = self.env_config.bounds.normalize(x, y);
                        buffers[a].push(window, [nx as f32, ny as f32]);
                    }
                }
            }
        }
        Ok(rows)
    }

    fn dump(
        &self,
        sink: &mut dyn TrainSink,
        what: &str,
        losses: Option<&UpdateLosses>,
        batch: Option<&Batch>,
    ) -> Result<()> {
        let tensor = |t: &Tensor<f32>| json!({"shape": t.shape(), "data": t.data()});
        let batch = batch.map(|b| {
            json!({
                "inputs": [tensor(&b.inputs[0]), tensor(&b.inputs[1])],
                "actions": [tensor(&b.actions[0]), tensor(&b.actions[1])],
                "rewards": [tensor(&b.rewards[0]), tensor(&b.rewards[1])],
                "next_inputs": [tensor(&b.next_inputs[0]), tensor(&b.next_inputs[1])],
                "terminal": tensor(&b.terminal),
            })
        });
        sink.diagnostic(&json!({
            "error": what,
            "step": self.progress.step,
            "completed": self.progress.completed,
            "losses": losses.map(|l| json!({
                "critic": l.critic.map(|x| x.to_string()),
                "actor": l.actor.map(|x| x.to_string()),
            })),
            "batch": batch,
        }))
    }

    /// One vector step: act, step every environment, store, update.
    fn step(&mut self, sink: &mut dyn TrainSink) -> Result<()> {
        let n = self.envs.len();
        let mut actions = vec![[Action::ZERO; 2]; n];
        for a in 0..2 {
            let rows: Vec<Vec<f32>> = self.current.iter().map(|c| c[a].clone()).collect();
            let acts = actor_actions(&self.agents[a].actor, &rows)?;
            for (i, act) in acts.into_iter().enumerate() {
                actions[i][a] = explore(act, self.config.exploration_std, &mut self.rng);
            }
        }
        let mut results = Vec::with_capacity(n);
        for (env, act) in self.envs.iter_mut().zip(&actions) {
            results.push(env.step(act[0], act[1])?);
        }
        let items: Vec<(usize, [Observation; 2])> = results
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.observations.clone()))
            .collect();
        let next = self.observe_batch(&items)?;
        let mut resets = Vec::new();
        for (i, (r, next_inputs)) in results.iter().zip(next).enumerate() {
            let rewards = [r.rewards[0] as f32, r.rewards[1] as f32];
            self.replay.push(&Transition {
                inputs: std::mem::take(&mut self.current[i]),
                actions: actions[i].map(|a| [a.u1 as f32, a.u2 as f32]),
                rewards,
                next_inputs: next_inputs.clone(),
                terminal: r.terminal.is_some(),
            })?;
            let w = &mut self.progress.window;
            w.pursuer_reward += r.rewards[0];
            w.evader_reward += r.rewards[1];
            match r.terminal {
                Some(cause) => {
                    match cause {
                        TerminalCause::Capture => w.captures += 1,
                        TerminalCause::Timeout => w.timeouts += 1,
                    }
                    self.progress.completed += 1;
                    sink.episode(&EpisodeLog {
                        env: i,
                        episode: self.progress.completed,
                        cause,
                        steps: self.envs[i].state().t,
                    })?;
                    let c = curriculum(
                        self.progress.completed,
                        self.config.episodes,
                        &self.env_config,
                    );
                    let env = &mut self.envs[i];
                    env.set_curriculum(c);
                    let obs = env.reset();
                    for t in self.trackers[i].iter_mut() {
                        t.reset();
                    }
                    resets.push((i, obs));
                }
                None => self.current[i] = next_inputs,
            }
        }
        let fresh = self.observe_batch(&resets)?;
        for ((i, _), inputs) in resets.iter().zip(fresh) {
            self.current[*i] = inputs;
        }
        self.progress.step += 1;

        if self.replay.len() >= self.config.warmup.max(1) {
            let idx = self
                .replay
                .sample_indices(self.config.batch_size, &mut self.rng);
            let batch = self.replay.batch(&idx)?;
            let hp = UpdateParams {
                gamma: self.config.gamma,
                tau: self.config.tau,
                reward_scale: self.config.reward_scale,
            };
            let outcome = maddpg_update(&batch, &mut self.agents, &hp);
            let losses = match outcome {
                Ok(l) if l.is_finite() => l,
                Ok(l) => {
                    self.dump(sink, "non-finite actor-critic loss", Some(&l), Some(&batch))?;
                    return Err(Error::Numeric(format!(
                        "non-finite loss at step {}: critic {:?} actor {:?}",
                        self.progress.step, l.critic, l.actor
                    )));
                }
                Err(e @ (Error::Numeric(_) | Error::NonFinite(_))) => {
                    self.dump(sink, &e.to_string(), None, Some(&batch))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            self.progress.last_losses = Some(losses);
            self.updates += 1;
        }
        if self.progress.step % self.config.bimdn_interval == 0 {
            if let (Some(nets), Some(buffers)) = (self.bimdn.as_mut(), self.beliefs.as_ref()) {
                for a in 0..2 {
                    let r = bimdn_update(
                        &mut nets[a],
                        &buffers[a],
                        self.config.bimdn_batch,
                        self.config.belief_warmup,
                        &mut self.rng,
                    );
                    if let Err(e) = r {
                        if matches!(e, Error::Numeric(_) | Error::NonFinite(_)) {
                            self.dump(
                                sink,
                                &format!("{} BiMDN: {e}", role_name(Role::BOTH[a])),
                                None,
                                None,
                            )?;
                        }
                        return Err(e);
                    }
                }
            }
        }
        if self.progress.step % self.config.metrics_interval == 0 {
            let mut row = std::mem::take(&mut self.progress.window);
            row.episode = self.progress.completed;
            row.step = self.progress.step;
            sink.metrics(&row)?;
        }
        Ok(())
    }

    fn emit(&mut self, label: u64, sink: &mut dyn TrainSink) -> Result<()> {
        self.progress.last_checkpoint = Some(label);
        let policy = self.policy_checkpoint(label);
        let state = self.state_checkpoint(label)?;
        sink.checkpoint(label, &policy, &state)
    }

    /// Trains until the configured episode count is reached. A fresh trainer
    /// first writes the untrained checkpoint as episode 0.
    pub fn run(&mut self, sink: &mut dyn TrainSink) -> Result<TrainSummary> {
        if self.progress.last_checkpoint.is_none() {
            self.emit(0, sink)?;
        }
        let total = self.config.episodes;
        while self.progress.completed < total {
            self.step(sink)?;
            while self.progress.completed >= self.progress.next_checkpoint
                && self.progress.next_checkpoint <= total
            {
                let label = self.progress.next_checkpoint;
                self.progress.next_checkpoint += self.config.checkpoint_interval;
                self.emit(label, sink)?;
            }
        }
        if total > 0 && self.progress.last_checkpoint != Some(total) {
            self.emit(total, sink)?;
        }
        Ok(TrainSummary {
            completed: self.progress.completed,
            steps: self.progress.step,
            updates: self.updates,
            last_losses: self.progress.last_losses,
        })
    }

    fn common_meta(&self, label: u64) -> Value {
        json!({
            "episode": label,
            "completed": self.progress.completed,
            "seed": self.seed,
            "stamp": self.stamp,
            "policy": self.meta,
        })
    }

    /// Actors and BiMDNs of both agents.
    pub fn policy_checkpoint(&self, label: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(self.common_meta(label));
        for role in Role::BOTH {
            ck.insert_params(&actor_prefix(role), &self.agents[role.index()].actor);
            if let Some(nets) = &self.bimdn {
                ck.insert_params(&bimdn_prefix(role), &nets[role.index()].net);
            }
        }
        ck
    }

    /// Everything needed to continue the run bit-exactly.
    pub fn state_checkpoint(&self, label: u64) -> Result<Checkpoint> {
        let mut meta = self.common_meta(label);
        let m = meta.as_object_mut().expect("object");
        m.insert("format".into(), json!(STATE_FORMAT));
        m.insert("state_version".into(), json!(STATE_VERSION));
        m.insert("train".into(), serde_json::to_value(&self.config)?);
        m.insert("env".into(), serde_json::to_value(&self.env_config)?);
        m.insert("progress".into(), serde_json::to_value(&self.progress)?);
        m.insert("updates".into(), json!(self.updates));
        m.insert("rng".into(), serde_json::to_value(&self.rng)?);
        m.insert("envs".into(), serde_json::to_value(&self.envs)?);
        m.insert("trackers".into(), serde_json::to_value(&self.trackers)?);
        m.insert("current".into(), serde_json::to_value(&self.current)?);
        m.insert(
            "replay".into(),
            json!({"capacity": self.replay.capacity(), "cursor": self.replay.cursor()}),
        );
        let mut optims = serde_json::Map::new();
        let mut ck = Checkpoint::new(Value::Null);
        for role in Role::BOTH {
            let a = &self.agents[role.index()];
            let p = role_name(role);
            ck.insert_params(&format!("{p}.actor"), &a.actor);
            ck.insert_params(&format!("{p}.critic"), &a.critic);
            ck.insert_params(&format!("{p}.target_actor"), &a.target_actor);
            ck.insert_params(&format!("{p}.target_critic"), &a.target_critic);
            insert_adam(
                &mut ck,
                &mut optims,
                &format!("{p}.actor_opt"),
                &a.actor_opt,
            );
            insert_adam(
                &mut ck,
                &mut optims,
                &format!("{p}.critic_opt"),
                &a.critic_opt,
            );
            if let Some(nets) = &self.bimdn {
                let t = &nets[role.index()];
                ck.insert_params(&format!("{p}.bimdn"), &t.net);
                insert_adam(&mut ck, &mut optims, &format!("{p}.bimdn_opt"), &t.opt);
            }
        }
        m.insert("optimizers".into(), Value::Object(optims));
        for (name, t) in self.replay.to_tensors()? {
            ck.insert(format!("replay.{name}"), t);
        }
        if let Some(buffers) = &self.beliefs {
            let width = self.env_config.observation_dim();
            let max_len = ObservationHistory::standard(width).max_len();
            let mut info = Vec::new();
            for role in Role::BOTH {
                let b = &buffers[role.index()];
                let [w, l, t] = b.to_tensors(width, max_len)?;
                let p = format!("beliefs.{}", role_name(role));
                ck.insert(format!("{p}.windows"), w);
                ck.insert(format!("{p}.lengths"), l);
                ck.insert(format!("{p}.targets"), t);
                info.push(json!({"capacity": b.capacity(), "cursor": b.cursor()}));
            }
            m.insert("beliefs".into(), Value::Array(info));
        }
        ck.meta = meta;
        Ok(ck)
    }

    /// Restores a trainer from [`Self::state_checkpoint`] output.
    pub fn from_state(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        if meta.get("format").and_then(Value::as_str) != Some(STATE_FORMAT) {
            return Err(Error::Config("not a trainer state checkpoint".into()));
        }
        let version = meta.get("state_version").and_then(Value::as_u64);
        if version != Some(STATE_VERSION as u64) {
            return Err(Error::Config(format!(
                "trainer state version {version:?} is not supported (this build reads {STATE_VERSION})"
            )));
        }
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Config(format!("state checkpoint lacks `{k}`")))
        };
        let config: TrainConfig = serde_json::from_value(field("train")?)?;
        let env_config: EnvConfig = serde_json::from_value(field("env")?)?;
        let meta_p: PolicyMeta = serde_json::from_value(field("policy")?)?;
        let optims = field("optimizers")?;
        let width = actor_input_dim(&env_config, config.variant);
        let critic = critic_spec([width, width], 2);
        let load_mlp = |name: &str, spec: &pposg_nn::MlpSpec| -> Result<Mlp<f32>> {
            let mut net = Mlp::zeros(spec);
            ck.load_params(name, &mut net)?;
            Ok(net)
        };
        let mut agents = Vec::new();
        let mut bimdn = Vec::new();
        for role in Role::BOTH {
            let p = role_name(role);
            let actor = load_mlp(&format!("{p}.actor"), &meta_p.actor)?;
            let critic_net = load_mlp(&format!("{p}.critic"), &critic)?;
            let target_actor = load_mlp(&format!("{p}.target_actor"), &meta_p.actor)?;
            let target_critic = load_mlp(&format!("{p}.target_critic"), &critic)?;
            let actor_opt = load_adam(ck, &optims, &format!("{p}.actor_opt"), &actor)?;
            let critic_opt = load_adam(ck, &optims, &format!("{p}.critic_opt"), &critic_net)?;
            agents.push(AgentNets {
                actor,
                critic: critic_net,
                target_actor,
                target_critic,
                actor_opt,
                critic_opt,
            });
            if let Some(spec) = meta_p.bimdn {
                let mut net = BiMdn::zeros(spec);
                ck.load_params(&format!("{p}.bimdn"), &mut net)?;
                let opt = load_adam(ck, &optims, &format!("{p}.bimdn_opt"), &net)?;
                bimdn.push(BiMdnTrainer { net, opt });
            }
        }
        let rinfo = field("replay")?;
        let get_u = |v: &Value, k: &str| -> Result<usize> {
            v.get(k)
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .ok_or_else(|| Error::Config(format!("state checkpoint lacks `{k}`")))
        };
        let replay = ReplayBuffer::from_tensors(
            get_u(&rinfo, "capacity")?,
            [width, width],
            get_u(&rinfo, "cursor")?,
            &|name| Ok(ck.get(&format!("replay.{name}"))?.clone()),
        )?;
        let beliefs = if meta_p.bimdn.is_some() {
            let info = field("beliefs")?;
            let width = env_config.observation_dim();
            let mut out = Vec::new();
            for role in Role::BOTH {
                let i = &info[role.index()];
                let p = format!("beliefs.{}", role_name(role));
                out.push(BeliefBuffer::from_tensors(
                    get_u(i, "capacity")?,
                    get_u(i, "cursor")?,
                    width,
                    [
                        ck.get(&format!("{p}.windows"))?,
                        ck.get(&format!("{p}.lengths"))?,
                        ck.get(&format!("{p}.targets"))?,
                    ],
                )?);
            }
            let [a, b]: [BeliefBuffer; 2] = out
                .try_into()
                .map_err(|_| Error::Config("belief buffers".into()))?;
            Some([a, b])
        } else {
            None
        };
        let [a0, a1]: [AgentNets; 2] = agents
            .try_into()
            .map_err(|_| Error::Config("agents".into()))?;
        let bimdn = if bimdn.is_empty() {
            None
        } else {
            let [b0, b1]: [BiMdnTrainer; 2] = bimdn
                .try_into()
                .map_err(|_| Error::Config("BiMDN trainers".into()))?;
            Some([b0, b1])
        };
        Ok(Self {
            seed: serde_json::from_value(field("seed")?)?,
            stamp: serde_json::from_value(field("stamp")?)?,
            meta: meta_p,
            agents: [a0, a1],
            bimdn,
            replay,
            beliefs,
            envs: serde_json::from_value(field("envs")?)?,
            trackers: serde_json::from_value(field("trackers")?)?,
            current: serde_json::from_value(field("current")?)?,
            rng: serde_json::from_value(field("rng")?)?,
            progress: serde_json::from_value(field("progress")?)?,
            updates: serde_json::from_value(field("updates")?)?,
            env_config,
            config,
        })
    }
}

fn insert_adam(
    ck: &mut Checkpoint,
    info: &mut serde_json::Map<String, Value>,
    prefix: &str,
    opt: &Adam<f32>,
) {
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        ck.insert(format!("{prefix}.m.{i}"), m.clone());
        ck.insert(format!("{prefix}.v.{i}"), v.clone());
    }
    info.insert(
        prefix.into(),
        json!({"config": opt.config, "step": opt.step}),
    );
}

fn load_adam<P: Params<f32>>(
    ck: &Checkpoint,
    info: &Value,
    prefix: &str,
    net: &P,
) -> Result<Adam<f32>> {
    let entry = info
        .get(prefix)
        .ok_or_else(|| Error::Config(format!("state checkpoint lacks optimizer `{prefix}`")))?;
    let config: AdamConfig = serde_json::from_value(entry["config"].clone())?;
    let mut opt = Adam::new(config, net);
    opt.step = entry["step"]
        .as_u64()
        .ok_or_else(|| Error::Config(format!("optimizer `{prefix}` lacks a step count")))?;
    for i in 0..opt.m.len() {
        let (m, v) = (
            ck.get(&format!("{prefix}.m.{i}"))?,
            ck.get(&format!("{prefix}.v.{i}"))?,
        );
        if m.shape() != opt.m[i].shape() || v.shape() != opt.v[i].shape() {
            return Err(Error::Config(format!(
                "optimizer `{prefix}` moment {i} has the wrong shape"
            )));
        }
        opt.m[i] = m.clone();
        opt.v[i] = v.clone();
    }
    Ok(opt)
}
