//! One live episode: a scripted or learned pursuer against the evader
//! commands of connected clients. Pure state machine; the server drives it.

use std::collections::BTreeMap;

use pposg_core::eval::{policy_seeds, PolicySource, SpecSource};
use pposg_core::policies::{Policy, PolicySpec};
use pposg_core::sim::{Action, Env, EnvConfig, Observation, Role, TerminalCause};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::frame::{AgentView, BeliefView, Frame, PerRole, SensorView, FRAME_VERSION};
use crate::protocol::{
    Ack, ClientMessage, Configure, Envelope, ErrorMsg, ServerMessage, PROTOCOL_VERSION, SUPPORTED_VERSIONS,
};

pub type ClientId = u64;

/// Everything that determines a session's frames besides the evader actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSetup {
    pub arena: EnvConfig,
    pub pursuer: PolicySpec,
    /// Include the pursuer's belief mixture in frames when it has one.
    pub belief_overlay: bool,
    /// Episode seed.
    pub seed: u64,
}

impl Default for SessionSetup {
    fn default() -> Self {
        Self {
            arena: EnvConfig::default(),
            pursuer: PolicySpec::PurePursuit { lookahead: 1.0 },
            belief_overlay: true,
            seed: 0,
        }
    }
}

/// Setup plus the evader action applied on every tick; replays to the same
/// frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session: String,
    pub setup: SessionSetup,
    pub actions: Vec<[f64; 2]>,
}

pub struct Session {
    id: String,
    setup: SessionSetup,
    source: SpecSource,
    env: Env,
    pursuer: Box<dyn Policy>,
    pursuer_obs: Observation,
    visible: [bool; 2],
    /// Evader action held between commands.
    held: Action,
    /// Latest command since the previous tick.
    pending: Option<Action>,
    tick: u64,
    paused: bool,
    terminal: Option<TerminalCause>,
    last_actions: [Action; 2],
    last_rewards: [f64; 2],
    applied: Vec<[f64; 2]>,
    clients: BTreeMap<ClientId, bool>,
    /// A frame is owed even though the world did not move.
    dirty: bool,
}

fn spawn(
    setup: &SessionSetup,
    source: &SpecSource,
) -> pposg_core::Result<(Env, Box<dyn Policy>, Observation, [bool; 2])> {
    let env = Env::new(setup.arena.clone(), setup.seed)?;
    let [ps, _] = policy_seeds(setup.seed);
    let mut pursuer = source.make(Role::Pursuer, ps)?;
    pursuer.reset(ps);
    let ([po, _], visible) = env.observe();
    Ok((env, pursuer, po, visible))
}

impl Session {
    /// Fails when the arena is invalid or the pursuer cannot be loaded.
    pub fn new(id: impl Into<String>, setup: SessionSetup) -> pposg_core::Result<Self> {
        let source = SpecSource::new(setup.pursuer.clone(), &setup.arena)?;
        let (env, pursuer, pursuer_obs, visible) = spawn(&setup, &source)?;
        Ok(Self {
            id: id.into(),
            setup,
            source,
            env,
            pursuer,
            pursuer_obs,
            visible,
            held: Action::ZERO,
            pending: None,
            tick: 0,
            paused: false,
            terminal: None,
            last_actions: [Action::ZERO; 2],
            last_rewards: [0.0; 2],
            applied: Vec::new(),
            clients: BTreeMap::new(),
            dirty: true,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn setup(&self) -> &SessionSetup {
        &self.setup
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn terminal(&self) -> Option<TerminalCause> {
        self.terminal
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn clients(&self) -> usize {
        self.clients.len()
    }

    pub fn join(&mut self, client: ClientId) {
        self.clients.insert(client, false);
    }

    pub fn leave(&mut self, client: ClientId) {
        self.clients.remove(&client);
    }

    pub fn pause(&mut self) {
        self.paused = true;
        self.dirty = true;
    }

    pub fn log(&self) -> SessionLog {
        SessionLog {
            session: self.id.clone(),
            setup: self.setup.clone(),
            actions: self.applied.clone(),
        }
    }

    fn restart(&mut self, setup: SessionSetup, source: SpecSource) -> pposg_core::Result<()> {
        let (env, pursuer, po, visible) = spawn(&setup, &source)?;
        self.setup = setup;
        self.source = source;
        self.env = env;
        self.pursuer = pursuer;
        self.pursuer_obs = po;
        self.visible = visible;
        self.held = Action::ZERO;
        self.pending = None;
        self.tick = 0;
        self.paused = false;
        self.terminal = None;
        self.last_actions = [Action::ZERO; 2];
        self.last_rewards = [0.0; 2];
        self.applied.clear();
        self.dirty = true;
        Ok(())
    }

    fn configure(&mut self, c: &Configure) -> pposg_core::Result<()> {
        let setup = SessionSetup {
            arena: c.arena.clone().unwrap_or_else(|| self.setup.arena.clone()),
            pursuer: c.pursuer.clone().unwrap_or_else(|| self.setup.pursuer.clone()),
            belief_overlay: c.belief_overlay.unwrap_or(self.setup.belief_overlay),
            seed: c.seed.unwrap_or(self.setup.seed),
        };
        setup.arena.validate()?;
        let source = SpecSource::new(setup.pursuer.clone(), &setup.arena)?;
        self.restart(setup, source)
    }

    fn reset(&mut self, seed: u64) -> pposg_core::Result<()> {
        let setup = SessionSetup {
            seed,
            ..self.setup.clone()
        };
        let source = SpecSource::new(setup.pursuer.clone(), &setup.arena)?;
        self.restart(setup, source)
    }

    /// Applies one client message and returns the replies for that client.
    pub fn handle(&mut self, client: ClientId, env: &Envelope) -> Vec<ServerMessage> {
        let msg = match ClientMessage::decode(env) {
            Ok(m) => m,
            Err(e) => return vec![ServerMessage::error(Some(env.seq), e)],
        };
        let greeted = self.clients.get(&client).copied().unwrap_or(false);
        if !greeted && !matches!(msg, ClientMessage::Hello(_) | ClientMessage::Bye) {
            return vec![ServerMessage::error(Some(env.seq), "send hello first")];
        }
        let seq = env.seq;
        let kind = msg.kind();
        let reply = match msg {
            ClientMessage::Hello(h) => {
                if !SUPPORTED_VERSIONS.contains(&h.version) {
                    return vec![ServerMessage::Error(ErrorMsg {
                        ack: Some(seq),
                        message: format!("protocol version {} is not supported", h.version),
                        supported_versions: Some(SUPPORTED_VERSIONS.to_vec()),
                    })];
                }
                self.clients.insert(client, true);
                ServerMessage::Ack(Ack {
                    ack: seq,
                    of: kind.into(),
                    warnings: Vec::new(),
                    data: json!({
                        "session": self.id,
                        "protocol": PROTOCOL_VERSION,
                        "frame_version": FRAME_VERSION,
                        "setup": self.setup,
                    }),
                })
            }
            ClientMessage::Configure(c) => match self.configure(&c) {
                Ok(()) => ServerMessage::ack(seq, kind),
                Err(e) => ServerMessage::error(Some(seq), format!("configuration refused: {e}")),
            },
            ClientMessage::Reset(r) => match self.reset(r.seed) {
                Ok(()) => ServerMessage::ack(seq, kind),
                Err(e) => ServerMessage::error(Some(seq), format!("reset failed: {e}")),
            },
            ClientMessage::Action(a) => {
                let raw = Action::new(a.u1, a.u2);
                if !raw.is_finite() {
                    return vec![ServerMessage::error(Some(seq), "action must be finite")];
                }
                let clamped = raw.clamped();
                self.pending = Some(clamped);
                let mut ack = Ack {
                    ack: seq,
                    of: kind.into(),
                    warnings: Vec::new(),
                    data: serde_json::Value::Null,
                };
                if clamped != raw {
                    ack.warnings.push("clamped".into());
                    ack.data = json!({"applied": [clamped.u1, clamped.u2]});
                }
                ServerMessage::Ack(ack)
            }
            ClientMessage::Pause => {
                self.pause();
                ServerMessage::ack(seq, kind)
            }
            ClientMessage::Resume => {
                if self.terminal.is_some() {
                    ServerMessage::Ack(Ack {
                        ack: seq,
                        of: kind.into(),
                        warnings: vec!["episode over; reset to continue".into()],
                        data: serde_json::Value::Null,
                    })
                } else {
                    self.paused = false;
                    self.dirty = true;
                    ServerMessage::ack(seq, kind)
                }
            }
            ClientMessage::Log => ServerMessage::log(seq, &self.log()),
            ClientMessage::Bye => {
                self.leave(client);
                ServerMessage::ack(seq, kind)
            }
        };
        vec![reply]
    }

    /// Advances the world by one decision unless idle, paused or over.
    /// Returns the frame to broadcast, if any.
    pub fn tick(&mut self) -> pposg_core::Result<Option<Frame>> {
        if self.clients.is_empty() {
            return Ok(None);
        }
        if self.paused || self.terminal.is_some() {
            if self.dirty {
                self.dirty = false;
                return Ok(Some(self.frame()));
            }
            return Ok(None);
        }
        self.step()?;
        Ok(Some(self.frame()))
    }

    fn step(&mut self) -> pposg_core::Result<()> {
        let evader = self.pending.take().unwrap_or(self.held);
        self.held = evader;
        let pursuer = self.pursuer.act(&self.pursuer_obs)?.clamped();
        let r = self.env.step(pursuer, evader)?;
        let [po, _] = r.observations;
        self.pursuer_obs = po;
        self.visible = r.visible;
        self.last_actions = [pursuer, evader];
        self.last_rewards = r.rewards;
        self.applied.push([evader.u1, evader.u2]);
        self.tick += 1;
        self.terminal = r.terminal;
        if r.terminal.is_some() {
            self.paused = true;
        }
        self.dirty = false;
        Ok(())
    }

    /// Current world as a frame.
    pub fn frame(&self) -> Frame {
        let cfg = self.env.config();
        let s = self.env.state();
        let belief = if self.setup.belief_overlay {
            self.pursuer.belief().map(BeliefView::from)
        } else {
            None
        };
        Frame {
            version: FRAME_VERSION,
            session: self.id.clone(),
            tick: self.tick,
            episode_seed: self.setup.seed,
            time: s.t as f64 * cfg.decision_dt(),
            paused: self.paused,
            bounds: cfg.bounds.into(),
            capture_distance: cfg.capture_distance(),
            pursuer: AgentView::of(&s.pursuer),
            evader: AgentView::of(&s.evader),
            visible: PerRole::from_array(self.visible),
            sensors: PerRole {
                pursuer: SensorView::of(&self.env.pursuer_sensor(), &s.pursuer),
                evader: SensorView::of(&cfg.evader.sensor, &s.evader),
            },
            actions: PerRole::from_array(self.last_actions.map(|a| [a.u1, a.u2])),
            rewards: PerRole::from_array(self.last_rewards),
            terminal: self.terminal,
            belief,
        }
    }
}

/// Frames a session produces for a logged action sequence: the spawn frame,
/// then one frame per action.
pub fn replay(log: &SessionLog) -> pposg_core::Result<Vec<Frame>> {
    let mut s = Session::new(log.session.clone(), log.setup.clone())?;
    s.join(0);
    let mut frames = vec![s.frame()];
    for a in &log.actions {
        s.pending = Some(Action::new(a[0], a[1]));
        match s.tick()? {
            Some(f) => frames.push(f),
            None => break,
        }
    }
    Ok(frames)
}
