use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentModel, EnvConfig, SensorParams};
use super::curriculum::CurriculumParams;
use super::dynamics::{Action, AgentState};
use super::observation::{build_observation, Observation};
use super::reward::reward;
use super::sensing::{measure, sees};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pursuer,
    Evader,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Pursuer, Role::Evader];

    pub fn index(self) -> usize {
        match self {
            Role::Pursuer => 0,
            Role::Evader => 1,
        }
    }

    pub fn opponent(self) -> Role {
        match self {
            Role::Pursuer => Role::Evader,
            Role::Evader => Role::Pursuer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    Capture,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub pursuer: AgentState,
    pub evader: AgentState,
    /// Decisions taken so far in this episode.
    pub t: u32,
}

impl JointState {
    pub fn distance(&self) -> f64 {
        let (px, py) = self.pursuer.position();
        let (ex, ey) = self.evader.position();
        (px - ex).hypot(py - ey)
    }

    pub fn agent(&self, role: Role) -> &AgentState {
        match role {
            Role::Pursuer => &self.pursuer,
            Role::Evader => &self.evader,
        }
    }
}

/// Outcome of one decision step, indexed `[pursuer, evader]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: [Observation; 2],
    pub rewards: [f64; 2],
    pub visible: [bool; 2],
    pub terminal: Option<TerminalCause>,
}

/// One pursuit-evasion episode. Owns its state and random stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Env {
    config: EnvConfig,
    curriculum: CurriculumParams,
    pursuer_sensor: SensorParams,
    evader_model: AgentModel,
    state: JointState,
    terminal: Option<TerminalCause>,
    rng: ChaCha8Rng,
}

impl Env {
    /// Validates `config` and spawns the first episode.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let curriculum = CurriculumParams::nominal(&config);
        let origin = |m: &AgentModel| AgentState::at_rest(m, 0.0, 0.0, 0.0);
        let mut env = Self {
            pursuer_sensor: config.pursuer.sensor,
            evader_model: config.evader.model,
            state: JointState {
                pursuer: origin(&config.pursuer.model),
                evader: origin(&config.evader.model),
                t: 0,
            },
            config,
            curriculum,
            terminal: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn terminal(&self) -> Option<TerminalCause> {
        self.terminal
    }

    pub fn curriculum_params(&self) -> CurriculumParams {
        self.curriculum
    }

    /// Pursuer sensor after curriculum easing.
    pub fn pursuer_sensor(&self) -> SensorParams {
        self.pursuer_sensor
    }

    /// Evader model after curriculum easing.
    pub fn evader_model(&self) -> AgentModel {
        self.evader_model
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Applies eased parameters; takes effect from the next step.
    pub fn set_curriculum(&mut self, c: CurriculumParams) {
        self.curriculum = c;
        self.pursuer_sensor = SensorParams {
            fov: c.pursuer_fov,
            ..self.config.pursuer.sensor
        };
        self.evader_model = self.config.evader.model.with_v_max(c.evader_v_max);
    }

    fn spawn(&mut self, model: AgentModel) -> AgentState {
        let b = self.config.bounds;
        let x = self.rng.gen_range(b.x_low..=b.x_high);
        let y = self.rng.gen_range(b.y_low..=b.y_high);
        let psi = if self.config.random_yaw && matches!(model, AgentModel::Car(_)) {
            self.rng
                .gen_range(-std::f64::consts::PI..std::f64::consts::PI)
        } else {
            0.0
        };
        AgentState::at_rest(&model, x, y, psi)
    }

    /// Uniform spawn over the workspace, redrawn while the agents start
    /// within capture distance.
    pub fn reset(&mut self) -> [Observation; 2] {
        loop {
            let pursuer = self.spawn(self.config.pursuer.model);
            let evader = self.spawn(self.config.evader.model);
            self.state = JointState {
                pursuer,
                evader,
                t: 0,
            };
            if self.state.distance() > self.config.capture_distance() {
                break;
            }
        }
        self.terminal = None;
        self.observe().0
    }

    /// Places the agents explicitly, e.g. for scripted scenarios.
    pub fn set_state(&mut self, state: JointState) -> Result<()> {
        let ok = matches!(
            (&state.pursuer, &self.config.pursuer.model),
            (AgentState::Car(_), AgentModel::Car(_))
                | (AgentState::PointMass(_), AgentModel::PointMass(_))
        ) && matches!(
            (&state.evader, &self.config.evader.model),
            (AgentState::Car(_), AgentModel::Car(_))
                | (AgentState::PointMass(_), AgentModel::PointMass(_))
        );
        if !ok {
            return Err(Error::Contract(
                "state kinds do not match the configured models".into(),
            ));
        }
        if !(state.pursuer.is_finite() && state.evader.is_finite()) {
            return Err(Error::NonFinite("joint state".into()));
        }
        self.state = state;
        self.terminal = None;
        Ok(())
    }

    /// Current observations and visibility flags.
    pub fn observe(&self) -> ([Observation; 2], [bool; 2]) {
        let cfg = &self.config;
        let s = &self.state;
        let p_sees = sees(
            &s.pursuer,
            &cfg.pursuer.model,
            &self.pursuer_sensor,
            &s.evader,
        );
        let e_sees = sees(&s.evader, &cfg.evader.model, &cfg.evader.sensor, &s.pursuer);
        let op = build_observation(
            &s.pursuer,
            &cfg.pursuer.model,
            &measure(p_sees, &s.evader),
            &cfg.evader.model,
            p_sees,
            s.t,
            cfg,
        );
        let oe = build_observation(
            &s.evader,
            &cfg.evader.model,
            &measure(e_sees, &s.pursuer),
            &cfg.pursuer.model,
            e_sees,
            s.t,
            cfg,
        );
        ([op, oe], [p_sees, e_sees])
    }

    fn confine(&self, agent: &mut AgentState) {
        let b = self.config.bounds;
        match agent {
            AgentState::Car(s) => {
                s.sx = s.sx.clamp(b.x_low, b.x_high);
                s.sy = s.sy.clamp(b.y_low, b.y_high);
            }
            AgentState::PointMass(s) => {
                if (s.sx <= b.x_low && s.vx < 0.0) || (s.sx >= b.x_high && s.vx > 0.0) {
                    s.vx = 0.0;
                }
                if (s.sy <= b.y_low && s.vy < 0.0) || (s.sy >= b.y_high && s.vy > 0.0) {
                    s.vy = 0.0;
                }
                s.sx = s.sx.clamp(b.x_low, b.x_high);
                s.sy = s.sy.clamp(b.y_low, b.y_high);
            }
        }
    }

    /// Both agents act simultaneously; each action is held for
    /// `frame_skip` substeps and capture is tested after every substep.
    pub fn step(&mut self, pursuer: Action, evader: Action) -> Result<StepResult> {
        if let Some(cause) = self.terminal {
            return Err(Error::Contract(format!(
                "step called on a terminal episode ({cause:?})"
            )));
        }
        if !(pursuer.is_finite() && evader.is_finite()) {
            return Err(Error::NonFinite(format!("actions {pursuer:?} {evader:?}")));
        }
        let cfg = &self.config;
        let capture_d = cfg.capture_distance();
        let mut captured = false;
        for _ in 0..cfg.frame_skip {
            let mut p = self
                .state
                .pursuer
                .step(&cfg.pursuer.model, pursuer, cfg.dt)?;
            let mut e = self.state.evader.step(&self.evader_model, evader, cfg.dt)?;
            self.confine(&mut p);
            self.confine(&mut e);
            self.state.pursuer = p;
            self.state.evader = e;
            if self.state.distance() <= capture_d {
                captured = true;
                break;
            }
        }
        self.state.t += 1;
        let timed_out = !captured && self.state.t >= self.config.timeout;
        let (rp, re) = reward(
            self.state.distance(),
            captured,
            timed_out,
            &self.config.rewards,
        );
        self.terminal = if captured {
            Some(TerminalCause::Capture)
        } else if timed_out {
            Some(TerminalCause::Timeout)
        } else {
            None
        };
        let (observations, visible) = self.observe();
        Ok(StepResult {
            observations,
            rewards: [rp, re],
            visible,
            terminal: self.terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::dynamics::{CarState, PointMassState};

    fn place(env: &mut Env, p: (f64, f64), e: (f64, f64), t: u32) {
        env.set_state(JointState {
            pursuer: AgentState::Car(CarState {
                sx: p.0,
                sy: p.1,
                ..CarState::default()
            }),
            evader: AgentState::PointMass(PointMassState {
                sx: e.0,
                sy: e.1,
                ..PointMassState::default()
            }),
            t,
        })
        .unwrap();
    }

    #[test]
    fn capture_just_inside_radius() {
        let mut env = Env::new(EnvConfig::default(), 0).unwrap();
        place(&mut env, (0.0, 0.0), (0.5 - 1e-6, 0.0), 0);
        let r = env.step(Action::ZERO, Action::ZERO).unwrap();
        assert_eq!(r.terminal, Some(TerminalCause::Capture));
        assert_eq!(r.rewards, [1000.0, -1000.0]);
        assert!(env.step(Action::ZERO, Action::ZERO).is_err());
    }

    #[test]
    fn timeout_at_limit() {
        let mut env = Env::new(EnvConfig::default(), 0).unwrap();
        place(&mut env, (-5.0, 0.0), (5.0, 0.0), 399);
        let r = env.step(Action::ZERO, Action::ZERO).unwrap();
        assert_eq!(r.terminal, Some(TerminalCause::Timeout));
        assert_eq!(r.rewards, [-1000.0, 1000.0]);
    }

    #[test]
    fn stationary_running_reward() {
        let mut env = Env::new(EnvConfig::default(), 0).unwrap();
        place(&mut env, (0.0, 0.0), (3.0, 0.0), 10);
        let r = env.step(Action::ZERO, Action::ZERO).unwrap();
        assert_eq!(r.terminal, None);
        assert_eq!(r.rewards, [-4.0, 4.0]);
        assert_eq!(env.state().t, 11);
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let a = Env::new(EnvConfig::default(), 42).unwrap();
        let b = Env::new(EnvConfig::default(), 42).unwrap();
        assert_eq!(a.state(), b.state());
        assert!(a.state().distance() > 0.5);
    }

    #[test]
    fn wall_zeroes_outward_velocity() {
        let mut env = Env::new(EnvConfig::default(), 0).unwrap();
        env.set_state(JointState {
            pursuer: AgentState::Car(CarState::default()),
            evader: AgentState::PointMass(PointMassState {
                sx: 7.99,
                sy: 0.0,
                vx: 1.5,
                vy: 0.5,
            }),
            t: 0,
        })
        .unwrap();
        env.step(Action::ZERO, Action::new(1.0, 0.0)).unwrap();
        match env.state().evader {
            AgentState::PointMass(s) => {
                assert_eq!(s.sx, 8.0);
                assert_eq!(s.vx, 0.0);
                assert_eq!(s.vy, 0.5);
            }
            _ => unreachable!(),
        }
    }
}
