use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Policy;
use crate::sim::{wrap_angle, Action, AgentModel, EnvConfig, Observation, Role};
use crate::{Error, Result};

/// Decisions of full steering after the evader drops out of view.
pub const SEARCH_DECISIONS: u32 = 25;
/// Decisions between steering resamples while wandering.
pub const WANDER_DECISIONS: u32 = 8;
/// Decisions between acceleration resamples of the random-walk evader.
pub const RANDOM_WALK_DECISIONS: u32 = 25;

/// Own pose and opponent position recovered from an observation, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Decoded {
    pos: (f64, f64),
    vel: (f64, f64),
    heading: f64,
    steer: f64,
    speed: f64,
    opponent: Option<(f64, f64)>,
}

fn decode(obs: &Observation, own: &AgentModel, config: &EnvConfig) -> Decoded {
    let o = obs.own();
    let b = &config.bounds;
    let pos = b.denormalize(o[0] as f64, o[1] as f64);
    let (vel, heading, steer, speed) = match own {
        AgentModel::Car(p) => {
            let v = o[3] as f64 * p.speed_scale();
            let psi = o[4] as f64 * PI;
            (
                (v * psi.cos(), v * psi.sin()),
                psi,
                o[2] as f64 * p.delta_max,
                v,
            )
        }
        AgentModel::PointMass(p) => {
            let v = (o[2] as f64 * p.v_max, o[3] as f64 * p.v_max);
            (v, 0.0, 0.0, v.0.hypot(v.1))
        }
    };
    let opponent = obs.visible().then(|| {
        let m = obs.opponent();
        b.denormalize(m[0] as f64, m[1] as f64)
    });
    Decoded {
        pos,
        vel,
        heading,
        steer,
        speed,
        opponent,
    }
}

/// Scales a direction so its larger component has magnitude one.
fn per_axis_unit(dx: f64, dy: f64) -> Action {
    let m = dx.abs().max(dy.abs());
    if m == 0.0 {
        return Action::ZERO;
    }
    Action::new(dx / m, dy / m)
}

/// Always outputs the zero action.
#[derive(Clone, Debug, Default)]
pub struct Stationary;

impl Policy for Stationary {
    fn name(&self) -> &str {
        "stationary"
    }

    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Hunt {
    /// Evader in view.
    Track,
    /// Evader just lost: fixed full steering for the remaining decisions.
    Search { steer: f64, left: u32 },
    /// Nothing to chase: piecewise-constant random steering.
    Wander { steer: f64, left: u32 },
}

/// Pure pursuit toward a lookahead point on the segment to the evader, with
/// a timed search after losing sight and a random walk otherwise.
#[derive(Clone, Debug)]
pub struct PurePursuit {
    config: EnvConfig,
    model: AgentModel,
    lookahead: f64,
    mode: Hunt,
    rng: ChaCha8Rng,
}

impl PurePursuit {
    pub fn new(config: &EnvConfig, lookahead: f64, seed: u64) -> Result<Self> {
        if !(lookahead > 0.0 && lookahead.is_finite()) {
            return Err(Error::Config(
                "pure pursuit lookahead must be positive".into(),
            ));
        }
        Ok(Self {
            config: config.clone(),
            model: config.pursuer.model,
            lookahead,
            mode: Hunt::Wander {
                steer: 0.0,
                left: 0,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Remaining search decisions, zero outside a search.
    pub fn search_left(&self) -> u32 {
        match self.mode {
            Hunt::Search { left, .. } => left,
            _ => 0,
        }
    }

    fn chase(&self, me: &Decoded, target: (f64, f64)) -> Action {
        let (dx, dy) = (target.0 - me.pos.0, target.1 - me.pos.1);
        let d = dx.hypot(dy);
        let aim = if d > self.lookahead {
            (
                me.pos.0 + dx * self.lookahead / d,
                me.pos.1 + dy * self.lookahead / d,
            )
        } else {
            target
        };
        let dt = self.config.decision_dt();
        match self.model {
            AgentModel::Car(p) => {
                let ld = (aim.0 - me.pos.0).hypot(aim.1 - me.pos.1);
                let alpha = wrap_angle((aim.1 - me.pos.1).atan2(aim.0 - me.pos.0) - me.heading);
                let desired = if ld == 0.0 {
                    0.0
                } else if alpha.abs() > PI / 2.0 {
                    // Target behind: turn as hard as possible toward it.
                    alpha.signum() * p.delta_max
                } else {
                    (2.0 * p.wheelbase() * alpha.sin() / ld).atan()
                };
                let desired = desired.clamp(-p.delta_max, p.delta_max);
                Action::new((desired - me.steer) / (p.ddelta_max * dt), 1.0).clamped()
            }
            AgentModel::PointMass(p) => {
                if d == 0.0 {
                    return Action::ZERO;
                }
                let want = (p.v_max * dx / d, p.v_max * dy / d);
                Action::new(
                    (want.0 - me.vel.0) / (p.a_max * dt),
                    (want.1 - me.vel.1) / (p.a_max * dt),
                )
                .clamped()
            }
        }
    }

    fn open_loop(&self, steer: f64) -> Action {
        match self.model {
            AgentModel::Car(_) => Action::new(steer, 1.0),
            // A point mass has no steering; the draw becomes a heading.
            AgentModel::PointMass(_) => {
                let a = steer * PI;
                per_axis_unit(a.cos(), a.sin())
            }
        }
    }
}

impl Policy for PurePursuit {
    fn name(&self) -> &str {
        "pure_pursuit"
    }

    fn reset(&mut self, seed: u64) {
        self.mode = Hunt::Wander {
            steer: 0.0,
            left: 0,
        };
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let me = decode(obs, &self.model, &self.config);
        if let Some(target) = me.opponent {
            self.mode = Hunt::Track;
            return Ok(self.chase(&me, target));
        }
        if self.mode == Hunt::Track {
            let steer = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            self.mode = Hunt::Search {
                steer,
                left: SEARCH_DECISIONS,
            };
        }
        let steer = match &mut self.mode {
            Hunt::Search { steer, left } if *left > 0 => {
                *left -= 1;
                *steer
            }
            _ => {
                if !matches!(self.mode, Hunt::Wander { left, .. } if left > 0) {
                    self.mode = Hunt::Wander {
                        steer: self.rng.gen_range(-1.0..=1.0),
                        left: WANDER_DECISIONS,
                    };
                }
                let Hunt::Wander { steer, left } = &mut self.mode else {
                    unreachable!("wander mode set above")
                };
                *left -= 1;
                *steer
            }
        };
        Ok(self.open_loop(steer))
    }
}

/// Evader holding uniformly drawn accelerations for fixed stretches.
#[derive(Clone, Debug)]
pub struct RandomWalkEvader {
    current: Action,
    left: u32,
    rng: ChaCha8Rng,
}

impl RandomWalkEvader {
    pub fn new(seed: u64) -> Self {
        Self {
            current: Action::ZERO,
            left: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomWalkEvader {
    fn name(&self) -> &str {
        "random_walk"
    }

    fn reset(&mut self, seed: u64) {
        *self = Self::new(seed);
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        if self.left == 0 {
            self.current = Action::new(
                self.rng.gen_range(-1.0..=1.0),
                self.rng.gen_range(-1.0..=1.0),
            );
            self.left = RANDOM_WALK_DECISIONS;
        }
        self.left -= 1;
        Ok(self.current)
    }
}

/// Point-mass evader that flees straight away from a visible pursuer and
/// otherwise commands zero acceleration.
#[derive(Clone, Debug)]
pub struct GreedyEvader {
    config: EnvConfig,
}

impl GreedyEvader {
    pub fn new(config: &EnvConfig) -> Result<Self> {
        if !matches!(config.evader.model, AgentModel::PointMass(_)) {
            return Err(Error::Config(
                "greedy evader needs a point-mass evader".into(),
            ));
        }
        Ok(Self {
            config: config.clone(),
        })
    }
}

impl Policy for GreedyEvader {
    fn name(&self) -> &str {
        "greedy"
    }

    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let me = decode(obs, &self.config.evader.model, &self.config);
        Ok(match me.opponent {
            Some(p) => per_axis_unit(me.pos.0 - p.0, me.pos.1 - p.1),
            None => Action::ZERO,
        })
    }
}

/// Observation-in, action-out slot for policies supplied by the caller.
pub struct ExternalPolicy {
    name: String,
    role: Role,
    f: Box<dyn FnMut(&Observation) -> Action + Send>,
}

impl ExternalPolicy {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        f: impl FnMut(&Observation) -> Action + Send + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            role,
            f: Box::new(f),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let a = (self.f)(obs);
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("{} returned {a:?}", self.name)));
        }
        Ok(a.clamped())
    }
}
