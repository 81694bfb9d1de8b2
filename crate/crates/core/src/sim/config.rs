use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Kinematic bicycle limits. Inputs are steering velocity and acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    pub lf: f64,
    pub lr: f64,
    pub delta_max: f64,
    pub ddelta_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            lf: 0.15,
            lr: 0.15,
            delta_max: 0.34,
            ddelta_max: 3.2,
            v_min: -1.0,
            v_max: 2.5,
            a_max: 2.0,
        }
    }
}

impl CarParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Largest speed magnitude, used to normalize velocity.
    pub fn speed_scale(&self) -> f64 {
        self.v_max.abs().max(self.v_min.abs())
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.lf,
            self.lr,
            self.delta_max,
            self.ddelta_max,
            self.v_min,
            self.v_max,
            self.a_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("car parameters must be finite".into()));
        }
        if self.wheelbase() <= 0.0 {
            return Err(Error::Config(
                "car wheelbase lf + lr must be positive".into(),
            ));
        }
        if self.v_min >= self.v_max {
            return Err(Error::Config("car v_min must be below v_max".into()));
        }
        if self.delta_max <= 0.0 || self.ddelta_max <= 0.0 || self.a_max <= 0.0 {
            return Err(Error::Config(
                "car steering/acceleration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Double-integrator limits, applied per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassParams {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            a_max: 9.81,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentModel {
    Car(CarParams),
    PointMass(PointMassParams),
}

impl AgentModel {
    /// Length of the raw state vector.
    pub fn state_dim(&self) -> usize {
        match self {
            AgentModel::Car(_) => 5,
            AgentModel::PointMass(_) => 4,
        }
    }

    pub fn nominal_v_max(&self) -> f64 {
        match self {
            AgentModel::Car(p) => p.v_max,
            AgentModel::PointMass(p) => p.v_max,
        }
    }

    /// Same model with its speed envelope scaled so the top speed is `v_max`.
    pub fn with_v_max(&self, v_max: f64) -> Self {
        match *self {
            AgentModel::Car(p) => {
                let scale = if p.v_max != 0.0 { v_max / p.v_max } else { 0.0 };
                AgentModel::Car(CarParams {
                    v_min: p.v_min * scale,
                    v_max,
                    ..p
                })
            }
            AgentModel::PointMass(p) => AgentModel::PointMass(PointMassParams { v_max, ..p }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Full opening angle of the wedge (rad).
    pub fov: f64,
    pub range: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub model: AgentModel,
    pub sensor: SensorParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_low: f64,
    pub x_high: f64,
    pub y_low: f64,
    pub y_high: f64,
}

impl Bounds {
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            x_low: -width / 2.0,
            x_high: width / 2.0,
            y_low: -height / 2.0,
            y_high: height / 2.0,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_low + self.x_high),
            0.5 * (self.y_low + self.y_high),
        )
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (
            0.5 * (self.x_high - self.x_low),
            0.5 * (self.y_high - self.y_low),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_low..=self.x_high).contains(&x) && (self.y_low..=self.y_high).contains(&y)
    }

    /// Maps a workspace point to `[-1, 1]^2`.
    pub fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = self.center();
        let (hx, hy) = self.half_extents();
        ((x - cx) / hx, (y - cy) / hy)
    }

    pub fn denormalize(&self, nx: f64, ny: f64) -> (f64, f64) {
        let (cx, cy) = self.center();
        let (hx, hy) = self.half_extents();
        (cx + nx * hx, cy + ny * hy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardCoeffs {
    pub capture: f64,
    pub time: f64,
    pub distance: f64,
}

impl Default for RewardCoeffs {
    fn default() -> Self {
        Self {
            capture: 1000.0,
            time: 1.0,
            distance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub bounds: Bounds,
    /// Integration step (s).
    pub dt: f64,
    /// Integration substeps per decision.
    pub frame_skip: u32,
    /// Decision-step limit.
    pub timeout: u32,
    /// Agent radius; capture is `distance <= 2 * radius`.
    pub agent_radius: f64,
    pub rewards: RewardCoeffs,
    pub pursuer: AgentConfig,
    pub evader: AgentConfig,
    /// Fraction of training episodes over which the curriculum anneals.
    pub curriculum_fraction: f64,
    /// Draw initial car yaw uniformly instead of starting at zero.
    pub random_yaw: bool,
}

impl Default for EnvConfig {
    /// Car pursuer against a point-mass evader in a 16 x 16 m arena.
    fn default() -> Self {
        Self {
            bounds: Bounds::centered(16.0, 16.0),
            dt: 0.1,
            frame_skip: 2,
            timeout: 400,
            agent_radius: 0.25,
            rewards: RewardCoeffs::default(),
            pursuer: AgentConfig {
                model: AgentModel::Car(CarParams::default()),
                sensor: SensorParams {
                    fov: 2.0 * PI / 3.0,
                    range: 6.0,
                },
            },
            evader: AgentConfig {
                model: AgentModel::PointMass(PointMassParams::default()),
                sensor: SensorParams {
                    fov: 2.0 * PI,
                    range: 6.0,
                },
            },
            curriculum_fraction: 0.3,
            random_yaw: false,
        }
    }
}

impl EnvConfig {
    /// Reduced 8 x 8 m arena with a 200-decision limit.
    pub fn desk() -> Self {
        Self {
            bounds: Bounds::centered(8.0, 8.0),
            timeout: 200,
            ..Self::default()
        }
    }

    /// Fully observable point-mass duel: 10 x 10 m, 100 decisions, no frame skip.
    pub fn point_mass_duel() -> Self {
        let pm = AgentConfig {
            model: AgentModel::PointMass(PointMassParams {
                v_max: 2.5,
                a_max: 9.81,
            }),
            sensor: SensorParams {
                fov: 2.0 * PI,
                range: 3.75,
            },
        };
        Self {
            bounds: Bounds::centered(10.0, 10.0),
            frame_skip: 1,
            timeout: 100,
            pursuer: pm,
            evader: pm,
            ..Self::default()
        }
    }

    /// Both agents are cars (physical experiment layout).
    pub fn car_duel() -> Self {
        let car = AgentConfig {
            model: AgentModel::Car(CarParams::default()),
            sensor: SensorParams {
                fov: 1.5 * PI,
                range: 5.0,
            },
        };
        Self {
            bounds: Bounds::centered(10.0, 5.5),
            pursuer: car,
            evader: car,
            ..Self::default()
        }
    }

    /// Seconds of simulated time per decision.
    pub fn decision_dt(&self) -> f64 {
        self.dt * self.frame_skip as f64
    }

    pub fn capture_distance(&self) -> f64 {
        2.0 * self.agent_radius
    }

    /// Observation width: own block, opponent block, flag and time.
    pub fn observation_dim(&self) -> usize {
        self.pursuer.model.state_dim() + self.evader.model.state_dim() + 2
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.x_low < b.x_high && b.y_low < b.y_high) {
            return Err(Error::Config(
                "workspace bounds must satisfy low < high".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.frame_skip == 0 || self.timeout == 0 {
            return Err(Error::Config(
                "frame_skip and timeout must be positive".into(),
            ));
        }
        if !(self.agent_radius > 0.0) {
            return Err(Error::Config("agent_radius must be positive".into()));
        }
        // Spawns closer than the capture distance are redrawn.
        let side = (b.x_high - b.x_low).min(b.y_high - b.y_low);
        if side <= 2.0 * self.capture_distance() {
            return Err(Error::Config(
                "workspace sides must exceed twice the capture distance".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.curriculum_fraction) {
            return Err(Error::Config(
                "curriculum_fraction must lie in [0, 1]".into(),
            ));
        }
        for (name, agent) in [("pursuer", &self.pursuer), ("evader", &self.evader)] {
            let s = agent.sensor;
            if !(s.fov > 0.0 && s.fov <= 2.0 * PI + 1e-12 && s.range > 0.0) {
                return Err(Error::Config(format!(
                    "{name} sensor needs 0 < fov <= 2pi and range > 0"
                )));
            }
            match agent.model {
                AgentModel::Car(p) => p.validate()?,
                AgentModel::PointMass(p) => {
                    if !(p.v_max > 0.0
                        && p.a_max > 0.0
                        && p.v_max.is_finite()
                        && p.a_max.is_finite())
                    {
                        return Err(Error::Config(format!(
                            "{name} point-mass limits must be positive"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
