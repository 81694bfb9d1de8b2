//! State frames streamed to clients. The JSON layout is documented by
//! `schema/frame.schema.json`.

use pposg_core::belief::GaussianMixture;
use pposg_core::sim::{AgentState, Bounds, SensorParams, TerminalCause};
use serde::{Deserialize, Serialize};

/// Version of the frame layout; bumped with the schema file.
pub const FRAME_VERSION: u32 = 1;

/// The schema file shipped with the crate.
pub const FRAME_SCHEMA: &str = include_str!("../schema/frame.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerRole<T> {
    pub pursuer: T,
    pub evader: T,
}

impl<T: Copy> PerRole<T> {
    pub fn from_array(a: [T; 2]) -> Self {
        Self {
            pursuer: a[0],
            evader: a[1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AgentView {
    Car {
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        steer: f64,
    },
    PointMass {
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
    },
}

impl AgentView {
    pub fn of(state: &AgentState) -> Self {
        match state {
            AgentState::Car(s) => AgentView::Car {
                x: s.sx,
                y: s.sy,
                heading: s.psi,
                speed: s.v,
                steer: s.delta,
            },
            AgentState::PointMass(s) => AgentView::PointMass {
                x: s.sx,
                y: s.sy,
                vx: s.vx,
                vy: s.vy,
            },
        }
    }

    pub fn position(&self) -> (f64, f64) {
        match *self {
            AgentView::Car { x, y, .. } | AgentView::PointMass { x, y, .. } => (x, y),
        }
    }
}

/// Sensor wedge: apex at the agent, centered on `heading`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorView {
    pub fov: f64,
    pub range: f64,
    pub heading: f64,
}

impl SensorView {
    pub fn of(params: &SensorParams, state: &AgentState) -> Self {
        Self {
            fov: params.fov,
            range: params.range,
            heading: state.heading(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsView {
    pub x_low: f64,
    pub x_high: f64,
    pub y_low: f64,
    pub y_high: f64,
}

impl From<Bounds> for BoundsView {
    fn from(b: Bounds) -> Self {
        Self {
            x_low: b.x_low,
            x_high: b.x_high,
            y_low: b.y_low,
            y_high: b.y_high,
        }
    }
}

/// Pursuer belief over the evader position, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefView {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub stds: Vec<[f64; 2]>,
}

impl From<GaussianMixture> for BeliefView {
    fn from(m: GaussianMixture) -> Self {
        Self {
            weights: m.weights,
            means: m.means,
            stds: m.stds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub version: u32,
    pub session: String,
    /// World steps taken by this session since its last reset.
    pub tick: u64,
    /// Seed of the current episode.
    pub episode_seed: u64,
    /// Simulated seconds since the episode started.
    pub time: f64,
    pub paused: bool,
    pub bounds: BoundsView,
    pub capture_distance: f64,
    pub pursuer: AgentView,
    pub evader: AgentView,
    pub visible: PerRole<bool>,
    pub sensors: PerRole<SensorView>,
    /// Actions applied on the step that produced this frame.
    pub actions: PerRole<[f64; 2]>,
    /// Rewards of that step; both zero on a spawn frame.
    pub rewards: PerRole<f64>,
    pub terminal: Option<TerminalCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefView>,
}
