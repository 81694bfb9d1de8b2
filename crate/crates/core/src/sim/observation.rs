use serde::{Deserialize, Serialize};

use super::config::{AgentModel, Bounds, EnvConfig};
use super::dynamics::AgentState;

/// Normalized per-agent observation: own block, opponent block, visibility
/// flag (+1 / -1) and `t / T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub data: Vec<f32>,
    own_dim: usize,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn own(&self) -> &[f32] {
        &self.data[..self.own_dim]
    }

    pub fn opponent(&self) -> &[f32] {
        &self.data[self.own_dim..self.data.len() - 2]
    }

    pub fn flag(&self) -> f32 {
        self.data[self.data.len() - 2]
    }

    pub fn visible(&self) -> bool {
        self.flag() > 0.0
    }

    pub fn time(&self) -> f32 {
        self.data[self.data.len() - 1]
    }
}

fn unit(value: f64, scale: f64, what: &str) -> f64 {
    let x = value / scale;
    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&x) {
        log::debug!("normalized {what} = {x} outside [-1, 1]; clamped");
    }
    x.clamp(-1.0, 1.0)
}

/// Normalizes a raw state vector of the given model. Positions map the
/// workspace to `[-1, 1]`, angles divide by pi, rates by their limits.
pub fn normalize_state(raw: &[f64], model: &AgentModel, bounds: &Bounds) -> Vec<f64> {
    let (cx, cy) = bounds.center();
    let (hx, hy) = bounds.half_extents();
    let mut out = vec![unit(raw[0] - cx, hx, "x"), unit(raw[1] - cy, hy, "y")];
    match model {
        AgentModel::Car(p) => {
            out.push(unit(raw[2], p.delta_max, "steering"));
            out.push(unit(raw[3], p.speed_scale(), "speed"));
            out.push(unit(raw[4], std::f64::consts::PI, "yaw"));
        }
        AgentModel::PointMass(p) => {
            out.push(unit(raw[2], p.v_max, "vx"));
            out.push(unit(raw[3], p.v_max, "vy"));
        }
    }
    out
}

/// Builds an observation. `measurement` is the opponent's raw state or
/// zeros; zeros stay zero after normalization only when the workspace is
/// centered, so an invisible opponent is written as literal zeros.
pub fn build_observation(
    own: &AgentState,
    own_model: &AgentModel,
    measurement: &[f64],
    opp_model: &AgentModel,
    visible: bool,
    t: u32,
    config: &EnvConfig,
) -> Observation {
    let mut data: Vec<f32> = normalize_state(&own.to_vec(), own_model, &config.bounds)
        .into_iter()
        .map(|x| x as f32)
        .collect();
    let own_dim = data.len();
    if visible {
        data.extend(
            normalize_state(measurement, opp_model, &config.bounds)
                .into_iter()
                .map(|x| x as f32),
        );
    } else {
        data.extend(std::iter::repeat(0.0).take(opp_model.state_dim()));
    }
    data.push(if visible { 1.0 } else { -1.0 });
    data.push(unit(t as f64, config.timeout as f64, "time") as f32);
    Observation { data, own_dim }
}

/// Two-frame stack: current observation followed by the previous one. The
/// first frame of an episode is paired with itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStack {
    prev: Option<Vec<f32>>,
}

impl FrameStack {
    pub fn reset(&mut self) {
        self.prev = None;
    }

    pub fn push(&mut self, obs: &Observation) -> Vec<f32> {
        let prev = self.prev.replace(obs.data.clone());
        let mut out = obs.data.clone();
        out.extend_from_slice(prev.as_deref().unwrap_or(&obs.data));
        out
    }

    /// Stack that `push(next)` would return, without mutating.
    pub fn peek(&self, next: &Observation) -> Vec<f32> {
        let mut out = next.data.clone();
        out.extend_from_slice(self.prev.as_deref().unwrap_or(&next.data));
        out
    }
}
