use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mixture::GaussianMixture;
use super::ukf::{UkfBelief, UkfParams};
use crate::sim::{AgentModel, EnvConfig, Observation, Role};

/// What, if anything, is appended to an agent's policy input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefVariant {
    /// Plain observations (vanilla MADDPG).
    #[default]
    None,
    /// Weighted mean of the BiMDN mixture.
    Ours,
    /// Actions averaged over points sampled from the BiMDN mixture.
    OursMixed,
    /// UKF position and velocity estimate.
    Ukf,
}

impl BeliefVariant {
    pub fn feature_dim(self) -> usize {
        match self {
            BeliefVariant::None => 0,
            BeliefVariant::Ours | BeliefVariant::OursMixed => 2,
            BeliefVariant::Ukf => 4,
        }
    }

    pub fn uses_bimdn(self) -> bool {
        matches!(self, BeliefVariant::Ours | BeliefVariant::OursMixed)
    }
}

/// Samples drawn per decision by the mixed-strategy variant.
pub const MIXED_SAMPLES: usize = 16;

fn clamp_unit(x: f64) -> f32 {
    x.clamp(-1.0, 1.0) as f32
}

/// Mixture mean (mixture in normalized coordinates), clamped to `[-1, 1]`.
pub fn mean_features(mix: &GaussianMixture) -> [f32; 2] {
    mix.mean().map(clamp_unit)
}

/// Normalized sample points for the mixed-strategy variant.
pub fn mixed_points<R: Rng + ?Sized>(
    mix: &GaussianMixture,
    n: usize,
    rng: &mut R,
) -> Vec<[f32; 2]> {
    mix.sample(n, rng)
        .into_iter()
        .map(|p| p.map(clamp_unit))
        .collect()
}

/// Per-agent UKF fed from that agent's own observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UkfTracker {
    belief: UkfBelief,
    params: UkfParams,
    config: EnvConfig,
    opponent: AgentModel,
    pub reinitializations: u64,
}

impl UkfTracker {
    pub fn new(config: &EnvConfig, role: Role) -> Self {
        let params = UkfParams::default();
        let opponent = match role {
            Role::Pursuer => config.evader.model,
            Role::Evader => config.pursuer.model,
        };
        let (cx, cy) = config.bounds.center();
        Self {
            belief: UkfBelief::new([cx, cy, 0.0, 0.0], &params),
            params,
            config: config.clone(),
            opponent,
            reinitializations: 0,
        }
    }

    pub fn belief(&self) -> &UkfBelief {
        &self.belief
    }

    pub fn reset(&mut self) {
        let (cx, cy) = self.config.bounds.center();
        self.belief = UkfBelief::new([cx, cy, 0.0, 0.0], &self.params);
    }

    /// Opponent `(x, y, vx, vy)` in meters recovered from an observation,
    /// or `None` when the opponent is hidden.
    pub fn measurement(&self, obs: &Observation) -> Option<[f64; 4]> {
        if !obs.visible() {
            return None;
        }
        let o: Vec<f64> = obs.opponent().iter().map(|&x| x as f64).collect();
        let (x, y) = self.config.bounds.denormalize(o[0], o[1]);
        let (vx, vy) = match self.opponent {
            AgentModel::Car(p) => {
                let v = o[3] * p.speed_scale();
                let psi = o[4] * std::f64::consts::PI;
                (v * psi.cos(), v * psi.sin())
            }
            AgentModel::PointMass(p) => (o[2] * p.v_max, o[3] * p.v_max),
        };
        Some([x, y, vx, vy])
    }

    /// Advances one decision. The first visible measurement after a reset
    /// re-centers the filter on it.
    pub fn update(&mut self, obs: &Observation) {
        let z = self.measurement(obs);
        let step = self.belief.step(z, self.config.decision_dt(), &self.params);
        if step.reinitialized {
            self.reinitializations += 1;
        }
        self.belief = step.belief;
    }

    /// Normalized mean: positions by the workspace, velocities by the
    /// opponent's speed limit.
    pub fn features(&self) -> [f32; 4] {
        let m = self.belief.mean;
        let (nx, ny) = self.config.bounds.normalize(m[0], m[1]);
        let vs = match self.opponent {
            AgentModel::Car(p) => p.speed_scale(),
            AgentModel::PointMass(p) => p.v_max,
        };
        [
            clamp_unit(nx),
            clamp_unit(ny),
            clamp_unit(m[2] / vs),
            clamp_unit(m[3] / vs),
        ]
    }
}
