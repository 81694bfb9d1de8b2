use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;

/// Eased task parameters for one training episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumParams {
    pub pursuer_fov: f64,
    pub evader_v_max: f64,
}

impl CurriculumParams {
    /// No easing: the configured values.
    pub fn nominal(config: &EnvConfig) -> Self {
        Self {
            pursuer_fov: config.pursuer.sensor.fov,
            evader_v_max: config.evader.model.nominal_v_max(),
        }
    }
}

/// Starts from a full-circle pursuer wedge and a motionless evader and
/// anneals linearly to the configured values over the first
/// `curriculum_fraction * total` episodes.
pub fn curriculum(episode: u64, total: u64, config: &EnvConfig) -> CurriculumParams {
    let target = CurriculumParams::nominal(config);
    let span = config.curriculum_fraction * total as f64;
    if span <= 0.0 {
        return target;
    }
    let frac = (episode as f64 / span).min(1.0);
    CurriculumParams {
        pursuer_fov: 2.0 * PI + frac * (target.pursuer_fov - 2.0 * PI),
        evader_v_max: frac * target.evader_v_max,
    }
}
