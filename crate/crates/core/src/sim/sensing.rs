use std::f64::consts::PI;

use super::config::{AgentModel, SensorParams};
use super::dynamics::{wrap_angle, AgentState};

/// Wedge test: within range and within half the opening angle of the
/// heading, both boundaries inclusive. A co-located target is visible.
pub fn visibility(
    observer: (f64, f64),
    heading: f64,
    sensor: &SensorParams,
    target: (f64, f64),
) -> bool {
    let dx = target.0 - observer.0;
    let dy = target.1 - observer.1;
    let dist = dx.hypot(dy);
    if dist > sensor.range {
        return false;
    }
    if dist == 0.0 || sensor.fov >= 2.0 * PI {
        return true;
    }
    let bearing = dy.atan2(dx);
    wrap_angle(bearing - heading).abs() <= 0.5 * sensor.fov
}

/// Sensor actually used by an agent: point masses have no heading, so
/// their wedge is the full circle.
pub fn effective_sensor(model: &AgentModel, sensor: &SensorParams) -> SensorParams {
    match model {
        AgentModel::Car(_) => *sensor,
        AgentModel::PointMass(_) => SensorParams {
            fov: 2.0 * PI,
            range: sensor.range,
        },
    }
}

/// Visibility of `target` from `observer` using the observer's sensor.
pub fn sees(
    observer: &AgentState,
    model: &AgentModel,
    sensor: &SensorParams,
    target: &AgentState,
) -> bool {
    let s = effective_sensor(model, sensor);
    visibility(
        observer.position(),
        observer.heading(),
        &s,
        target.position(),
    )
}

/// Opponent state when visible, zeros of matching length otherwise.
pub fn measure(visible: bool, target: &AgentState) -> Vec<f64> {
    if visible {
        target.to_vec()
    } else {
        vec![0.0; target.dim()]
    }
}
