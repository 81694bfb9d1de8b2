//! Explicit-Euler integration of the car and point-mass models.
//!
//! Input constraints saturate: when a state sits at a limit and the input
//! pushes further out, that derivative is zeroed; after the step the state
//! is clamped back into range.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::config::{AgentModel, CarParams, PointMassParams};
use crate::{Error, Result};

/// Normalized control input. Car: steering velocity and acceleration.
/// Point mass: accelerations along x and y.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub u1: f64,
    pub u2: f64,
}

impl Action {
    pub const ZERO: Action = Action { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn clamped(self) -> Self {
        Self {
            u1: self.u1.clamp(-1.0, 1.0),
            u2: self.u2.clamp(-1.0, 1.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    pub fn in_range(&self) -> bool {
        (-1.0..=1.0).contains(&self.u1) && (-1.0..=1.0).contains(&self.u2)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.u1, self.u2]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub sx: f64,
    pub sy: f64,
    pub delta: f64,
    pub v: f64,
    pub psi: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMassState {
    pub sx: f64,
    pub sy: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentState {
    Car(CarState),
    PointMass(PointMassState),
}

impl AgentState {
    /// Zero state of the given model at `(x, y)` with heading `psi` (cars only).
    pub fn at_rest(model: &AgentModel, x: f64, y: f64, psi: f64) -> Self {
        match model {
            AgentModel::Car(_) => AgentState::Car(CarState {
                sx: x,
                sy: y,
                psi,
                ..CarState::default()
            }),
            AgentModel::PointMass(_) => AgentState::PointMass(PointMassState {
                sx: x,
                sy: y,
                ..PointMassState::default()
            }),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        match self {
            AgentState::Car(s) => (s.sx, s.sy),
            AgentState::PointMass(s) => (s.sx, s.sy),
        }
    }

    pub fn set_position(&mut self, x: f64, y: f64) {
        match self {
            AgentState::Car(s) => {
                s.sx = x;
                s.sy = y;
            }
            AgentState::PointMass(s) => {
                s.sx = x;
                s.sy = y;
            }
        }
    }

    /// Heading used by the sensor. Point masses have none; 0 is returned.
    pub fn heading(&self) -> f64 {
        match self {
            AgentState::Car(s) => s.psi,
            AgentState::PointMass(_) => 0.0,
        }
    }

    /// Planar velocity in the global frame.
    pub fn velocity(&self) -> (f64, f64) {
        match self {
            AgentState::Car(s) => (s.v * s.psi.cos(), s.v * s.psi.sin()),
            AgentState::PointMass(s) => (s.vx, s.vy),
        }
    }

    /// Raw state vector in model order.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            AgentState::Car(s) => vec![s.sx, s.sy, s.delta, s.v, s.psi],
            AgentState::PointMass(s) => vec![s.sx, s.sy, s.vx, s.vy],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AgentState::Car(_) => 5,
            AgentState::PointMass(_) => 4,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }

    /// Integrates one step; the state variant must match `model`.
    pub fn step(&self, model: &AgentModel, action: Action, dt: f64) -> Result<Self> {
        match (self, model) {
            (AgentState::Car(s), AgentModel::Car(p)) => {
                Ok(AgentState::Car(step_car(s, action, p, dt)?))
            }
            (AgentState::PointMass(s), AgentModel::PointMass(p)) => {
                Ok(AgentState::PointMass(step_pointmass(s, action, p, dt)?))
            }
            _ => Err(Error::Contract(
                "agent state does not match its configured model".into(),
            )),
        }
    }
}

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2pi for tiny negative inputs.
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Zeroes a rate that would push `x` past `[lo, hi]`.
fn saturate(x: f64, rate: f64, lo: f64, hi: f64) -> f64 {
    if (x >= hi && rate > 0.0) || (x <= lo && rate < 0.0) {
        0.0
    } else {
        rate
    }
}

fn check_finite(state: &[f64], action: Action) -> Result<()> {
    if !action.is_finite() {
        return Err(Error::NonFinite(format!("action {action:?}")));
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("state {state:?}")));
    }
    Ok(())
}

pub fn step_car(s: &CarState, action: Action, p: &CarParams, dt: f64) -> Result<CarState> {
    check_finite(&[s.sx, s.sy, s.delta, s.v, s.psi], action)?;
    let a = action.clamped();
    let ddelta = saturate(s.delta, a.u1 * p.ddelta_max, -p.delta_max, p.delta_max);
    let dv = saturate(s.v, a.u2 * p.a_max, p.v_min, p.v_max);
    let next = CarState {
        sx: s.sx + dt * s.v * s.psi.cos(),
        sy: s.sy + dt * s.v * s.psi.sin(),
        delta: (s.delta + dt * ddelta).clamp(-p.delta_max, p.delta_max),
        v: (s.v + dt * dv).clamp(p.v_min, p.v_max),
        psi: wrap_angle(s.psi + dt * s.v / p.wheelbase() * s.delta.tan()),
    };
    Ok(next)
}

pub fn step_pointmass(
    s: &PointMassState,
    action: Action,
    p: &PointMassParams,
    dt: f64,
) -> Result<PointMassState> {
    check_finite(&[s.sx, s.sy, s.vx, s.vy], action)?;
    let a = action.clamped();
    let ax = saturate(s.vx, a.u1 * p.a_max, -p.v_max, p.v_max);
    let ay = saturate(s.vy, a.u2 * p.a_max, -p.v_max, p.v_max);
    Ok(PointMassState {
        sx: s.sx + dt * s.vx,
        sy: s.sy + dt * s.vy,
        vx: (s.vx + dt * ax).clamp(-p.v_max, p.v_max),
        vy: (s.vy + dt * ay).clamp(-p.v_max, p.v_max),
    })
}
