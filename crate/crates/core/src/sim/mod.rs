//! Game world: dynamics, sensing, observations, rewards and episodes.

pub mod config;
pub mod curriculum;
pub mod dynamics;
pub mod env;
pub mod log;
pub mod observation;
pub mod reward;
pub mod sensing;
pub mod vec_env;

pub use config::{
    AgentConfig, AgentModel, Bounds, CarParams, EnvConfig, PointMassParams, RewardCoeffs,
    SensorParams,
};
pub use curriculum::{curriculum, CurriculumParams};
pub use dynamics::{
    step_car, step_pointmass, wrap_angle, Action, AgentState, CarState, PointMassState,
};
pub use env::{Env, JointState, Role, StepResult, TerminalCause};
pub use log::{read_trajectory, MixtureRecord, TrajectoryRecord, TrajectoryWriter};
pub use observation::{build_observation, normalize_state, FrameStack, Observation};
pub use reward::reward;
pub use sensing::{measure, sees, visibility};
pub use vec_env::VecEnv;
