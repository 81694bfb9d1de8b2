//! Pursuit-evasion game under partial observability.
//!
//! * [`sim`]: car / point-mass dynamics, wedge sensors, observations,
//!   rewards and episode stepping.
//! * [`belief`]: Gaussian-mixture beliefs from the recurrent mixture
//!   network, and the unscented Kalman filter baseline.
//! * [`policies`]: scripted baselines and the learned-actor wrapper.
//! * [`marl`]: MADDPG with centralized critics and belief co-training.
//! * [`dp`]: minimax value iteration for the fully observable game.
//! * [`eval`]: matches, tournaments, capture statistics and reports.
//! * [`stamp`]: build, configuration and seed identification for artifacts.

pub mod belief;
pub mod dp;
mod error;
pub mod eval;
pub mod marl;
pub mod policies;
pub mod sim;
pub mod stamp;

pub use error::{Error, Result};
