//! MADDPG with centralized critics, decentralized actors and BiMDN
//! co-training.

mod config;
mod replay;
mod train;
mod update;

pub use config::TrainConfig;
pub use replay::{Batch, BeliefBuffer, ReplayBuffer, Transition};
pub use train::{
    DirSink, EpisodeLog, MemorySink, MetricsRow, TrainSink, TrainSummary, Trainer, STATE_VERSION,
};
pub use update::{bimdn_update, critic_spec, maddpg_update, AgentNets, UpdateLosses, UpdateParams};
