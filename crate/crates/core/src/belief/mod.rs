//! Belief states over the opponent's position.

pub mod bimdn;
pub mod features;
pub mod history;
pub mod mixture;
pub mod ukf;

pub use bimdn::{mixture_nll_tape, BiMdn, BiMdnSpec, BiMdnTrainer, BoundBiMdn, MdnHeads};
pub use features::{mean_features, mixed_points, BeliefVariant, UkfTracker, MIXED_SAMPLES};
pub use history::{pack_windows, HistoryWindow, ObservationHistory};
pub use mixture::{GaussianMixture, SIGMA_FLOOR};
pub use ukf::{UkfBelief, UkfParams, UkfStep};
