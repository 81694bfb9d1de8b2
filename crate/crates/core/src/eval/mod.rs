//! Matches, checkpoint tournaments, capture statistics and reports.

mod matches;
mod protocol;
mod report;
mod tournament;
mod ztest;

pub use matches::{
    capture_stats, policy_seeds, run_episode, run_match, CaptureStats, EpisodeResult, FnSource,
    PolicySource, SpecSource, TimeoutRule,
};
pub use protocol::{evaluate, Method, Protocol};
pub use report::{emit_report, MatchTable};
pub use tournament::{
    play_pair, tournament, Entrant, TournamentConfig, TournamentResult, DEFAULT_OPPONENTS,
};
pub use ztest::{two_proportion_ztest, ZTest, SIGNIFICANCE};
