use serde::{Deserialize, Serialize};

use super::matches::{capture_stats, EpisodeResult, PolicySource, TimeoutRule};
use super::report::MatchTable;
use super::tournament::play_pair;
use crate::sim::EnvConfig;
use crate::stamp::derive_seed;
use crate::{Error, Result};

/// Evaluation budget: `runs` independent runs of `episodes_per_run`
/// episodes per pairing. Defaults are three trained models at 500 episodes
/// each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub runs: usize,
    pub episodes_per_run: usize,
    pub seed: u64,
    #[serde(default)]
    pub timeout_rule: TimeoutRule,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            runs: 3,
            episodes_per_run: 500,
            seed: 0,
            timeout_rule: TimeoutRule::CountAsOne,
        }
    }
}

impl Protocol {
    /// Episode budget multiplied by `scale`, at least one per run.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            episodes_per_run: ((self.episodes_per_run as f64 * scale).round() as usize).max(1),
            ..self.clone()
        }
    }

    pub fn episodes(&self) -> usize {
        self.runs * self.episodes_per_run
    }
}

/// A method under test; run `k` uses model `k % models.len()`.
pub struct Method {
    pub label: String,
    pub models: Vec<Box<dyn PolicySource>>,
}

impl Method {
    pub fn single(source: Box<dyn PolicySource>) -> Self {
        Self {
            label: source.label(),
            models: vec![source],
        }
    }
}

/// Results of every pursuer against every evader. Run `k` of every pairing
/// uses the same spawn seeds.
pub fn evaluate(
    pursuers: &[Method],
    evaders: &[Method],
    config: &EnvConfig,
    protocol: &Protocol,
) -> Result<MatchTable> {
    if protocol.runs == 0 || protocol.episodes_per_run == 0 {
        return Err(Error::Config(
            "runs and episodes_per_run must be positive".into(),
        ));
    }
    if pursuers.iter().chain(evaders).any(|m| m.models.is_empty()) {
        return Err(Error::Config(
            "every method needs at least one model".into(),
        ));
    }
    let mut table = MatchTable::new(
        pursuers.iter().map(|m| m.label.clone()).collect(),
        evaders.iter().map(|m| m.label.clone()).collect(),
    );
    for (ei, ev) in evaders.iter().enumerate() {
        for (pi, pu) in pursuers.iter().enumerate() {
            let mut results: Vec<EpisodeResult> = Vec::with_capacity(protocol.episodes());
            for run in 0..protocol.runs {
                let p = pu.models[run % pu.models.len()].as_ref();
                let e = ev.models[run % ev.models.len()].as_ref();
                let seed = derive_seed(protocol.seed, &[run as u64]);
                results.extend(play_pair(p, e, config, seed, protocol.episodes_per_run)?);
            }
            table.set(ei, pi, capture_stats(&results, protocol.timeout_rule));
        }
    }
    Ok(table)
}
