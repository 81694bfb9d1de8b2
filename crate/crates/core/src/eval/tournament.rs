use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matches::{
    capture_stats, policy_seeds, run_match, CaptureStats, EpisodeResult, PolicySource, TimeoutRule,
};
use super::report::MatchTable;
use crate::sim::{EnvConfig, Role};
use crate::stamp::derive_seed;
use crate::{Error, Result};

/// Checkpoints sampled per entrant and role.
pub const DEFAULT_OPPONENTS: usize = 32;

/// One training checkpoint entered in a tournament.
pub struct Entrant {
    pub label: String,
    /// Training episode the checkpoint was written at; breaks ties.
    pub episode: u64,
    pub source: Box<dyn PolicySource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub opponents: usize,
    pub episodes_per_pair: usize,
    pub seed: u64,
    #[serde(default)]
    pub timeout_rule: TimeoutRule,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        Self {
            opponents: DEFAULT_OPPONENTS,
            episodes_per_pair: 10,
            seed: 0,
            timeout_rule: TimeoutRule::CountAsOne,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Entrants on both axes; only sampled pairs are filled.
    pub table: MatchTable,
    /// Mean capture rate each entrant achieved as pursuer.
    pub pursuer_scores: Vec<f64>,
    /// Mean capture rate each entrant conceded as evader.
    pub evader_scores: Vec<f64>,
    pub best_pursuer: usize,
    pub best_evader: usize,
}

/// Plays `episodes` seeded matches of one pairing. Episode `k` uses the same
/// spawn seed for every pairing.
pub fn play_pair(
    pursuer: &dyn PolicySource,
    evader: &dyn PolicySource,
    config: &EnvConfig,
    seed: u64,
    episodes: usize,
) -> Result<Vec<EpisodeResult>> {
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let s = derive_seed(seed, &[k as u64]);
        let [sp, se] = policy_seeds(s);
        let mut p = pursuer.make(Role::Pursuer, sp)?;
        let mut e = evader.make(Role::Evader, se)?;
        out.push(run_match(p.as_mut(), e.as_mut(), config, s)?);
    }
    Ok(out)
}

/// Indices of up to `k` distinct entrants, sorted.
fn sample_opponents(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Best index by `better`, ties going to the later training episode.
fn select(entrants: &[Entrant], scores: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let tie = scores[i] == scores[best];
        if better(scores[i], scores[best]) || (tie && entrants[i].episode > entrants[best].episode)
        {
            best = i;
        }
    }
    best
}

/// Every entrant plays as pursuer against a uniform sample of entrant
/// evaders, and as evader against a uniform sample of pursuers. Best
/// pursuer: highest mean capture rate; best evader: lowest rate conceded.
pub fn tournament(
    entrants: &[Entrant],
    config: &EnvConfig,
    tc: &TournamentConfig,
) -> Result<TournamentResult> {
    if entrants.is_empty() {
        return Err(Error::Config(
            "tournament needs at least one checkpoint".into(),
        ));
    }
    if tc.opponents == 0 || tc.episodes_per_pair == 0 {
        return Err(Error::Config(
            "opponents and episodes_per_pair must be positive".into(),
        ));
    }
    let n = entrants.len();
    let mut cells: BTreeMap<(usize, usize), CaptureStats> = BTreeMap::new();
    let mut cell = |p: usize, e: usize| -> Result<CaptureStats> {
        if let Some(c) = cells.get(&(p, e)) {
            return Ok(*c);
        }
        let results = play_pair(
            entrants[p].source.as_ref(),
            entrants[e].source.as_ref(),
            config,
            tc.seed,
            tc.episodes_per_pair,
        )?;
        let c = capture_stats(&results, tc.timeout_rule);
        cells.insert((p, e), c);
        Ok(c)
    };
    let mut pursuer_scores = Vec::with_capacity(n);
    let mut evader_scores = Vec::with_capacity(n);
    for i in 0..n {
        let opp = sample_opponents(n, tc.opponents, derive_seed(tc.seed, &[i as u64, 0]));
        let mut sum = 0.0;
        for &e in &opp {
            sum += cell(i, e)?.rate;
        }
        pursuer_scores.push(sum / opp.len() as f64);
    }
    for i in 0..n {
        let opp = sample_opponents(n, tc.opponents, derive_seed(tc.seed, &[i as u64, 1]));
        let mut sum = 0.0;
        for &p in &opp {
            sum += cell(p, i)?.rate;
        }
        evader_scores.push(sum / opp.len() as f64);
    }
    let labels: Vec<String> = entrants.iter().map(|e| e.label.clone()).collect();
    let mut table = MatchTable::new(labels.clone(), labels);
    for (&(p, e), c) in &cells {
        table.set(e, p, *c);
    }
    Ok(TournamentResult {
        table,
        best_pursuer: select(entrants, &pursuer_scores, |a, b| a > b),
        best_evader: select(entrants, &evader_scores, |a, b| a < b),
        pursuer_scores,
        evader_scores,
    })
}
