//! Desk-scale training run followed by a capture-rate sweep over its
//! checkpoints against the random-walk evader.
//!
//! Knobs (environment): SEED, EPISODES, VARIANT (none|ukf|ours), LR,
//! REWARD_SCALE, ENVS, BATCH, EVAL (episodes per checkpoint), ARENA (desk|full),
//! OUT.

use std::time::Instant;

use pposg_core::belief::BeliefVariant;
use pposg_core::eval::{capture_stats, play_pair, FnSource, PolicySource, SpecSource, TimeoutRule};
use pposg_core::marl::{MemorySink, TrainConfig, Trainer};
use pposg_core::policies::{LearnedPolicy, Policy, PolicySpec};
use pposg_core::sim::EnvConfig;

fn var<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> pposg_core::Result<()> {
    let env = match std::env::var("ARENA").as_deref() {
        Ok("full") => EnvConfig::default(),
        _ => EnvConfig::desk(),
    };
    let variant = match std::env::var("VARIANT").as_deref() {
        Ok("ukf") => BeliefVariant::Ukf,
        Ok("ours") => BeliefVariant::Ours,
        _ => BeliefVariant::None,
    };
    let cfg = TrainConfig {
        episodes: var("EPISODES", 500),
        checkpoint_interval: 50,
        lr: var("LR", 5e-4),
        reward_scale: var("REWARD_SCALE", 1.0),
        envs: var("ENVS", 8),
        batch_size: var("BATCH", 512),
        variant,
        ..TrainConfig::default()
    };
    let seed = var("SEED", 1u64);
    let eval_n = var("EVAL", 200usize);
    let started = Instant::now();
    let mut trainer = Trainer::new(env.clone(), cfg, seed)?;
    let mut sink = MemorySink::default();
    let summary = trainer.run(&mut sink)?;
    eprintln!(
        "trained: {} episodes, {} steps, {} updates in {:.0}s",
        summary.completed,
        summary.steps,
        summary.updates,
        started.elapsed().as_secs_f64()
    );
    for row in &sink.metrics {
        eprintln!("metrics {}", row.csv());
    }
    let rw = SpecSource::new(PolicySpec::RandomWalk, &env)?;
    let pp = SpecSource::new(PolicySpec::PurePursuit { lookahead: 1.0 }, &env)?;
    let rate = |p: &dyn PolicySource| -> pposg_core::Result<f64> {
        let r = play_pair(p, &rw, &env, 1000, eval_n)?;
        Ok(capture_stats(&r, TimeoutRule::CountAsOne).rate)
    };
    println!("pure_pursuit {:.3}", rate(&pp)?);
    for (label, policy, _) in &sink.checkpoints {
        let ck = policy.clone();
        let src = FnSource::new(format!("ep{label}"), move |role, s| {
            Ok(Box::new(LearnedPolicy::from_checkpoint("learned", &ck, role, s)?) as Box<dyn Policy>)
        });
        println!("episode {label} {:.3}", rate(&src)?);
    }
    if let Ok(out) = std::env::var("OUT") {
        let (label, policy, _) = sink.checkpoints.last().expect("final checkpoint");
        policy.save(format!("{out}/policy_{label}.pposg"))?;
    }
    Ok(())
}
