use pposg_arena::protocol::Ack;
use pposg_arena::{replay, Envelope, Frame, ServerMessage, Session, SessionSetup, FRAME_SCHEMA};
use pposg_core::belief::BeliefVariant;
use pposg_core::marl::{TrainConfig, Trainer};
use pposg_core::policies::PolicySpec;
use pposg_core::sim::{Bounds, EnvConfig, TerminalCause};
use serde_json::{json, Value};

fn msg(kind: &str, seq: u64, payload: Value) -> Envelope {
    Envelope::new(kind, seq, payload)
}

fn greeted(setup: SessionSetup) -> Session {
    let mut s = Session::new("t", setup).unwrap();
    s.join(1);
    let r = s.handle(1, &msg("hello", 1, json!({"version": 1})));
    assert!(matches!(&r[..], [ServerMessage::Ack(a)] if a.of == "hello"), "{r:?}");
    s
}

fn ack(r: &[ServerMessage]) -> &Ack {
    match r {
        [ServerMessage::Ack(a)] => a,
        other => panic!("expected one ack, got {other:?}"),
    }
}

fn error(r: &[ServerMessage]) -> String {
    match r {
        [ServerMessage::Error(e)] => e.message.clone(),
        other => panic!("expected one error, got {other:?}"),
    }
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(FRAME_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, frame: &Frame, seq: u64) {
    let text = ServerMessage::Frame(Box::new(frame.clone())).envelope(seq).to_text();
    let value: Value = serde_json::from_str(&text).unwrap();
    if let Err(e) = v.validate(&value) {
        panic!("frame {} violates the schema: {e}\n{text}", frame.tick);
    }
    let back: Frame = serde_json::from_value(value["payload"].clone()).unwrap();
    assert_eq!(&back, frame);
}

fn assert_sane(f: &Frame) {
    assert_eq!(f.rewards.pursuer + f.rewards.evader, 0.0);
    for (x, y) in [f.pursuer.position(), f.evader.position()] {
        assert!(x >= f.bounds.x_low && x <= f.bounds.x_high, "x {x}");
        assert!(y >= f.bounds.y_low && y <= f.bounds.y_high, "y {y}");
    }
}

#[test]
fn hello_with_unknown_version_lists_supported_versions() {
    let mut s = Session::new("t", SessionSetup::default()).unwrap();
    s.join(1);
    match &s.handle(1, &msg("hello", 5, json!({"version": 99})))[..] {
        [ServerMessage::Error(e)] => {
            assert_eq!(e.ack, Some(5));
            assert_eq!(e.supported_versions.as_deref(), Some(&[1][..]));
        }
        other => panic!("{other:?}"),
    }
    assert!(error(&s.handle(1, &msg("action", 6, json!({"u1": 0, "u2": 0})))).contains("hello"));
}

#[test]
fn malformed_messages_get_errors_and_change_nothing() {
    let mut s = greeted(SessionSetup::default());
    let before = s.frame();
    assert!(error(&s.handle(1, &msg("teleport", 2, json!({})))).contains("unknown"));
    assert!(error(&s.handle(1, &msg("action", 3, json!({"u1": "fast"})))).contains("action"));
    assert!(error(&s.handle(1, &msg("pause", 4, json!({"now": true})))).contains("empty"));
    assert!(Envelope::parse("{not json").is_err());
    assert_eq!(s.frame(), before);
    ack(&s.handle(1, &msg("pause", 5, Value::Null)));
}

#[test]
fn out_of_range_action_is_clamped_with_warning() {
    let mut s = greeted(SessionSetup::default());
    let a = ack(&s.handle(1, &msg("action", 2, json!({"u1": 3.0, "u2": -0.5})))).clone();
    assert_eq!(a.ack, 2);
    assert_eq!(a.warnings, vec!["clamped".to_string()]);
    assert_eq!(a.data["applied"], json!([1.0, -0.5]));
    let f = s.tick().unwrap().unwrap();
    assert_eq!(f.actions.evader, [1.0, -0.5]);
    let a = ack(&s.handle(1, &msg("action", 3, json!({"u1": 0.2, "u2": 0.1})))).clone();
    assert!(a.warnings.is_empty());
    assert!(Envelope::parse(r#"{"type":"action","seq":4,"payload":{"u1":1e400,"u2":0}}"#).is_err());
}

#[test]
fn reset_with_same_seed_spawns_identically() {
    let mut s = greeted(SessionSetup::default());
    ack(&s.handle(1, &msg("reset", 2, json!({"seed": 41}))));
    let a = s.tick().unwrap().unwrap();
    for _ in 0..5 {
        s.tick().unwrap();
    }
    ack(&s.handle(1, &msg("reset", 3, json!({"seed": 41}))));
    let b = s.tick().unwrap().unwrap();
    assert_eq!(a.tick, 1);
    assert_eq!(a, b);
    ack(&s.handle(1, &msg("reset", 4, json!({"seed": 42}))));
    let c = s.tick().unwrap().unwrap();
    assert_ne!(a.evader, c.evader);
}

#[test]
fn latest_action_wins_and_is_held() {
    let mut s = greeted(SessionSetup::default());
    s.handle(1, &msg("action", 2, json!({"u1": 0.5, "u2": 0.5})));
    s.handle(1, &msg("action", 3, json!({"u1": -0.25, "u2": 0.75})));
    let f = s.tick().unwrap().unwrap();
    assert_eq!(f.actions.evader, [-0.25, 0.75]);
    for _ in 0..3 {
        assert_eq!(s.tick().unwrap().unwrap().actions.evader, [-0.25, 0.75]);
    }
    assert_eq!(s.log().actions.len(), 4);
}

#[test]
fn ticker_idles_without_clients() {
    let mut s = greeted(SessionSetup::default());
    s.tick().unwrap().unwrap();
    let state = *s.env().state();
    s.leave(1);
    for _ in 0..10 {
        assert!(s.tick().unwrap().is_none());
    }
    assert_eq!(*s.env().state(), state);
    assert_eq!(s.tick_count(), 1);
}

#[test]
fn pause_freezes_the_world_and_resume_continues() {
    let mut s = greeted(SessionSetup::default());
    s.tick().unwrap();
    ack(&s.handle(1, &msg("pause", 2, json!({}))));
    let f = s.tick().unwrap().unwrap();
    assert!(f.paused);
    assert!(s.tick().unwrap().is_none());
    assert_eq!(s.tick_count(), 1);
    ack(&s.handle(1, &msg("resume", 3, json!({}))));
    assert_eq!(s.tick().unwrap().unwrap().tick, 2);
}

#[test]
fn arena_without_room_to_spawn_is_refused() {
    let setup = SessionSetup {
        arena: EnvConfig {
            bounds: Bounds::centered(0.3, 0.3),
            ..EnvConfig::desk()
        },
        ..SessionSetup::default()
    };
    assert!(Session::new("t", setup).is_err());
}

#[test]
fn capture_ends_with_flagged_frame_and_auto_pause() {
    // A point-mass pursuer closes on a resting evader in a small box.
    let mut s = greeted(SessionSetup {
        arena: EnvConfig {
            bounds: Bounds::centered(1.5, 1.5),
            ..EnvConfig::point_mass_duel()
        },
        ..SessionSetup::default()
    });
    let mut f = s.tick().unwrap().unwrap();
    while f.terminal.is_none() {
        assert!(f.tick < 100, "no capture");
        f = s.tick().unwrap().unwrap();
    }
    assert_eq!(f.terminal, Some(TerminalCause::Capture));
    assert!(f.paused);
    assert_eq!(f.rewards.pursuer, 1000.0);
    assert!(s.tick().unwrap().is_none());
    let a = ack(&s.handle(1, &msg("resume", 2, json!({})))).clone();
    assert!(!a.warnings.is_empty());
    assert!(s.tick().unwrap().is_none());
    ack(&s.handle(1, &msg("reset", 3, json!({"seed": 1}))));
    let spawn = s.frame();
    assert_eq!((spawn.tick, spawn.terminal, spawn.paused), (0, None, false));
    assert_eq!(s.tick().unwrap().unwrap().tick, 1);
}

#[test]
fn timeout_ends_the_episode() {
    let mut s = greeted(SessionSetup {
        arena: EnvConfig {
            timeout: 3,
            ..EnvConfig::default()
        },
        pursuer: PolicySpec::Stationary,
        ..SessionSetup::default()
    });
    let frames: Vec<Frame> = (0..5).filter_map(|_| s.tick().unwrap()).collect();
    assert_eq!(frames.len(), 3);
    assert_eq!(frames[2].terminal, Some(TerminalCause::Timeout));
    assert_eq!(frames[2].rewards.evader, 1000.0);
}

fn learned_checkpoint(dir: &std::path::Path) -> std::path::PathBuf {
    let cfg = TrainConfig {
        variant: BeliefVariant::Ours,
        envs: 1,
        ..TrainConfig::default()
    };
    let t = Trainer::new(EnvConfig::desk(), cfg, 3).unwrap();
    let path = dir.join("policy.pposg");
    t.policy_checkpoint(0).save(&path).unwrap();
    path
}

#[test]
fn belief_block_follows_the_overlay_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = learned_checkpoint(dir.path());
    let setup = SessionSetup {
        arena: EnvConfig::desk(),
        pursuer: PolicySpec::Learned {
            path,
            mixed_rule: Default::default(),
        },
        belief_overlay: true,
        seed: 5,
    };
    let mut s = greeted(setup.clone());
    let f = s.tick().unwrap().unwrap();
    let b = f.belief.as_ref().expect("belief block");
    assert_eq!(b.weights.len(), 3);
    assert!((b.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert_valid(&validator(), &f, 1);

    ack(&s.handle(1, &msg("configure", 2, json!({"belief_overlay": false}))));
    let f = s.tick().unwrap().unwrap();
    assert!(f.belief.is_none());
    let text = serde_json::to_string(&f).unwrap();
    assert!(!text.contains("belief"));

    let mut plain = greeted(SessionSetup::default());
    assert!(plain.tick().unwrap().unwrap().belief.is_none());
}

#[test]
fn unloadable_checkpoint_is_refused() {
    let setup = SessionSetup {
        pursuer: PolicySpec::Learned {
            path: "/nonexistent/policy.pposg".into(),
            mixed_rule: Default::default(),
        },
        ..SessionSetup::default()
    };
    assert!(Session::new("t", setup).is_err());

    let mut s = greeted(SessionSetup::default());
    let before = s.setup().clone();
    let e = error(&s.handle(
        1,
        &msg("configure", 2, json!({"pursuer": {"kind": "learned", "path": "/nonexistent/p.pposg"}})),
    ));
    assert!(e.contains("refused"), "{e}");
    assert_eq!(s.setup(), &before);
    assert!(s.tick().unwrap().is_some());
}

#[test]
fn frames_are_schema_valid_sane_and_replayable() {
    let v = validator();
    let arenas = [EnvConfig::desk(), EnvConfig::point_mass_duel(), EnvConfig::car_duel()];
    for (i, arena) in arenas.into_iter().enumerate() {
        let pursuer = PolicySpec::PurePursuit { lookahead: 1.0 };
        let mut s = greeted(SessionSetup {
            arena,
            pursuer,
            belief_overlay: true,
            seed: i as u64,
        });
        let mut frames = vec![s.frame()];
        for k in 0..150u32 {
            let phase = k as f64 / 7.0;
            s.handle(1, &msg("action", 10 + k as u64, json!({"u1": phase.cos() * 1.3, "u2": phase.sin()})));
            match s.tick().unwrap() {
                Some(f) => frames.push(f),
                None => break,
            }
        }
        for (k, f) in frames.iter().enumerate() {
            assert_valid(&v, f, k as u64);
            assert_sane(f);
        }
        let replayed = replay(&s.log()).unwrap();
        assert_eq!(replayed, frames, "arena {i}");
    }
}
