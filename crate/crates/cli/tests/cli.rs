use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pposg_cli::commands::{serve_options, ServeFlags};
use pposg_cli::config::{apply_overrides, config_hash, load};
use pposg_cli::{CliError, Config, Run, RunManifest};
use pposg_core::belief::BeliefVariant;
use pposg_core::dp::GameGrid;
use pposg_core::eval::Protocol;
use pposg_core::marl::TrainConfig;
use pposg_core::policies::PolicySpec;
use pposg_core::sim::EnvConfig;
use pposg_nn::Checkpoint;
use serde_json::{json, Value};

fn small_config() -> Config {
    let mut c = Config::default();
    c.env = EnvConfig {
        timeout: 15,
        ..EnvConfig::desk()
    };
    c.train = TrainConfig {
        episodes: 6,
        envs: 2,
        batch_size: 16,
        warmup: 32,
        replay_capacity: 500,
        checkpoint_interval: 2,
        metrics_interval: 7,
        belief_capacity: 200,
        belief_warmup: 40,
        bimdn_batch: 8,
        bimdn_interval: 5,
        variant: BeliefVariant::Ours,
        ..TrainConfig::default()
    };
    c.eval.protocol = Protocol {
        runs: 2,
        episodes_per_run: 3,
        ..Protocol::default()
    };
    c.solve = GameGrid::line(3.0, 0.1, 2.0, 1.0, 0.05, 0.5);
    c.play.episodes = 3;
    c
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_config_file(dir: &Path) -> PathBuf {
    write_config(dir, &serde_json::to_value(small_config()).unwrap())
}

fn pposg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pposg"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("PPOSG_")) {
        cmd.env_remove(k);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_key_exits_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(small_config()).unwrap();
    v["train"].as_object_mut().unwrap().remove("episodes");
    let cfg = write_config(dir.path(), &v);
    let o = pposg(&["config", "--config", path_str(&cfg)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`config.train.episodes`"), "{}", stderr(&o));

    v["env"]["pursuer"]["sensor"].as_object_mut().unwrap().remove("fov");
    v["train"]["episodes"] = json!(6);
    let cfg = write_config(dir.path(), &v);
    let o = pposg(&["config", "--config", path_str(&cfg)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.env.pursuer.sensor.fov"), "{}", stderr(&o));
}

#[test]
fn unknown_and_mistyped_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(small_config()).unwrap();
    v["train"]["episodez"] = json!(3);
    let cfg = write_config(dir.path(), &v);
    let o = pposg(&["config", "--config", path_str(&cfg)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("episodez"));

    let o = pposg(&["config"], &[("PPOSG_TRAIN__GAMMA", "\"high\"")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.train.gamma"), "{}", stderr(&o));

    let o = pposg(&["config"], &[("PPOSG_TRAIN__GAMMA", "1.5")]);
    assert_eq!(o.status.code(), Some(2));
    let o = pposg(&["config", "--scale", "0"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = pposg(&["config", "--config", "/nonexistent/config.json"], &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn environment_overrides_reach_nested_keys() {
    let o = pposg(
        &["config"],
        &[
            ("PPOSG_TRAIN__EPISODES", "123"),
            ("PPOSG_ENV__BOUNDS__X_HIGH", "9.5"),
            ("PPOSG_SERVE__BIND", "0.0.0.0:9000"),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c: Config = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(c.train.episodes, 123);
    assert_eq!(c.env.bounds.x_high, 9.5);
    assert_eq!(c.serve.bind, "0.0.0.0:9000");

    let mut v = serde_json::to_value(Config::default()).unwrap();
    let applied = apply_overrides(
        &mut v,
        [
            ("PPOSG_EVAL__TOURNAMENT__OPPONENTS".to_string(), "4".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ],
    )
    .unwrap();
    assert_eq!(applied, vec!["eval.tournament.opponents".to_string()]);
    assert_eq!(v["eval"]["tournament"], json!({"opponents": 4}));
}

#[test]
fn defaults_are_the_full_recipe() {
    let c = load(None, Vec::new()).unwrap();
    assert_eq!(c, Config::default());
    assert_eq!(c.train, TrainConfig::default());
    assert_eq!(c.env, EnvConfig::default());
    assert_eq!(config_hash(&c), config_hash(&Config::default()));
    let mut other = c.clone();
    other.train.episodes += 1;
    assert_ne!(config_hash(&c), config_hash(&other));
}

#[test]
fn fixed_seed_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let mut metrics = Vec::new();
    let mut policies = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = pposg(&["train", "--config", path_str(&cfg), "--seed", "7", "--out", path_str(&out)], &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        metrics.push(fs::read(out.join("metrics.csv")).unwrap());
        policies.push(fs::read(out.join("checkpoints/policy_000006.pposg")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    assert_eq!(policies[0], policies[1]);
    let text = String::from_utf8(metrics[0].clone()).unwrap();
    assert!(text.lines().count() > 2);

    let out = dir.path().join("c");
    let o = pposg(&["train", "--config", path_str(&cfg), "--seed", "8", "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(out.join("metrics.csv")).unwrap(), metrics[0]);
}

#[test]
fn checkpoints_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let out = dir.path().join("run");
    let o = pposg(&["train", "--config", path_str(&cfg), "--seed", "3", "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckdir = out.join("checkpoints");
    let mut n = 0;
    for entry in fs::read_dir(&ckdir).unwrap() {
        let path = entry.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.to_bytes().unwrap(), bytes, "{}", path.display());
        let copy = dir.path().join("copy.pposg");
        ck.save(&copy).unwrap();
        assert_eq!(fs::read(&copy).unwrap(), bytes);
        n += 1;
    }
    // Policies at 0, 2, 4, 6 and the newest state.
    assert_eq!(n, 5);

    let resumed = dir.path().join("resumed");
    let state = ckdir.join("state_000006.pposg");
    let o = pposg(
        &["train", "--resume", path_str(&state), "--out", path_str(&resumed)],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn scale_shrinks_budgets_and_is_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.train.episodes = 40;
    c.train.checkpoint_interval = 20;
    c.play.episodes = 30;
    let cfg = write_config(dir.path(), &serde_json::to_value(&c).unwrap());
    let out = dir.path().join("train");
    let o = pposg(
        &["train", "--config", path_str(&cfg), "--scale", "0.1", "--out", path_str(&out)],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let labels: Vec<String> = fs::read_dir(out.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("policy_"))
        .collect();
    let mut labels = labels;
    labels.sort();
    assert_eq!(labels, ["policy_000000.pposg", "policy_000002.pposg", "policy_000004.pposg"]);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.lines().next().unwrap().contains("scale=0.1"));

    let out = dir.path().join("play");
    let o = pposg(&["play", "--config", path_str(&cfg), "--scale", "0.1", "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let matches = fs::read_to_string(out.join("matches.csv")).unwrap();
    assert_eq!(matches.lines().count(), 2 + 3);
    assert!(matches.starts_with("# ") && matches.lines().next().unwrap().contains("scale=0.1"));
}

#[test]
fn every_artifact_carries_build_config_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let manifest = |out: &Path| RunManifest {
        config_path: Some(cfg.clone()),
        out: out.to_path_buf(),
        seed: 11,
        scale: 1.0,
    };
    let run = Run::load(manifest(dir.path()), Vec::new()).unwrap();
    let fields = run.stamp.fields();
    assert!(fields.contains(&format!("config_hash={}", config_hash(&run.config))));
    assert!(fields.contains("seed=11"));
    assert!(fields.contains(&format!("build={}", pposg_cli::BUILD_ID)));

    for cmd in ["train", "eval", "solve", "play"] {
        let out = dir.path().join(cmd);
        let o = pposg(&[cmd, "--config", path_str(&cfg), "--seed", "11", "--out", path_str(&out)], &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        let mut files = Vec::new();
        let mut stack = vec![out.clone()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
        assert!(files.len() >= 3, "{cmd}: {files:?}");
        for f in files {
            let stamp = serde_json::to_value(&run.stamp).unwrap();
            let stamped = match f.extension().and_then(|x| x.to_str()) {
                Some("pposg") => Checkpoint::load(&f).unwrap().meta["stamp"] == stamp,
                Some("json") => serde_json::from_slice::<Value>(&fs::read(&f).unwrap()).unwrap()["stamp"] == stamp,
                _ => fs::read_to_string(&f).unwrap().contains(&fields),
            };
            assert!(stamped, "{} lacks the stamp", f.display());
        }
    }
}

#[test]
fn report_reproduces_the_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let eval = dir.path().join("eval");
    let o = pposg(&["eval", "--config", path_str(&cfg), "--out", path_str(&eval)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = eval.join("table.json");
    let rep = dir.path().join("report");
    let o = pposg(
        &["report", "--config", path_str(&cfg), "--table", path_str(&table), "--out", path_str(&rep)],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.md", "report.csv"] {
        assert_eq!(fs::read(eval.join(f)).unwrap(), fs::read(rep.join(f)).unwrap(), "{f}");
    }
    let md = fs::read_to_string(rep.join("report.md")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), md);
    assert!(md.contains("| random_walk |"));
    let csv = fs::read_to_string(eval.join("report.csv")).unwrap();
    // Two pursuers against three evaders.
    assert_eq!(csv.lines().count(), 2 + 6);
}

#[test]
fn tournament_picks_from_training_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let train = dir.path().join("train");
    let o = pposg(&["train", "--config", path_str(&cfg), "--out", path_str(&train)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckdir = train.join("checkpoints");
    let out = dir.path().join("eval");
    let o = pposg(
        &["eval", "--config", path_str(&cfg), "--out", path_str(&out)],
        &[
            ("PPOSG_EVAL__TOURNAMENT__CHECKPOINTS", &json!([ckdir]).to_string()),
            ("PPOSG_EVAL__TOURNAMENT__OPPONENTS", "3"),
            ("PPOSG_EVAL__TOURNAMENT__EPISODES_PER_PAIR", "2"),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: Value = serde_json::from_slice(&fs::read(out.join("tournament.json")).unwrap()).unwrap();
    let best = t["body"]["best_pursuer"].as_str().unwrap();
    assert!(best.contains("policy_0000"), "{best}");
    assert_eq!(t["body"]["result"]["pursuer_scores"].as_array().unwrap().len(), 4);
}

#[test]
fn solve_writes_value_grid_and_slice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let out = dir.path().join("solve");
    let o = pposg(&["solve", "--config", path_str(&cfg), "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let grid: Value = serde_json::from_slice(&fs::read(out.join("grid.json")).unwrap()).unwrap();
    assert_eq!(grid["body"]["monotonicity_violations"], 0);
    assert_eq!(grid["body"]["converged"], true);
    let ck = Checkpoint::load(out.join("value.pposg")).unwrap();
    assert_eq!(ck.get("value").unwrap().shape(), &[61]);
    let slice = fs::read_to_string(out.join("slice.csv")).unwrap();
    assert_eq!(slice.lines().nth(1), Some("x,value"));
    // Gap 2 m closes at 1 m/s after the 0.5 m radius: 1.5 s.
    let row = slice.lines().find(|l| l.starts_with("2.000000,")).unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 1.5).abs() <= 0.1 + 1e-9, "{v}");
}

#[test]
fn play_logs_readable_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config_file(dir.path());
    let out = dir.path().join("play");
    let o = pposg(&["play", "--config", path_str(&cfg), "--seed", "2", "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let matches = fs::read_to_string(out.join("matches.csv")).unwrap();
    let rows: Vec<&str> = matches.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        let steps: usize = cols[6].parse().unwrap();
        let f = fs::File::open(out.join(format!("trajectories/episode_{k:05}.jsonl"))).unwrap();
        let recs = pposg_core::sim::read_trajectory(std::io::BufReader::new(f)).unwrap();
        assert_eq!(recs.len(), steps);
        assert_eq!(recs.last().unwrap().terminal.is_some(), true);
        assert_eq!(cols[5], if cols[4] == "pursuer" { "capture" } else { "timeout" });
    }
}

#[test]
fn serve_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let arena = dir.path().join("arena.json");
    fs::write(&arena, serde_json::to_string(&EnvConfig::point_mass_duel()).unwrap()).unwrap();
    let run = Run::load(
        RunManifest {
            config_path: None,
            out: dir.path().into(),
            seed: 9,
            scale: 1.0,
        },
        Vec::new(),
    )
    .unwrap();
    let (bind, opts) = serve_options(&run, &ServeFlags::default()).unwrap();
    assert_eq!(bind, "127.0.0.1:8765");
    assert_eq!(opts.tick.as_millis(), 100);
    assert_eq!(opts.setup.seed, 9);
    assert!(opts.setup.belief_overlay);

    let flags = ServeFlags {
        bind: Some("0.0.0.0:1".into()),
        checkpoint: Some("model.pposg".into()),
        arena_config: Some(arena),
        belief_overlay: Some(false),
    };
    let (bind, opts) = serve_options(&run, &flags).unwrap();
    assert_eq!(bind, "0.0.0.0:1");
    assert_eq!(opts.setup.arena, EnvConfig::point_mass_duel());
    assert!(!opts.setup.belief_overlay);
    assert!(matches!(opts.setup.pursuer, PolicySpec::Learned { ref path, .. } if path == Path::new("model.pposg")));

    let o = pposg(&["serve", "--checkpoint", "/nonexistent/policy.pposg", "--bind", "127.0.0.1:0"], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let bad_arena = dir.path().join("bad.json");
    fs::write(&bad_arena, r#"{"dt": 0.1}"#).unwrap();
    let o = pposg(&["serve", "--arena-config", path_str(&bad_arena), "--bind", "127.0.0.1:0"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("arena.bounds"), "{}", stderr(&o));
}

#[test]
fn failures_map_to_exit_codes() {
    let codes = [
        (pposg_core::Error::Config("x".into()), 2),
        (pposg_core::Error::Contract("x".into()), 2),
        (pposg_core::Error::Numeric("x".into()), 3),
        (pposg_core::Error::NonFinite("x".into()), 3),
        (pposg_core::Error::Io(std::io::Error::other("x")), 4),
    ];
    for (e, code) in codes {
        assert_eq!(CliError::from(e).exit_code(), code);
    }
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let o = pposg(&["solve", "--out", path_str(&out)], &[("PPOSG_SOLVE__AXES", "[]")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let cfg = small_config_file(dir.path());
    let o = pposg(&["play", "--config", path_str(&cfg), "--out", path_str(&out)], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
