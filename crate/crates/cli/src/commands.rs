//! Subcommands. Each wraps one library entry point and writes stamped
//! artifacts under the run's output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use pposg_arena::{ServerOptions, SessionSetup};
use pposg_core::dp::value_iteration_observed;
use pposg_core::eval::{
    capture_stats, emit_report, evaluate, policy_seeds, run_episode, tournament, Entrant, MatchTable, Method,
    PolicySource, Protocol, SpecSource,
};
use pposg_core::marl::{DirSink, TrainSummary, Trainer};
use pposg_core::policies::PolicySpec;
use pposg_core::sim::{Env, EnvConfig, Role, TrajectoryWriter};
use pposg_core::stamp::{derive_seed, Stamp};
use pposg_nn::Checkpoint;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, scaled, Config, MethodConfig};
use crate::error::CliError;

/// Build id compiled into the binary.
pub const BUILD_ID: &str = env!("PPOSG_BUILD_ID");

/// Where a run reads its configuration and writes its artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Budget multiplier for reduced runs.
    pub scale: f64,
}

pub struct Run {
    pub manifest: RunManifest,
    pub config: Config,
    pub stamp: Stamp,
}

impl Run {
    /// Loads the configuration with the given `PPOSG_*` variables applied.
    pub fn load(
        manifest: RunManifest,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CliError> {
        if !(manifest.scale > 0.0 && manifest.scale.is_finite()) {
            return Err(CliError::Config(format!("--scale must be positive, got {}", manifest.scale)));
        }
        let config = config::load(manifest.config_path.as_deref(), vars)?;
        let stamp = Stamp {
            build: BUILD_ID.into(),
            config_hash: config::config_hash(&config),
            seed: manifest.seed,
            scale: manifest.scale,
        };
        Ok(Self {
            manifest,
            config,
            stamp,
        })
    }

    /// Creates the output directory and records the resolved configuration.
    pub fn prepare(&self, command: &str) -> Result<&Path, CliError> {
        let out = &self.manifest.out;
        fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
        let manifest = json!({
            "command": command,
            "stamp": self.stamp,
            "config_path": self.manifest.config_path,
            "config": self.config,
        });
        write_json(&out.join("manifest.json"), &manifest)?;
        Ok(out)
    }

    fn stamped<T: Serialize>(&self, body: T) -> Value {
        json!({"stamp": self.stamp, "body": body})
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Serialized name of a unit enum value.
fn name(v: &impl Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub fn train(run: &Run, resume: Option<&Path>) -> Result<TrainSummary, CliError> {
    let out = run.prepare("train")?;
    let mut trainer = match resume {
        Some(path) => {
            let t = Trainer::from_state(&Checkpoint::load(path)?)?;
            log::info!("resuming at {} completed episodes", t.completed());
            t
        }
        None => Trainer::new(
            run.config.env.clone(),
            run.config.train.scaled(run.manifest.scale),
            run.manifest.seed,
        )?
        .with_stamp(run.stamp.clone()),
    };
    let mut sink = DirSink::create(out, Some(&run.stamp), false, resume.is_some())?;
    let summary = trainer.run(&mut sink)?;
    write_json(&out.join("summary.json"), &run.stamped(&summary))?;
    Ok(summary)
}

fn methods(list: &[MethodConfig], env: &EnvConfig) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::with_capacity(list.len());
    for m in list {
        if m.models.is_empty() {
            return Err(CliError::Config(format!("method `{}` lists no models", m.label)));
        }
        let mut models: Vec<Box<dyn PolicySource>> = Vec::with_capacity(m.models.len());
        for spec in &m.models {
            models.push(Box::new(SpecSource::new(spec.clone(), env)?.with_label(&m.label)));
        }
        out.push(Method {
            label: m.label.clone(),
            models,
        });
    }
    Ok(out)
}

fn write_report(run: &Run, out: &Path, table: &MatchTable) -> Result<(), CliError> {
    let mut csv = create(&out.join("report.csv"))?;
    let mut md = create(&out.join("report.md"))?;
    emit_report(table, Some(&run.stamp), &mut csv, &mut md)?;
    csv.flush()?;
    md.flush()?;
    Ok(())
}

/// Policy files named directly or found as `policy_*.pposg` in directories.
fn checkpoint_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let n = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    n.starts_with("policy_") && n.ends_with(".pposg")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Config("tournament found no checkpoints".into()));
    }
    Ok(files)
}

pub fn eval(run: &Run) -> Result<MatchTable, CliError> {
    let out = run.prepare("eval")?;
    let env = &run.config.env;
    let ev = &run.config.eval;
    let protocol = Protocol {
        seed: run.manifest.seed,
        ..ev.protocol.scaled(run.manifest.scale)
    };
    let table = evaluate(&methods(&ev.pursuers, env)?, &methods(&ev.evaders, env)?, env, &protocol)?;
    write_json(&out.join("table.json"), &run.stamped(&table))?;
    write_report(run, out, &table)?;

    if let Some(spec) = &ev.tournament {
        let files = checkpoint_files(&spec.checkpoints)?;
        let mut entrants = Vec::with_capacity(files.len());
        for f in &files {
            let episode = Checkpoint::load(f)?.meta["episode"].as_u64().unwrap_or(0);
            let source = SpecSource::new(
                PolicySpec::Learned {
                    path: f.clone(),
                    mixed_rule: Default::default(),
                },
                env,
            )?;
            entrants.push(Entrant {
                label: f.display().to_string(),
                episode,
                source: Box::new(source),
            });
        }
        let result = tournament(&entrants, env, &spec.config(run.manifest.seed, run.manifest.scale))?;
        let body = json!({
            "best_pursuer": files[result.best_pursuer],
            "best_evader": files[result.best_evader],
            "result": result,
        });
        write_json(&out.join("tournament.json"), &run.stamped(body))?;
    }
    Ok(table)
}

/// Re-emits the report of a `table.json` written by `eval`.
pub fn report(run: &Run, table_path: &Path) -> Result<MatchTable, CliError> {
    let value = config::read_json(table_path)?;
    let table: MatchTable = config::from_value(value["body"].clone(), "table.body")?;
    let out = run.prepare("report")?;
    write_report(run, out, &table)?;
    Ok(table)
}

pub fn solve(run: &Run) -> Result<(), CliError> {
    let out = run.prepare("solve")?;
    let mut rises = 0usize;
    let vg = value_iteration_observed(&run.config.solve, &mut |it, rise| {
        if rise > 0.0 {
            rises += 1;
            log::warn!("sweep {it} raised a value by {rise}");
        }
    })?;
    let mut ck = vg.to_checkpoint()?;
    ck.meta["stamp"] = serde_json::to_value(&run.stamp).expect("stamp serializes");
    ck.save(out.join("value.pposg"))?;
    let body = json!({
        "grid": vg.grid,
        "iterations": vg.iterations,
        "converged": vg.converged,
        "last_change": vg.last_change,
        "minmax_gap": vg.minmax_gap(),
        "monotonicity_violations": rises,
    });
    write_json(&out.join("grid.json"), &run.stamped(body))?;
    let mut csv = create(&out.join("slice.csv"))?;
    writeln!(csv, "{}", run.stamp.comment())?;
    vg.write_csv(&mut csv, false)?;
    csv.flush()?;
    log::info!("{} sweeps, converged {}", vg.iterations, vg.converged);
    Ok(())
}

pub fn play(run: &Run) -> Result<(), CliError> {
    let out = run.prepare("play")?;
    let env_cfg = &run.config.env;
    let pc = &run.config.play;
    let pursuer = SpecSource::new(pc.pursuer.clone(), env_cfg)?;
    let evader = SpecSource::new(pc.evader.clone(), env_cfg)?;
    let episodes = scaled(pc.episodes, run.manifest.scale);
    if pc.trajectories {
        fs::create_dir_all(out.join("trajectories"))?;
    }
    let mut csv = create(&out.join("matches.csv"))?;
    writeln!(csv, "{}", run.stamp.comment())?;
    writeln!(csv, "episode,seed,pursuer,evader,winner,cause,steps,limit")?;
    let mut results = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let seed = derive_seed(run.manifest.seed, &[k as u64]);
        let [sp, se] = policy_seeds(seed);
        let mut p = pursuer.make(Role::Pursuer, sp)?;
        let mut e = evader.make(Role::Evader, se)?;
        p.reset(sp);
        e.reset(se);
        let mut env = Env::new(env_cfg.clone(), seed)?;
        let result = if pc.trajectories {
            let path = out.join("trajectories").join(format!("episode_{k:05}.jsonl"));
            let mut file = create(&path)?;
            writeln!(file, "{}", run.stamp.comment())?;
            let mut w = TrajectoryWriter::new(file);
            let r = run_episode(&mut env, p.as_mut(), e.as_mut(), seed, &mut |rec| w.write(rec))?;
            w.into_inner().flush()?;
            r
        } else {
            run_episode(&mut env, p.as_mut(), e.as_mut(), seed, &mut |_| Ok(()))?
        };
        writeln!(
            csv,
            "{k},{seed},{},{},{},{},{},{}",
            pursuer.label(),
            evader.label(),
            name(&result.winner),
            name(&result.cause),
            result.steps,
            result.limit
        )?;
        results.push(result);
    }
    csv.flush()?;
    let stats = capture_stats(&results, run.config.eval.protocol.timeout_rule);
    write_json(&out.join("summary.json"), &run.stamped(&stats))?;
    log::info!("capture rate {:.3} over {} episodes", stats.rate, stats.episodes);
    Ok(())
}

/// Command-line overrides of the `serve` section.
#[derive(Clone, Debug, Default)]
pub struct ServeFlags {
    pub bind: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub arena_config: Option<PathBuf>,
    pub belief_overlay: Option<bool>,
}

pub fn serve_options(run: &Run, flags: &ServeFlags) -> Result<(String, ServerOptions), CliError> {
    let sc = &run.config.serve;
    let arena = match &flags.arena_config {
        Some(p) => {
            let arena: EnvConfig = config::from_value(config::read_json(p)?, "arena")?;
            arena.validate()?;
            arena
        }
        None => run.config.env.clone(),
    };
    let pursuer = match &flags.checkpoint {
        Some(path) => PolicySpec::Learned {
            path: path.clone(),
            mixed_rule: Default::default(),
        },
        None => sc.pursuer.clone(),
    };
    if sc.tick_ms == 0 {
        return Err(CliError::Config("serve.tick_ms must be positive".into()));
    }
    let options = ServerOptions {
        setup: SessionSetup {
            arena,
            pursuer,
            belief_overlay: flags.belief_overlay.unwrap_or(sc.belief_overlay),
            seed: run.manifest.seed,
        },
        tick: Duration::from_millis(sc.tick_ms),
    };
    Ok((flags.bind.clone().unwrap_or_else(|| sc.bind.clone()), options))
}

pub fn serve(run: &Run, flags: &ServeFlags) -> Result<(), CliError> {
    let (bind, options) = serve_options(run, flags)?;
    // Refuse a bad setup before taking the port.
    pposg_arena::router(options.clone()).map(drop).map_err(serve_error)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {bind}: {e}")))?;
        pposg_arena::serve(listener, options).await.map_err(serve_error)
    })
}

fn serve_error(e: pposg_arena::ServeError) -> CliError {
    match e {
        pposg_arena::ServeError::Session(e) => e.into(),
        pposg_arena::ServeError::Io(e) => e.into(),
    }
}
