use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pposg_cli::{commands, CliError, Run, RunManifest, ServeFlags};

/// Pursuit-evasion training, evaluation and live play.
#[derive(Parser)]
#[command(version = pposg_cli::BUILD_ID)]
struct Cli {
    /// JSON configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: runs/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Multiplies episode budgets.
    #[arg(long, global = true, default_value_t = 1.0)]
    scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train pursuer and evader with MADDPG.
    Train {
        /// Continue from a state checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate pursuers against evaders and run the checkpoint tournament.
    Eval,
    /// Solve the fully observable grid game by value iteration.
    Solve,
    /// Play seeded headless matches and log trajectories.
    Play,
    /// Run the real-time arena server.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        /// Learned pursuer checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Arena (environment) configuration JSON.
        #[arg(long)]
        arena_config: Option<PathBuf>,
        #[arg(long)]
        belief_overlay: Option<bool>,
    },
    /// Rewrite the report of an evaluation table.
    Report {
        /// `table.json` written by eval.
        #[arg(long)]
        table: PathBuf,
    },
    /// Print the resolved configuration.
    Config,
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Train { .. } => "train",
        Command::Eval => "eval",
        Command::Solve => "solve",
        Command::Play => "play",
        Command::Serve { .. } => "serve",
        Command::Report { .. } => "report",
        Command::Config => "config",
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = RunManifest {
        config_path: cli.config,
        out: cli.out.unwrap_or_else(|| PathBuf::from("runs").join(name(&cli.command))),
        seed: cli.seed,
        scale: cli.scale,
    };
    let run = Run::load(manifest, std::env::vars())?;
    match cli.command {
        Command::Train { resume } => {
            let s = commands::train(&run, resume.as_deref())?;
            println!("completed {} episodes in {} steps, {} updates", s.completed, s.steps, s.updates);
        }
        Command::Eval => {
            commands::eval(&run)?;
            println!("wrote {}", run.manifest.out.display());
        }
        Command::Solve => {
            commands::solve(&run)?;
            println!("wrote {}", run.manifest.out.display());
        }
        Command::Play => {
            commands::play(&run)?;
            println!("wrote {}", run.manifest.out.display());
        }
        Command::Serve {
            bind,
            checkpoint,
            arena_config,
            belief_overlay,
        } => {
            let flags = ServeFlags {
                bind,
                checkpoint,
                arena_config,
                belief_overlay,
            };
            commands::serve(&run, &flags)?;
        }
        Command::Report { table } => {
            commands::report(&run, &table)?;
            let md = std::fs::read_to_string(run.manifest.out.join("report.md"))?;
            print!("{md}");
        }
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&run.config).expect("config serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
