//! `hycomm` command line: generate scenarios, run sweeps, replay one trial.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hycomm_core::experiment::{replay, sweep_csv, sweep_svg, ConfigError};
use hycomm_core::scenario::generate_world;
use hycomm_core::strategies::{sample_seed, world_seed};
use hycomm_core::{run_trial_matrix, ExperimentConfig, Scenario, StrategyId, WorldConfig};

#[derive(Parser)]
#[command(name = "hycomm", version, about = "Hybrid box and point collaboration simulator")]
struct Cli {
    /// Print the default experiment config as JSON and exit.
    #[arg(long)]
    print_default_config: bool,

    /// Worker threads for trial execution (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario of trial 0 as a JSON fixture.
    Gen {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run every (strategy, budget) pair over all trials and write a CSV.
    Sweep {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Also write a trade-off plot.
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
    /// Run one strategy on a scenario fixture and dump the result as JSON.
    Replay {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
        #[arg(long)]
        strategy: String,
        /// Per-link budget in 32-bit values.
        #[arg(long)]
        budget: u64,
        /// Point sampling seed; defaults to the one trial 0 of a sweep uses.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Ok(seed) = std::env::var("HYCOMM_SEED") {
        cfg.master_seed = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("HYCOMM_SEED must be an unsigned integer, got {seed:?}")))?;
    }
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.print_default_config {
        println!("{}", ExperimentConfig::default().to_json());
        return Ok(());
    }
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    let Some(command) = cli.command else {
        return Err(Failure::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Gen { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let world = WorldConfig { seed: world_seed(cfg.master_seed, 0), ..cfg.world.clone() };
            let scenario = generate_world(&world, &cfg.sensor).map_err(runtime)?;
            write(&out, &scenario.to_json())
        }
        Command::Sweep { config, out, svg } => {
            let cfg = load_config(config.as_deref())?;
            let result = run_trial_matrix(&cfg.matrix_spec()).map_err(runtime)?;
            write(&out, &sweep_csv(&result))?;
            if let Some(svg) = svg {
                write(&svg, &sweep_svg(&result))?;
            }
            Ok(())
        }
        Command::Replay { scenario, strategy, budget, seed, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let strategy: StrategyId = strategy.parse().map_err(|e| Failure::Config(format!("{e}")))?;
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| Failure::Runtime(format!("cannot read scenario {}: {e}", scenario.display())))?;
            let fixture = Scenario::from_json(&text)
                .map_err(|e| Failure::Runtime(format!("invalid scenario {}: {e}", scenario.display())))?;
            let seed = seed.unwrap_or_else(|| sample_seed(cfg.master_seed, budget, 0));
            let dump = replay(fixture, &cfg, strategy, budget, seed).map_err(runtime)?;
            let json = serde_json::to_string_pretty(&dump).map_err(runtime)?;
            match out {
                Some(path) => write(&path, &json),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
