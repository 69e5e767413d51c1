use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stm_cli::commands;
use stm_cli::config::{Overrides, RunConfig};
use stm_cli::context::RunContext;
use stm_cli::logging::{self, Level};

#[derive(Parser)]
#[command(
    name = "stm",
    version,
    about = "Spatio-temporal mapping pipeline: partition a city, build a region graph \
             dataset from event logs, and train/evaluate a GCN occurrence predictor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Training seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log verbosity; STM_LOG_LEVEL is used when the flag is absent.
    #[arg(long, global = true, value_enum)]
    log_level: Option<LevelArg>,
}

#[derive(Copy, Clone, ValueEnum)]
enum LevelArg {
    Error,
    Warn,
    Info,
    Debug,
}

impl LevelArg {
    fn as_str(self) -> &'static str {
        match self {
            LevelArg::Error => "error",
            LevelArg::Warn => "warn",
            LevelArg::Info => "info",
            LevelArg::Debug => "debug",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Partition the city extent into regions and export them as GeoJSON.
    Partition,
    /// Assign events, aggregate POI features, and build the graph dataset.
    Build,
    /// Train the GCN predictor on the built dataset.
    Train,
    /// Evaluate the trained checkpoint on the test split.
    Evaluate,
    /// Re-export region and heatmap GeoJSON from existing artifacts.
    Export,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config_path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let flag_level = cli.log_level.map(|l| l.as_str().to_string());
    let overrides = Overrides {
        output: cli.output,
        seed: cli.seed,
        log_level: flag_level.clone().or_else(|| std::env::var("STM_LOG_LEVEL").ok()),
    };
    let cfg = RunConfig::load(&config_path, &overrides)?;
    let level = Level::parse(&cfg.log_level)
        .ok_or_else(|| anyhow::anyhow!("unknown log level {:?}", cfg.log_level))?;
    logging::set_level(level);

    let ctx = RunContext::new(cfg);
    match cli.command {
        Command::Partition => commands::cmd_partition(ctx),
        Command::Build => commands::cmd_build(ctx),
        Command::Train => commands::cmd_train(ctx),
        Command::Evaluate => commands::cmd_evaluate(ctx),
        Command::Export => commands::cmd_export(ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
