//! `rtx`: generate synthetic worlds, train sources, run the two transfer
//! phases and the scratch baseline, sweep experiments, and print
//! diagnostics.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Paths;
use crate::config::{Format, Overrides, Settings};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rtx", version, about = "Representation transfer for over-parameterized linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a task ensemble with source, target and test datasets.
    Generate(Common),
    /// Fit one model per source dataset.
    TrainSources(Common),
    /// Build the dictionary and fit the target head on the first target set.
    Phase1(Common),
    /// Fine-tune the Phase-1 model on the second target set.
    Phase2(Common),
    /// Fit the pooled target data without transfer.
    Scratch(Common),
    /// Run the full trial sweep and write result tables.
    Experiment(Common),
    /// Report covariance, diversity, effective-rank and bound diagnostics.
    Diagnose(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Directory holding earlier artifacts; defaults to the output directory.
    #[arg(long, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Format of experiment result tables.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn init_logging(settings: &Settings) {
    let env = env_logger::Env::new().filter_or("RTX_LOG", &settings.log_level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn run(command: Command) -> Result<String, CliError> {
    let (name, common) = match &command {
        Command::Generate(c) => ("generate", c),
        Command::TrainSources(c) => ("train-sources", c),
        Command::Phase1(c) => ("phase1", c),
        Command::Phase2(c) => ("phase2", c),
        Command::Scratch(c) => ("scratch", c),
        Command::Experiment(c) => ("experiment", c),
        Command::Diagnose(c) => ("diagnose", c),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        threads: common.threads,
        format: common.format,
    };
    let settings = config::load(&common.config, &overrides)?;
    init_logging(&settings);
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    let paths = Paths {
        input: common.input.clone().unwrap_or_else(|| settings.out_dir.clone()),
        out: settings.out_dir.clone(),
    };
    if !paths.input.is_dir() && !matches!(command, Command::Generate(_) | Command::Experiment(_) | Command::Diagnose(_)) {
        return Err(CliError::io(format!("{}: input directory does not exist", paths.input.display())));
    }
    log::info!("{name}: config hash {}", settings.hash);
    let body = match command {
        Command::Generate(_) => commands::generate(&settings, &paths),
        Command::TrainSources(_) => commands::train_sources(&settings, &paths),
        Command::Phase1(_) => commands::phase1(&settings, &paths),
        Command::Phase2(_) => commands::phase2_cmd(&settings, &paths),
        Command::Scratch(_) => commands::scratch(&settings, &paths),
        Command::Experiment(_) => commands::experiment(&settings, &paths),
        Command::Diagnose(c) => commands::diagnose(&settings, &paths, c.input.is_some()),
    }?;
    Ok(format!("config_hash={}\n{body}", settings.hash))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.code())
        }
    }
}
