//! `mawseo`: runs the experiment stages against a run directory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mawseo_eval::{ExperimentConfig, Pipeline, RunDir, Stage};

#[derive(Parser)]
#[command(name = "mawseo", version, about = "Wiki search-engine poisoning testbed: attack, defend, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Derives every seed in the config from this one number.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Corpus file (JSON lines) used instead of the synthetic generator.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Query file, one query per line, replacing the vocabulary queries.
    #[arg(long, global = true)]
    queries: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    SynthCorpus,
    Index,
    TrainTargetDetector,
    DistillRanker,
    TrainSubstituteDetector,
    TrainTagger,
    TrainRetrieval,
    Attack,
    DefendCoherence,
    DefendAdvTrain,
    Eval,
    Report,
    /// Every stage in order.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::SynthCorpus => Stage::SynthCorpus,
            Command::Index => Stage::Index,
            Command::TrainTargetDetector => Stage::TrainTargetDetector,
            Command::DistillRanker => Stage::DistillRanker,
            Command::TrainSubstituteDetector => Stage::TrainSubstituteDetector,
            Command::TrainTagger => Stage::TrainTagger,
            Command::TrainRetrieval => Stage::TrainRetrieval,
            Command::Attack => Stage::Attack,
            Command::DefendCoherence => Stage::DefendCoherence,
            Command::DefendAdvTrain => Stage::DefendAdvTrain,
            Command::Eval => Stage::Eval,
            Command::Report => Stage::Report,
            Command::All => return None,
        })
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.reseed(seed);
    }
    if let Some(p) = &cli.corpus {
        config.corpus.path = Some(p.clone());
    }
    if let Some(p) = &cli.queries {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        config.queries.list = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    let pipeline = Pipeline::new(RunDir::create(&cli.run_dir)?, config)?;
    match cli.command.stage() {
        Some(stage) => pipeline.run_stage(stage)?,
        None => pipeline.run_all()?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
