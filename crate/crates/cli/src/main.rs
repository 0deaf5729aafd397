mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use limp_core::a2i::PromptVariant;
use limp_predictor::{IntentMode, PredictorConfig};

use crate::config::{BackendKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "limp", version, about = "Intent-aware next-POI pipeline")]
struct Cli {
    /// TOML config, or a manifest JSON from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Stay records to read instead of `<out>/data/stays.csv`.
    #[arg(long, global = true)]
    stays: Option<PathBuf>,
    /// Ground-truth labels CSV.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Compact,
    Toy,
}

impl Preset {
    fn config(self) -> PredictorConfig {
        match self {
            Preset::Default => PredictorConfig::default(),
            Preset::Compact => PredictorConfig::compact(),
            Preset::Toy => PredictorConfig::toy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Grid {
    Model,
    Prompt,
}

#[derive(Debug, clap::Args)]
struct PredictorArgs {
    /// Replaces the whole predictor section with a preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world and its labeled stays.
    Synth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        pois: Option<usize>,
    },
    /// Intent and per-user POI statistics.
    Stats,
    /// Label every stay with an intent.
    Annotate {
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        variant: Option<PromptVariant>,
        /// Add the noise profile to the mock backend.
        #[arg(long)]
        noisy: bool,
    },
    /// Write instruction-tuning JSONL for both tasks.
    ExportFinetune {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Precompute per-user intent probability tables.
    IntentProbs,
    /// Train one predictor.
    Train {
        #[arg(long, default_value = "weighted")]
        intent_mode: IntentMode,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Score annotations against ground truth and checkpoints on the test split.
    Evaluate {
        /// Checkpoints to score; defaults to every one under `<out>/checkpoints`.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Run an ablation grid.
    Ablate {
        #[arg(long, value_enum)]
        grid: Grid,
        /// Model grid: modes to train, comma separated.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<IntentMode>,
        /// Prompt grid: variants to run, comma separated.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<PromptVariant>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Prompt grid: add the noise profile to the mock backend.
        #[arg(long)]
        noisy: bool,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Render tables and figures from earlier results.
    Report,
}

fn apply_predictor(cfg: &mut RunConfig, args: &PredictorArgs) {
    if let Some(p) = args.preset {
        cfg.predictor = p.config();
    }
    if let Some(e) = args.epochs {
        cfg.predictor.epochs = e;
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &cli.stays {
        cfg.data.stays = Some(s.clone());
    }
    if let Some(l) = &cli.labels {
        cfg.data.labels = Some(l.clone());
    }
    match &cli.command {
        Command::Synth { users, days, pois } => {
            if let Some(u) = users {
                cfg.data.users = *u;
            }
            if let Some(d) = days {
                cfg.data.days = *d;
            }
            if let Some(p) = pois {
                cfg.data.pois = *p;
            }
        }
        Command::Annotate { backend, variant, noisy } => {
            if let Some(b) = backend {
                cfg.annotation.backend = *b;
            }
            if let Some(v) = variant {
                cfg.annotation.variant = *v;
            }
            cfg.annotation.noisy_mock |= noisy;
        }
        Command::ExportFinetune { users, fraction } => {
            if let Some(u) = users {
                cfg.finetune.users = *u;
            }
            if let Some(f) = fraction {
                cfg.finetune.fraction = *f;
            }
        }
        Command::Train { predictor, .. } => apply_predictor(&mut cfg, predictor),
        Command::Ablate {
            predictor, backend, noisy, ..
        } => {
            apply_predictor(&mut cfg, predictor);
            cfg.annotation.noisy_mock |= noisy;
            if let Some(b) = backend {
                cfg.annotation.backend = *b;
            }
        }
        Command::Stats | Command::IntentProbs | Command::Evaluate { .. } | Command::Report => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Stats => commands::stats(&cfg),
        Command::Annotate { .. } => commands::annotate(&cfg),
        Command::ExportFinetune { .. } => commands::export_finetune(&cfg),
        Command::IntentProbs => commands::intent_probs(&cfg),
        Command::Train { intent_mode, .. } => commands::train(&cfg, intent_mode),
        Command::Evaluate { checkpoint } => commands::evaluate(&cfg, &checkpoint),
        Command::Ablate {
            grid, modes, variants, ..
        } => match grid {
            Grid::Model => commands::ablate_model(&cfg, &modes),
            Grid::Prompt => commands::ablate_prompt(&cfg, &variants),
        },
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // Usage errors exit with 2, help and version with 0.
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
