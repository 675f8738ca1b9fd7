use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgt_core::dataset::SynthSpec;
use hgt_core::model::{InputFormat, PredictorKind};
use serde_json::Value;

use crate::commands::{self, SplitName};
use crate::config::{Overrides, RunConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "hgt", version, about = "Hypergraph transformer for weakly-supervised multi-hop KBQA")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Predictor {
    Mlp,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Hyperedge,
    #[value(name = "word_unit")]
    WordUnit,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run config; flags below override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset bundle directory (kb.tsv, qa.jsonl, optional links.tsv and meta.json)
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    /// Word vectors, one `word v1 .. vw` per line
    #[arg(long, global = true)]
    pub vectors: Option<PathBuf>,
    /// Output directory for artifacts and manifest.json
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Maximum walk length in hops
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=3))]
    pub hops: Option<u64>,
    /// Largest question n-gram
    #[arg(long = "max-ngram", global = true, value_name = "N")]
    pub max_ngram: Option<usize>,
    /// Answer predictor
    #[arg(long, global = true)]
    pub predictor: Option<Predictor>,
    /// Sinusoidal positional embeddings
    #[arg(long = "pos-emb", global = true)]
    pub pos_emb: Option<Switch>,
    /// Keep only walks of exactly --hops triplets
    #[arg(long = "exact-hops", global = true)]
    pub exact_hops: bool,
    /// Add a reverse fact for every fact at load time
    #[arg(long = "add-inverse", global = true)]
    pub add_inverse: bool,
    /// Seed for splitting, initialization, shuffling and caps
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Maximum knowledge hyperedges per question
    #[arg(long, global = true, value_name = "N")]
    pub cap: Option<usize>,
    /// Input unit for both sides; word_unit turns positional embeddings on unless --pos-emb is given
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Scoring threads for eval
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Training epochs
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Knowledge base utilities
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Link question mentions to KB entities
    Link,
    /// Enumerate knowledge walks from entities or for every question of a bundle
    Walk {
        /// KB file for --from
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Start entity (repeatable)
        #[arg(long)]
        from: Vec<String>,
    },
    /// Generate a synthetic layered bundle
    Synth {
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 5)]
        relations: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 1000)]
        questions: usize,
        #[arg(long, default_value_t = 4)]
        branching: usize,
    },
    /// Train on a bundle and score its test split
    Train,
    /// Score a split with a saved checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Hyperedge versus word-unit inputs over the configured seeds
    Ablate,
    /// Export attention maps of a checkpoint as JSON lines and PGM heatmaps
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// Question id to trace (repeatable); default the first --limit questions
        #[arg(long)]
        qid: Vec<String>,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        /// Also write one PGM heatmap per matrix
        #[arg(long)]
        pgm: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Entity, relation and fact counts
    Stats {
        #[arg(long)]
        kb: PathBuf,
    },
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            hops: self.hops.map(|h| h as usize),
            max_ngram: self.max_ngram,
            predictor: self.predictor.map(|p| match p {
                Predictor::Mlp => PredictorKind::Mlp,
                Predictor::Sim => PredictorKind::Similarity,
            }),
            pos_emb: self.pos_emb.map(|s| s == Switch::On),
            exact_hops: self.exact_hops,
            add_inverse: self.add_inverse,
            seed: self.seed,
            cap: self.cap,
            mode: self.mode.map(|m| match m {
                Mode::Hyperedge => InputFormat::HYPEREDGE,
                Mode::WordUnit => InputFormat::WORD_UNIT,
            }),
            workers: self.workers,
            epochs: self.epochs,
        }
    }

    /// Config file (or defaults) with paths and flag overrides applied, validated.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (slot, flag) in [(&mut cfg.bundle, &self.bundle), (&mut cfg.vectors, &self.vectors), (&mut cfg.out_dir, &self.out)] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        self.overrides().apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<Value> {
    let cfg = cli.global.run_config()?;
    match &cli.command {
        Command::Kb { command: KbCommand::Stats { kb } } => commands::kb_stats(&cfg, kb),
        Command::Link => commands::link(&cfg),
        Command::Walk { kb, from } => commands::walk(&cfg, kb.as_deref(), from),
        Command::Synth { entities, relations, depth, questions, branching } => {
            let spec = SynthSpec {
                n_entities: *entities,
                n_relations: *relations,
                depth: *depth,
                n_questions: *questions,
                branching: *branching,
                seed: cli.global.seed.unwrap_or(0),
            };
            commands::synth(&cfg, &spec)
        }
        Command::Train => commands::train(&cfg),
        Command::Eval { checkpoint, split } => commands::eval(&cfg, checkpoint, *split),
        Command::Ablate => commands::ablate_cmd(&cfg),
        Command::Trace { checkpoint, split, qid, limit, pgm } => commands::trace(&cfg, checkpoint, *split, qid, *limit, *pgm),
    }
}
