#![allow(dead_code)]

use hgt::RunConfig;
use hgt_core::dataset::{synth_generate, SynthOutput, SynthSpec};
use hgt_core::model::{ModelConfig, PredictorKind};
use hgt_core::train::{SeedSource, TrainConfig};

pub fn small_synth(depth: usize, seed: u64) -> SynthOutput {
    let spec = SynthSpec { n_entities: 40, n_relations: 3, depth, n_questions: 30, branching: 2, seed };
    synth_generate(&spec).unwrap()
}

/// A model small enough to train for a few epochs in well under a second.
pub fn tiny_config(depth: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        w: 8,
        d: 8,
        d_v: 8,
        heads: 2,
        n_guided_blocks: 1,
        n_self_blocks: 1,
        predictor: PredictorKind::Similarity,
        ..ModelConfig::default()
    };
    cfg.train = TrainConfig { lr_initial: 1e-3, lr_final: 1e-4, batch_size: 4, epochs: 3, ..TrainConfig::default() };
    cfg.task.hypergraph.n_hops = depth;
    cfg.task.seed_source = SeedSource::Oracle;
    cfg
}
