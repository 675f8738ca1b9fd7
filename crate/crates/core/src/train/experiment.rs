use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::fit::{evaluate, train_loop, EvalReport, TrainObserver, TrainOutcome};
use super::task::{build_vocab, prepare_examples, AnswerSpace, Prepared, TaskConfig};
use super::{split_dataset, Splits, TrainConfig, TrainError};
use crate::dataset::DatasetBundle;
use crate::model::{build_embedding_table, EmbeddingCoverage, InputFormat, ModelConfig, ModelParams, PredictorKind, Vocab, WordVectors};

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: TaskConfig,
}

impl ExperimentConfig {
    /// Model config with row widths matching the task's walk depth and n-gram size.
    pub fn resolved_model(&self) -> ModelConfig {
        self.model.clone().with_widths(self.task.hypergraph.n_hops, self.task.hypergraph.max_n)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub vocab: Vocab,
    pub answers: AnswerSpace,
    pub coverage: EmbeddingCoverage,
    pub splits: Splits<String>,
    pub test: EvalReport,
    /// Prepared test split, kept for attention analysis.
    pub test_data: Prepared,
    pub skipped_train: usize,
}

fn assert_disjoint(splits: &Splits<String>) -> Result<(), TrainError> {
    let mut seen = BTreeSet::new();
    for q in splits.train.iter().chain(&splits.validation).chain(&splits.test) {
        if !seen.insert(q.as_str()) {
            return Err(TrainError::Leakage(q.clone()));
        }
    }
    Ok(())
}

/// Split, build vocabulary and embeddings, train, and score the test split.
/// The split uses `cfg.train.seed`.
pub fn run_experiment(
    bundle: &DatasetBundle,
    vectors: Option<&WordVectors>,
    cfg: &ExperimentConfig,
    observer: &mut dyn TrainObserver,
) -> Result<ExperimentResult, TrainError> {
    let model_cfg = cfg.resolved_model();
    model_cfg.validate()?;
    cfg.train.validate()?;
    let parts = split_dataset(&bundle.pairs, cfg.train.split, cfg.train.seed)?;
    let splits = Splits {
        train: parts.train.iter().map(|p| p.qid.clone()).collect(),
        validation: parts.validation.iter().map(|p| p.qid.clone()).collect(),
        test: parts.test.iter().map(|p| p.qid.clone()).collect(),
    };
    assert_disjoint(&splits)?;

    let kb = &bundle.kb;
    let vocab = build_vocab(kb, &bundle.pairs);
    let answers = match model_cfg.predictor {
        PredictorKind::Mlp => AnswerSpace::from_pairs(kb, &parts.train),
        PredictorKind::Similarity => AnswerSpace::new(bundle.answer_vocab.clone()),
    };
    let (table, coverage) = build_embedding_table(&vocab, vectors, model_cfg.w, model_cfg.init_seed)?;
    let params = ModelParams::new(model_cfg.clone(), table, answers.candidate_rows(&vocab))?;

    let prep = |pairs| prepare_examples(kb, pairs, &vocab, &answers, &cfg.task, &model_cfg);
    let (train, validation, test) = (prep(&parts.train)?, prep(&parts.validation)?, prep(&parts.test)?);
    let outcome = train_loop(params, &train, &validation, &answers, &cfg.train, observer)?;
    let report = evaluate(&outcome.params, &test, &answers)?;
    Ok(ExperimentResult {
        outcome,
        coverage,
        splits,
        test: report,
        test_data: test,
        skipped_train: train.skipped.len(),
        vocab,
        answers,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationRow {
    pub input: InputFormat,
    pub seed: u64,
    pub accuracy_at_1: f64,
    pub accuracy_at_3: f64,
}

/// Train once per (input format, seed) with an otherwise identical config.
/// Each seed drives the split, initialization and shuffling. Word-unit
/// inputs always run with positional embeddings.
pub fn ablate(
    bundle: &DatasetBundle,
    vectors: Option<&WordVectors>,
    base: &ExperimentConfig,
    inputs: &[InputFormat],
    seeds: &[u64],
    observer: &mut dyn TrainObserver,
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::with_capacity(inputs.len() * seeds.len());
    for &input in inputs {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.model.input = input;
            // Word rows carry no order of their own, so they always get position codes.
            if input.has_word_units() {
                cfg.model.positional_embeddings = true;
            }
            cfg.model.init_seed = seed;
            cfg.train.seed = seed;
            let m = run_experiment(bundle, vectors, &cfg, observer)?.test.metrics;
            rows.push(AblationRow { input, seed, accuracy_at_1: m.accuracy_at_1, accuracy_at_3: m.accuracy_at_3 });
        }
    }
    Ok(rows)
}

/// Mean accuracy@1 of the rows with the given input format.
pub fn mean_accuracy(rows: &[AblationRow], input: InputFormat) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| r.input == input).map(|r| r.accuracy_at_1).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
