//! Weakly-supervised training and evaluation from question/answer pairs.

mod experiment;
mod fit;
mod task;

pub use experiment::{ablate, mean_accuracy, run_experiment, AblationRow, ExperimentConfig, ExperimentResult};
pub use fit::{evaluate, example_loss_and_grads, finish_report, gold_attention_hit, predict, predict_traced, score_examples, train_loop, EpochReport, EvalReport, NoopObserver, Prediction, TrainObserver, TrainOutcome};
pub use task::{build_vocab, prepare_examples, question_hypergraph, AnswerSpace, Example, Prepared, SeedSource, TaskConfig};

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetError;
use crate::hypergraph::WalkError;
use crate::kb::KbError;
use crate::model::ModelError;
use crate::tensor::AdamConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(&'static str),
    #[error("split ratios must be non-negative and sum to 1")]
    Ratios,
    #[error("{have} items cannot fill {need} splits")]
    TooFew { have: usize, need: usize },
    #[error("qid {0} appears in more than one split")]
    Leakage(String),
    #[error("no trainable questions")]
    NoTrainingData,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_initial: f64,
    /// Learning rate of the last epoch; decay is linear per epoch.
    pub lr_final: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation accuracy@1 gain.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub split: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: 1e-4,
            lr_final: 1e-5,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            patience: None,
            adam: AdamConfig::default(),
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(TrainError::Config("learning rates must satisfy 0 < lr_final <= lr_initial"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::Config("batch_size and epochs must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_initial;
        }
        let t = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.lr_initial + (self.lr_final - self.lr_initial) * t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by contiguous cuts of sizes `round(r0 n)`,
/// `round(r1 n)` and the remainder.
pub fn split_dataset<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Splits<T>, TrainError> {
    if ratios.iter().any(|&r| r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::Ratios);
    }
    let n = items.len();
    if n < 3 {
        return Err(TrainError::TooFew { have: n, need: 3 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (libm::round(ratios[0] * n as f64) as usize).min(n);
    let n_val = (libm::round(ratios[1] * n as f64) as usize).min(n - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect();
    Ok(Splits {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Accuracy over a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub accuracy_at_1: f64,
    pub accuracy_at_3: f64,
    pub evaluated: usize,
    /// Questions that could not be encoded (no knowledge hyperedges); scored as wrong.
    pub skipped: usize,
}

impl Metrics {
    pub fn from_predictions(preds: &[Prediction]) -> Self {
        let n = preds.len();
        let hits1 = preds.iter().filter(|p| p.correct).count();
        let hits3 = preds.iter().filter(|p| p.top.iter().take(3).any(|&a| a == p.gold)).count();
        let skipped = preds.iter().filter(|p| p.top.is_empty()).count();
        let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
        Self { accuracy_at_1: frac(hits1), accuracy_at_3: frac(hits3), evaluated: n, skipped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn split_sizes_and_partition() {
        let items: Vec<u32> = (0..10).collect();
        let s = split_dataset(&items, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        let all: BTreeSet<u32> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        assert_eq!(all.len(), 10);
        assert_eq!(s, split_dataset(&items, [0.8, 0.1, 0.1], 3).unwrap());
    }

    #[test]
    fn split_errors() {
        assert_eq!(split_dataset(&[1, 2], [0.8, 0.1, 0.1], 0), Err(TrainError::TooFew { have: 2, need: 3 }));
        assert_eq!(split_dataset(&[1, 2, 3], [0.8, 0.1, 0.2], 0), Err(TrainError::Ratios));
    }

    #[test]
    fn linear_lr_decay() {
        let c = TrainConfig { epochs: 10, ..Default::default() };
        assert_eq!(c.learning_rate(0), 1e-4);
        assert!((c.learning_rate(9) - 1e-5).abs() < 1e-18);
        assert!(c.learning_rate(4) < 1e-4 && c.learning_rate(4) > 1e-5);
    }
}
