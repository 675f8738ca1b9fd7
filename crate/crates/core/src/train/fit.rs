use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::task::{AnswerSpace, Example, Prepared};
use super::{Metrics, TrainConfig, TrainError};
use crate::kb::EntityId;
use crate::hypergraph::find_walk;
use crate::kb::Triplet;
use crate::model::{encode, predict_logits, AttentionTrace, Direction, ForwardCtx, ModelError, ModelParams};
use crate::tensor::{AdamState, ParamGrads, Tape};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub gold: EntityId,
    /// Best candidates first, at most three; empty for skipped questions.
    pub top: Vec<EntityId>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub validation_accuracy: f64,
}

/// Hooks called by [`train_loop`]; the std side uses them for timing and logs.
pub trait TrainObserver {
    fn on_epoch(&mut self, _report: &EpochReport) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy@1 (latest on ties).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochReport>,
}

/// Cross-entropy of one example and its parameter gradients, accumulated into `grads`.
pub fn example_loss_and_grads(
    params: &ModelParams,
    ex: &Example,
    target: usize,
    ctx: &mut ForwardCtx,
    grads: &mut ParamGrads,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let enc = encode(&mut tape, params, &ex.question, &ex.knowledge, ctx)?;
    let logits = predict_logits(&mut tape, params, enc.z_q, enc.z_k)?;
    let loss = tape.cross_entropy_logits(logits, target)?;
    let value = tape.value(loss).get(0, 0);
    tape.backward(loss)?.accumulate_into(grads);
    Ok(value)
}

/// Answer logits in evaluation mode.
pub fn predict(params: &ModelParams, ex: &Example) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let enc = encode(&mut tape, params, &ex.question, &ex.knowledge, &mut ForwardCtx::eval())?;
    let logits = predict_logits(&mut tape, params, enc.z_q, enc.z_k)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Answer logits plus the recorded attention maps.
pub fn predict_traced(params: &ModelParams, ex: &Example) -> Result<(Vec<f64>, AttentionTrace), ModelError> {
    let mut tape = Tape::new();
    let enc = encode(&mut tape, params, &ex.question, &ex.knowledge, &mut ForwardCtx::traced())?;
    let logits = predict_logits(&mut tape, params, enc.z_q, enc.z_k)?;
    Ok((tape.value(logits).data().to_vec(), enc.trace))
}

/// Whether the knowledge hyperedge receiving the most question-to-knowledge
/// attention is the walk along `gold_path`. `None` when the gold walk is not
/// among the example's hyperedges or nothing was traced.
pub fn gold_attention_hit(ex: &Example, trace: &AttentionTrace, gold_path: &[Triplet]) -> Option<bool> {
    let gold = find_walk(&ex.hypergraph.knowledge_edges, gold_path)?;
    let mass = trace.column_mass(Direction::QuestionToKnowledge)?;
    let mask = trace.key_mask(Direction::QuestionToKnowledge)?;
    let best = (0..mass.len()).filter(|&j| mask[j]).max_by(|&a, &b| mass[a].total_cmp(&mass[b]).then(b.cmp(&a)))?;
    Some(best == gold)
}

fn top_k(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Top-3 predictions for each example, in order.
pub fn score_examples(params: &ModelParams, examples: &[Example], answers: &AnswerSpace) -> Result<Vec<Prediction>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let logits = predict(params, ex)?;
        let top: Vec<EntityId> = top_k(&logits, 3).into_iter().map(|i| answers.answers()[i]).collect();
        out.push(Prediction { qid: ex.qid.clone(), gold: ex.answer, correct: top[0] == ex.answer, top });
    }
    Ok(out)
}

/// Append skipped questions (scored as wrong) and compute metrics.
pub fn finish_report(mut predictions: Vec<Prediction>, data: &Prepared) -> EvalReport {
    for (qid, gold) in &data.skipped {
        predictions.push(Prediction { qid: qid.clone(), gold: *gold, top: Vec::new(), correct: false });
    }
    EvalReport { metrics: Metrics::from_predictions(&predictions), predictions }
}

/// Accuracy@1/@3 over every prepared question; skipped ones count as wrong.
pub fn evaluate(params: &ModelParams, data: &Prepared, answers: &AnswerSpace) -> Result<EvalReport, TrainError> {
    Ok(finish_report(score_examples(params, &data.examples, answers)?, data))
}

/// Seeded shuffle, mini-batches of summed per-example gradients averaged
/// over the batch, one Adam step per batch, linear learning-rate decay and
/// best-validation selection. Examples whose answer is outside the answer
/// space carry no target and are not trained on.
pub fn train_loop(
    mut params: ModelParams,
    train: &Prepared,
    validation: &Prepared,
    answers: &AnswerSpace,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut order: Vec<(usize, usize)> =
        train.examples.iter().enumerate().filter_map(|(i, e)| e.target.map(|t| (i, t))).collect();
    if order.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&params.store, cfg.adam);
    let mut grads = ParamGrads::zeros_like(&params.store);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate(epoch);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            grads.clear();
            for &(i, target) in chunk {
                let mut ctx = ForwardCtx::train(rng.next_u64());
                loss_sum += example_loss_and_grads(&params, &train.examples[i], target, &mut ctx, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(&mut params.store, &grads, lr).map_err(ModelError::from)?;
        }
        let val = evaluate(&params, validation, answers)?.metrics.accuracy_at_1;
        let report = EpochReport { epoch, lr, mean_loss: loss_sum / order.len() as f64, validation_accuracy: val };
        observer.on_epoch(&report);
        history.push(report);

        let improved = best.as_ref().is_none_or(|b| val > b.0);
        if best.as_ref().is_none_or(|b| val >= b.0) {
            best = Some((val, epoch, params.clone()));
        }
        stale = if improved { 0 } else { stale + 1 };
        if cfg.patience.is_some_and(|p| stale > p) {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, best_epoch, history })
}
