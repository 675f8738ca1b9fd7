use hgt_core::model::ModelParams;
use hgt_core::train::{score_examples, AnswerSpace, Example, Prediction};

use crate::error::Result;

/// Score `examples` on up to `workers` threads over contiguous shards.
/// Shards are concatenated in order, so the result equals a sequential run.
pub fn score_sharded(params: &ModelParams, examples: &[Example], answers: &AnswerSpace, workers: usize) -> Result<Vec<Prediction>> {
    let workers = workers.clamp(1, examples.len().max(1));
    if workers == 1 {
        return Ok(score_examples(params, examples, answers)?);
    }
    let shard = examples.len().div_ceil(workers);
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> =
            examples.chunks(shard).map(|chunk| s.spawn(move || score_examples(params, chunk, answers))).collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(examples.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
