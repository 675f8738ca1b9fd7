use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, PredictorKind};
use crate::tensor::{Matrix, ParamId, ParamStore};

/// Weights of one attention block (guided or self).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ff1: ParamId,
    pub ff1_bias: ParamId,
    pub ff2: ParamId,
    pub ff2_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorParams {
    /// Two-layer perceptron `w -> w -> |answers|`.
    Mlp { w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId },
    /// Dot product against the embedding rows of the candidates.
    Similarity { candidate_rows: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub embedding: ParamId,
    pub phi_q: (ParamId, ParamId),
    pub phi_k: (ParamId, ParamId),
    /// `d -> d_v` input projections, present only when `d != d_v`.
    pub in_q: Option<ParamId>,
    pub in_k: Option<ParamId>,
    /// Knowledge rows attend over question rows.
    pub guided_k: Vec<BlockParams>,
    /// Question rows attend over knowledge rows.
    pub guided_q: Vec<BlockParams>,
    pub self_k: Vec<BlockParams>,
    pub self_q: Vec<BlockParams>,
    pub joint: (ParamId, ParamId),
    pub predictor: PredictorParams,
    pub num_answers: usize,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn xavier(&mut self, rows: usize, cols: usize) -> Matrix {
        let a = libm::sqrt(6.0 / (rows + cols) as f64);
        Matrix::from_fn(rows, cols, |_, _| self.rng.random_range(-a..a))
    }
}

impl ModelParams {
    /// Fresh parameters. `embedding` is the initialized node table; for the
    /// similarity predictor `candidate_rows` are the answers' embedding rows,
    /// for the MLP only their count matters. The MLP output layer starts at zero.
    pub fn new(config: ModelConfig, embedding: Matrix, candidate_rows: Vec<usize>) -> Result<Self, ModelError> {
        config.validate()?;
        if candidate_rows.is_empty() {
            return Err(ModelError::NoAnswers);
        }
        if embedding.cols() != config.w {
            return Err(ModelError::Config("embedding width differs from w"));
        }
        if let Some(&r) = candidate_rows.iter().find(|&&r| r >= embedding.rows()) {
            return Err(ModelError::TokenOutOfRange { row: r, vocab: embedding.rows() });
        }
        let (w, d, dv) = (config.w, config.d, config.d_v);
        let mut init = Init { rng: ChaCha8Rng::seed_from_u64(config.init_seed) };
        let mut store = ParamStore::new();
        let embedding = store.add("embedding", embedding);

        let linear = |store: &mut ParamStore, init: &mut Init, name: &str, i: usize, o: usize| {
            let wid = store.add(format!("{name}.weight"), init.xavier(i, o));
            let bid = store.add(format!("{name}.bias"), Matrix::zeros(1, o));
            (wid, bid)
        };
        let phi_q = linear(&mut store, &mut init, "phi_q", config.question_width * w, d);
        let phi_k = linear(&mut store, &mut init, "phi_k", config.knowledge_width * w, d);
        let (in_q, in_k) = if d != dv {
            (
                Some(store.add("in_q.weight", init.xavier(d, dv))),
                Some(store.add("in_k.weight", init.xavier(d, dv))),
            )
        } else {
            (None, None)
        };

        let block = |store: &mut ParamStore, init: &mut Init, name: &str| BlockParams {
            wq: store.add(format!("{name}.wq"), init.xavier(dv, dv)),
            wk: store.add(format!("{name}.wk"), init.xavier(dv, dv)),
            wv: store.add(format!("{name}.wv"), init.xavier(dv, dv)),
            wo: store.add(format!("{name}.wo"), init.xavier(dv, dv)),
            bo: store.add(format!("{name}.bo"), Matrix::zeros(1, dv)),
            ln1_gain: store.add(format!("{name}.ln1.gain"), Matrix::filled(1, dv, 1.0)),
            ln1_bias: store.add(format!("{name}.ln1.bias"), Matrix::zeros(1, dv)),
            ff1: store.add(format!("{name}.ff1"), init.xavier(dv, dv)),
            ff1_bias: store.add(format!("{name}.ff1.bias"), Matrix::zeros(1, dv)),
            ff2: store.add(format!("{name}.ff2"), init.xavier(dv, dv)),
            ff2_bias: store.add(format!("{name}.ff2.bias"), Matrix::zeros(1, dv)),
            ln2_gain: store.add(format!("{name}.ln2.gain"), Matrix::filled(1, dv, 1.0)),
            ln2_bias: store.add(format!("{name}.ln2.bias"), Matrix::zeros(1, dv)),
        };
        let guided_k: Vec<_> =
            (0..config.n_guided_blocks).map(|l| block(&mut store, &mut init, &format!("guided_k.{l}"))).collect();
        let guided_q = if config.share_guided {
            guided_k.clone()
        } else {
            (0..config.n_guided_blocks).map(|l| block(&mut store, &mut init, &format!("guided_q.{l}"))).collect()
        };
        let self_k = (0..config.n_self_blocks).map(|l| block(&mut store, &mut init, &format!("self_k.{l}"))).collect();
        let self_q = (0..config.n_self_blocks).map(|l| block(&mut store, &mut init, &format!("self_q.{l}"))).collect();
        let joint = linear(&mut store, &mut init, "joint", 2 * dv, w);

        let num_answers = candidate_rows.len();
        let predictor = match config.predictor {
            PredictorKind::Mlp => {
                let (w1, b1) = linear(&mut store, &mut init, "mlp.hidden", w, w);
                let w2 = store.add("mlp.out.weight", Matrix::zeros(w, num_answers));
                let b2 = store.add("mlp.out.bias", Matrix::zeros(1, num_answers));
                PredictorParams::Mlp { w1, b1, w2, b2 }
            }
            PredictorKind::Similarity => PredictorParams::Similarity { candidate_rows },
        };

        Ok(Self {
            config,
            store,
            embedding,
            phi_q,
            phi_k,
            in_q,
            in_k,
            guided_k,
            guided_q,
            self_k,
            self_q,
            joint,
            predictor,
            num_answers,
        })
    }

    pub fn vocab_rows(&self) -> usize {
        self.store.get(self.embedding).rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { w: 4, d: 6, d_v: 4, heads: 2, question_width: 2, knowledge_width: 3, ..Default::default() }
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelParams::new(cfg(), Matrix::zeros(5, 4), alloc::vec![1, 2]).unwrap();
        let b = ModelParams::new(cfg(), Matrix::zeros(5, 4), alloc::vec![1, 2]).unwrap();
        assert_eq!(a.store, b.store);
        assert!(a.in_q.is_some());
        let c = ModelParams::new(ModelConfig { init_seed: 9, ..cfg() }, Matrix::zeros(5, 4), alloc::vec![1]).unwrap();
        assert_ne!(a.store.get(a.phi_q.0), c.store.get(c.phi_q.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = ModelConfig { heads: 3, ..cfg() };
        assert!(ModelParams::new(bad, Matrix::zeros(5, 4), alloc::vec![1]).is_err());
        assert_eq!(ModelParams::new(cfg(), Matrix::zeros(5, 4), alloc::vec![]), Err(ModelError::NoAnswers));
    }
}
