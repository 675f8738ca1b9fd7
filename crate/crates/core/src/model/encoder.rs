use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AttentionTrace, BlockParams, Direction, HyperedgeBatch, ModelError, ModelParams, PredictorParams, TraceEntry,
};
use crate::hypergraph::Side;
use crate::tensor::{Axis, Matrix, Tape, Var};

/// Per-forward switches: train mode enables dropout, whose masks are drawn
/// from `rng`; `record_trace` keeps attention matrices.
#[derive(Debug, Clone)]
pub struct ForwardCtx {
    pub train: bool,
    pub record_trace: bool,
    rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self { train: false, record_trace: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn traced() -> Self {
        Self { record_trace: true, ..Self::eval() }
    }

    pub fn train(seed: u64) -> Self {
        Self { train: true, record_trace: false, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn dropout<'p>(&mut self, tape: &mut Tape<'p>, x: Var, rate: f64) -> Result<Var, ModelError> {
        if !self.train || rate == 0.0 {
            return Ok(x);
        }
        let seed = self.rng.next_u64();
        Ok(tape.dropout(x, rate, true, seed)?)
    }
}

/// Sinusoidal encoding over the row (edge) index.
fn positional_encoding(rows: usize, dim: usize) -> Matrix {
    Matrix::from_fn(rows, dim, |pos, i| {
        let angle = pos as f64 / libm::pow(10000.0, (2 * (i / 2)) as f64 / dim as f64);
        if i % 2 == 0 {
            libm::sin(angle)
        } else {
            libm::cos(angle)
        }
    })
}

/// Concatenate node vectors per hyperedge (PAD slots zeroed) and project with
/// the side's linear map to `num_edges x d`.
pub fn embed_hyperedges<'p>(
    tape: &mut Tape<'p>,
    params: &'p ModelParams,
    batch: &HyperedgeBatch,
    ctx: &mut ForwardCtx,
) -> Result<Var, ModelError> {
    let cfg = &params.config;
    let (width, (phi_w, phi_b)) = match batch.side {
        Side::Question => (cfg.question_width, params.phi_q),
        Side::Knowledge => (cfg.knowledge_width, params.phi_k),
    };
    if batch.max_nodes != width {
        return Err(ModelError::Config("batch width differs from the model's row width"));
    }
    let vocab = params.vocab_rows();
    if let Some(&row) = batch.token_ids.iter().find(|&&r| r >= vocab) {
        return Err(ModelError::TokenOutOfRange { row, vocab });
    }
    let table = tape.param(&params.store, params.embedding);
    let nodes = tape.embedding_lookup(table, &batch.lookup_ids())?;
    let nodes = ctx.dropout(tape, nodes, cfg.dropout)?;
    let flat = tape.reshape(nodes, batch.num_edges, width * cfg.w)?;
    let w = tape.param(&params.store, phi_w);
    let b = tape.param(&params.store, phi_b);
    let proj = tape.matmul(flat, w)?;
    let mut e = tape.add_row(proj, b)?;
    if cfg.positional_embeddings {
        let pe = tape.constant(positional_encoding(batch.num_edges, cfg.d));
        e = tape.add(e, pe)?;
    }
    Ok(e)
}

/// Multi-head scaled dot-product attention of `target` rows over unmasked `source` rows.
#[allow(clippy::too_many_arguments)]
fn multi_head_attention<'p>(
    tape: &mut Tape<'p>,
    params: &'p ModelParams,
    block: &BlockParams,
    target: Var,
    source: Var,
    source_mask: &[bool],
    ctx: &mut ForwardCtx,
    trace: &mut Option<(&mut AttentionTrace, Direction, usize)>,
) -> Result<Var, ModelError> {
    let cfg = &params.config;
    let store = &params.store;
    let (wq, wk, wv) = (tape.param(store, block.wq), tape.param(store, block.wk), tape.param(store, block.wv));
    let q = tape.matmul(target, wq)?;
    let k = tape.matmul(source, wk)?;
    let v = tape.matmul(source, wv)?;
    let dh = cfg.d_v / cfg.heads;
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let probs = tape.masked_softmax(scores, source_mask)?;
        if let Some((t, direction, block_idx)) = trace.as_mut() {
            t.entries.push(TraceEntry {
                direction: *direction,
                block: *block_idx,
                head: h,
                matrix: tape.value(probs).clone(),
                key_mask: source_mask.to_vec(),
            });
        }
        let probs = ctx.dropout(tape, probs, cfg.dropout)?;
        heads.push(tape.matmul(probs, vh)?);
    }
    let cat = tape.concat(&heads, Axis::Cols)?;
    let wo = tape.param(store, block.wo);
    let bo = tape.param(store, block.bo);
    let out = tape.matmul(cat, wo)?;
    Ok(tape.add_row(out, bo)?)
}

/// Attention of `target` over `source`, then residual + layer norm, then a
/// relu feed-forward layer with residual + layer norm.
#[allow(clippy::too_many_arguments)]
pub fn guided_attention_block<'p>(
    tape: &mut Tape<'p>,
    params: &'p ModelParams,
    block: &BlockParams,
    target: Var,
    source: Var,
    source_mask: &[bool],
    ctx: &mut ForwardCtx,
    mut trace: Option<(&mut AttentionTrace, Direction, usize)>,
) -> Result<Var, ModelError> {
    if !source_mask.iter().any(|&m| m) {
        return Err(ModelError::EmptySide("source"));
    }
    let rate = params.config.dropout;
    let store = &params.store;
    let att = multi_head_attention(tape, params, block, target, source, source_mask, ctx, &mut trace)?;
    let att = ctx.dropout(tape, att, rate)?;
    let res = tape.add(target, att)?;
    let (g1, b1) = (tape.param(store, block.ln1_gain), tape.param(store, block.ln1_bias));
    let x = tape.layer_norm(res, g1, b1)?;

    let (f1, fb1) = (tape.param(store, block.ff1), tape.param(store, block.ff1_bias));
    let (f2, fb2) = (tape.param(store, block.ff2), tape.param(store, block.ff2_bias));
    let h = tape.matmul(x, f1)?;
    let h = tape.add_row(h, fb1)?;
    let h = tape.relu(h);
    let h = tape.matmul(h, f2)?;
    let h = tape.add_row(h, fb2)?;
    let h = ctx.dropout(tape, h, rate)?;
    let res = tape.add(x, h)?;
    let (g2, b2) = (tape.param(store, block.ln2_gain), tape.param(store, block.ln2_bias));
    Ok(tape.layer_norm(res, g2, b2)?)
}

pub fn self_attention_block<'p>(
    tape: &mut Tape<'p>,
    params: &'p ModelParams,
    block: &BlockParams,
    x: Var,
    mask: &[bool],
    ctx: &mut ForwardCtx,
    trace: Option<(&mut AttentionTrace, Direction, usize)>,
) -> Result<Var, ModelError> {
    guided_attention_block(tape, params, block, x, x, mask, ctx, trace)
}

#[derive(Debug)]
pub struct Encoded {
    pub z_q: Var,
    pub z_k: Var,
    pub trace: AttentionTrace,
}

fn project_in<'p>(tape: &mut Tape<'p>, params: &'p ModelParams, x: Var, proj: Option<crate::tensor::ParamId>) -> Result<Var, ModelError> {
    match proj {
        Some(id) => {
            let w = tape.param(&params.store, id);
            Ok(tape.matmul(x, w)?)
        }
        None => Ok(x),
    }
}

/// Embed both sides, run the guided stacks in both directions, the self
/// stacks per side, and mean-pool the unmasked rows of each side.
pub fn encode<'p>(
    tape: &mut Tape<'p>,
    params: &'p ModelParams,
    q_batch: &HyperedgeBatch,
    k_batch: &HyperedgeBatch,
    ctx: &mut ForwardCtx,
) -> Result<Encoded, ModelError> {
    if q_batch.real_edges() == 0 {
        return Err(ModelError::EmptySide("question"));
    }
    if k_batch.real_edges() == 0 {
        return Err(ModelError::EmptySide("knowledge"));
    }
    let mut trace = AttentionTrace::default();
    let record = ctx.record_trace;

    let eq = embed_hyperedges(tape, params, q_batch, ctx)?;
    let ek = embed_hyperedges(tape, params, k_batch, ctx)?;
    let mut xq = project_in(tape, params, eq, params.in_q)?;
    let mut xk = project_in(tape, params, ek, params.in_k)?;
    let (qm, km) = (&q_batch.edge_mask, &k_batch.edge_mask);

    for l in 0..params.config.n_guided_blocks {
        let t = record.then_some((&mut trace, Direction::KnowledgeToQuestion, l));
        let new_k = guided_attention_block(tape, params, &params.guided_k[l], xk, xq, qm, ctx, t)?;
        let t = record.then_some((&mut trace, Direction::QuestionToKnowledge, l));
        let new_q = guided_attention_block(tape, params, &params.guided_q[l], xq, xk, km, ctx, t)?;
        xk = new_k;
        xq = new_q;
    }
    for l in 0..params.config.n_self_blocks {
        let t = record.then_some((&mut trace, Direction::KnowledgeSelf, l));
        xk = self_attention_block(tape, params, &params.self_k[l], xk, km, ctx, t)?;
        let t = record.then_some((&mut trace, Direction::QuestionSelf, l));
        xq = self_attention_block(tape, params, &params.self_q[l], xq, qm, ctx, t)?;
    }
    let z_k = tape.masked_mean_rows(xk, km)?;
    let z_q = tape.masked_mean_rows(xq, qm)?;
    Ok(Encoded { z_q, z_k, trace })
}

/// `z = [z_k, z_q] W + b`, a `1 x w` row.
pub fn joint_representation<'p>(tape: &mut Tape<'p>, params: &'p ModelParams, z_q: Var, z_k: Var) -> Result<Var, ModelError> {
    let cat = tape.concat(&[z_k, z_q], Axis::Cols)?;
    let w = tape.param(&params.store, params.joint.0);
    let b = tape.param(&params.store, params.joint.1);
    let z = tape.matmul(cat, w)?;
    Ok(tape.add_row(z, b)?)
}

/// Joint layer followed by the two-layer perceptron; logits over the answer vocabulary.
pub fn predict_mlp<'p>(tape: &mut Tape<'p>, params: &'p ModelParams, z_q: Var, z_k: Var) -> Result<Var, ModelError> {
    let PredictorParams::Mlp { w1, b1, w2, b2 } = params.predictor else {
        return Err(ModelError::Config("model was built with the similarity predictor"));
    };
    let z = joint_representation(tape, params, z_q, z_k)?;
    let s = &params.store;
    let (w1, b1, w2, b2) = (tape.param(s, w1), tape.param(s, b1), tape.param(s, w2), tape.param(s, b2));
    let h = tape.matmul(z, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, w2)?;
    Ok(tape.add_row(o, b2)?)
}

/// `z C^T` for a `1 x w` joint vector and an `|A| x w` candidate matrix.
pub fn predict_similarity(tape: &mut Tape<'_>, z: Var, candidates: Var) -> Result<Var, ModelError> {
    if tape.shape(candidates).0 == 0 {
        return Err(ModelError::NoAnswers);
    }
    Ok(tape.matmul_nt(z, candidates)?)
}

/// Answer logits with whichever predictor the model was built with.
pub fn predict_logits<'p>(tape: &mut Tape<'p>, params: &'p ModelParams, z_q: Var, z_k: Var) -> Result<Var, ModelError> {
    match &params.predictor {
        PredictorParams::Mlp { .. } => predict_mlp(tape, params, z_q, z_k),
        PredictorParams::Similarity { candidate_rows } => {
            let z = joint_representation(tape, params, z_q, z_k)?;
            let table = tape.param(&params.store, params.embedding);
            let ids: Vec<Option<usize>> = candidate_rows.iter().map(|&r| Some(r)).collect();
            let c = tape.embedding_lookup(table, &ids)?;
            predict_similarity(tape, z, c)
        }
    }
}
