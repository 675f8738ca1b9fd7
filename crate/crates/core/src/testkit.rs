//! Independent oracles and toy builders for tests. Enabled by the `testkit` feature.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hypergraph::{Hyperedge, NodeToken, Side};
use crate::kb::{EntityId, KnowledgeBase};
use crate::model::{
    build_embedding_table, encode, predict_logits, ForwardCtx, HyperedgeBatch, ModelConfig, ModelError, ModelParams,
    Vocab,
};
use crate::tensor::{Matrix, ParamGrads, ParamStore, Tape};

/// Every walk of 1..=n_hops hops from each seed, as token-id sequences,
/// found by plain recursion over the fact list (no adjacency index).
pub fn dfs_walks(kb: &KnowledgeBase, seeds: &[EntityId], n_hops: usize, allow_revisit: bool) -> BTreeSet<Vec<u32>> {
    fn go(
        kb: &KnowledgeBase,
        path: &mut Vec<u32>,
        visited: &mut Vec<u32>,
        hops: usize,
        n_hops: usize,
        revisit: bool,
        out: &mut BTreeSet<Vec<u32>>,
    ) {
        if hops == n_hops {
            return;
        }
        let here = *path.last().expect("path starts at a seed");
        for f in kb.facts() {
            if f.head.0 != here || (!revisit && visited.contains(&f.tail.0)) {
                continue;
            }
            path.push(f.predicate.0);
            path.push(f.tail.0);
            visited.push(f.tail.0);
            out.insert(path.clone());
            go(kb, path, visited, hops + 1, n_hops, revisit, out);
            visited.pop();
            path.pop();
            path.pop();
        }
    }
    let mut out = BTreeSet::new();
    for s in seeds {
        let mut path = alloc::vec![s.0];
        let mut visited = alloc::vec![s.0];
        go(kb, &mut path, &mut visited, 0, n_hops, allow_revisit, &mut out);
    }
    out
}

/// Random KB with `n_facts` facts over small entity/relation alphabets.
pub fn random_kb(rng: &mut impl Rng, n_entities: usize, n_relations: usize, n_facts: usize) -> KnowledgeBase {
    let facts: Vec<(alloc::string::String, alloc::string::String, alloc::string::String)> = (0..n_facts)
        .map(|_| {
            (
                alloc::format!("e{}", rng.random_range(0..n_entities)),
                alloc::format!("r{}", rng.random_range(0..n_relations)),
                alloc::format!("e{}", rng.random_range(0..n_entities)),
            )
        })
        .collect();
    KnowledgeBase::from_triples(facts.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str()))).expect("non-empty")
}

/// Largest relative error between analytic gradients and central
/// differences of `loss` over every scalar of every parameter, using
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_grad_error<F>(store: &ParamStore, analytic: &ParamGrads, h: f64, floor: f64, mut loss: F) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    for id in store.ids() {
        for i in 0..store.get(id).data().len() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(&work);
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(&work);
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id).data()[i];
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(floor);
            worst = worst.max(libm::fabs(a - numeric) / denom);
        }
    }
    worst
}

/// A small model plus one question/knowledge pair of random hyperedges.
pub struct Toy {
    pub params: ModelParams,
    pub question: HyperedgeBatch,
    pub knowledge: HyperedgeBatch,
    pub target: usize,
}

/// Vocabulary of `n_entities` entities, `n_relations` relations and `n_words` words.
pub fn toy_vocab(n_entities: usize, n_relations: usize, n_words: usize) -> Vocab {
    let names = |p: &str, n: usize| (0..n).map(|i| alloc::format!("{p}{i}")).collect::<Vec<_>>();
    Vocab::from_parts(names("e", n_entities), names("r", n_relations), names("w", n_words))
}

/// Random hyperedge with between 1 and `width` tokens of mixed kinds.
pub fn random_edge(rng: &mut impl Rng, vocab: &Vocab, width: usize, side: Side) -> Hyperedge {
    let len = rng.random_range(1..=width);
    let tokens = (0..len)
        .map(|_| match rng.random_range(0..3) {
            0 => NodeToken::entity(rng.random_range(0..vocab.num_entities() as u32)),
            1 => NodeToken::relation(rng.random_range(0..vocab.num_relations() as u32)),
            _ => NodeToken::word(rng.random_range(0..vocab.num_words() as u32)),
        })
        .collect();
    Hyperedge { tokens, hops: len / 2, side }
}

/// Toy instance with `nq`/`nk` edges and parameters drawn from `seed`.
/// Every parameter is re-drawn in `±scale` so that no gradient is trivially zero.
pub fn toy(config: ModelConfig, nq: usize, nk: usize, seed: u64, scale: f64) -> Result<Toy, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = toy_vocab(4, 3, 3);
    let (table, _) = build_embedding_table(&vocab, None, config.w, seed)?;
    let candidates: Vec<usize> = (1..=vocab.num_entities()).collect();
    let mut params = ModelParams::new(config.clone(), table, candidates)?;
    for id in params.store.ids().collect::<Vec<_>>() {
        for x in params.store.get_mut(id).data_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
    let q: Vec<Hyperedge> = (0..nq).map(|_| random_edge(&mut rng, &vocab, config.question_width, Side::Question)).collect();
    let k: Vec<Hyperedge> = (0..nk).map(|_| random_edge(&mut rng, &vocab, config.knowledge_width, Side::Knowledge)).collect();
    Ok(Toy {
        question: HyperedgeBatch::from_edges(&q, &vocab, config.question_width, Side::Question)?,
        knowledge: HyperedgeBatch::from_edges(&k, &vocab, config.knowledge_width, Side::Knowledge)?,
        target: rng.random_range(0..params.num_answers),
        params,
    })
}

impl Toy {
    /// Evaluation-mode cross-entropy with the parameters in `store`.
    pub fn loss_with(&self, store: &ParamStore) -> f64 {
        let mut p = self.params.clone();
        p.store = store.clone();
        let mut tape = Tape::new();
        let enc = encode(&mut tape, &p, &self.question, &self.knowledge, &mut ForwardCtx::eval()).expect("encode");
        let logits = predict_logits(&mut tape, &p, enc.z_q, enc.z_k).expect("logits");
        let loss = tape.cross_entropy_logits(logits, self.target).expect("loss");
        tape.value(loss).get(0, 0)
    }

    pub fn analytic_grads(&self) -> ParamGrads {
        let mut grads = ParamGrads::zeros_like(&self.params.store);
        crate::train::example_loss_and_grads(&self.params, &self.example(), self.target, &mut ForwardCtx::eval(), &mut grads)
            .expect("loss");
        grads
    }

    fn example(&self) -> crate::train::Example {
        crate::train::Example {
            qid: alloc::string::String::new(),
            answer: EntityId(0),
            target: Some(self.target),
            question: self.question.clone(),
            knowledge: self.knowledge.clone(),
            hypergraph: crate::hypergraph::HypergraphPair {
                question_edges: Vec::new(),
                knowledge_edges: Vec::new(),
                seed_entities: Vec::new(),
                caps_applied: (false, false),
            },
        }
    }
}

/// Matrix with entries uniform in `±scale`.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}
