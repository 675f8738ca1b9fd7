use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::TrainError;
use crate::dataset::QAPair;
use crate::hypergraph::{build_pair_with_seeds, HypergraphConfig, HypergraphPair, NodeToken, Side};
use crate::kb::{EntityId, KnowledgeBase};
use crate::linker::{Linker, QuestionUnit};
use crate::model::{HyperedgeBatch, InputUnit, ModelConfig, Vocab};
use crate::text::tokenize;

/// Where walk seeds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    /// Exact keyword matching of the question against entity surfaces.
    #[default]
    Linked,
    /// The `seeds` field carried by each pair.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub hypergraph: HypergraphConfig,
    pub seed_source: SeedSource,
}

/// Node vocabulary covering the KB plus every residual question word, in
/// first-appearance order over `pairs`.
pub fn build_vocab(kb: &KnowledgeBase, pairs: &[QAPair]) -> Vocab {
    let linker = Linker::new(kb);
    let mut vocab = Vocab::from_kb(kb);
    for p in pairs {
        for w in linker.link(&tokenize(&p.question)).residual_tokens {
            vocab.add_word(&w);
        }
    }
    vocab
}

/// Ordered candidate answers and their logit indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSpace {
    answers: Vec<EntityId>,
    index: BTreeMap<EntityId, usize>,
}

impl AnswerSpace {
    /// Sorted, deduplicated candidates.
    pub fn new(mut answers: Vec<EntityId>) -> Self {
        answers.sort();
        answers.dedup();
        let index = answers.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        Self { answers, index }
    }

    /// Answers of the given (training) pairs; unresolvable surfaces are ignored.
    pub fn from_pairs(kb: &KnowledgeBase, pairs: &[QAPair]) -> Self {
        Self::new(pairs.iter().filter_map(|p| kb.entity(&p.answer)).collect())
    }

    pub fn answers(&self) -> &[EntityId] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, e: EntityId) -> Option<usize> {
        self.index.get(&e).copied()
    }

    /// Embedding rows of the candidates, for the similarity predictor.
    pub fn candidate_rows(&self, vocab: &Vocab) -> Vec<usize> {
        self.answers.iter().map(|e| vocab.row(NodeToken::entity(e.0))).collect()
    }
}

/// One encodable question.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub qid: String,
    pub answer: EntityId,
    /// Logit index of the answer, `None` when it is outside the answer space.
    pub target: Option<usize>,
    pub question: HyperedgeBatch,
    pub knowledge: HyperedgeBatch,
    pub hypergraph: HypergraphPair,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prepared {
    pub examples: Vec<Example>,
    /// Questions without any knowledge hyperedge, with their gold answer.
    pub skipped: Vec<(String, EntityId)>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.examples.len() + self.skipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.qid.as_str()).chain(self.skipped.iter().map(|s| s.0.as_str()))
    }
}

fn question_tokens(units: Vec<QuestionUnit>, vocab: &Vocab) -> Vec<NodeToken> {
    units
        .into_iter()
        .filter_map(|u| match u {
            QuestionUnit::Entity(e) => Some(NodeToken::entity(e.0)),
            // Words outside a loaded checkpoint's vocabulary are dropped.
            QuestionUnit::Word(w) => vocab.word(&w).map(NodeToken::word),
        })
        .collect()
}

fn seeds_for(kb: &KnowledgeBase, pair: &QAPair, linked: Vec<EntityId>, source: SeedSource) -> Result<Vec<EntityId>, TrainError> {
    match source {
        SeedSource::Linked => Ok(linked),
        SeedSource::Oracle => {
            let surfaces = pair.seeds.as_ref().ok_or(TrainError::Config("oracle seeds requested but a pair has none"))?;
            let mut out = Vec::with_capacity(surfaces.len());
            for s in surfaces {
                let e = kb.entity(s).ok_or_else(|| crate::kb::KbError::UnknownSurface(s.clone()))?;
                if !out.contains(&e) {
                    out.push(e);
                }
            }
            Ok(out)
        }
    }
}

fn batch(edges: &[crate::hypergraph::Hyperedge], unit: InputUnit, width: usize, cap: usize, vocab: &Vocab, side: Side) -> Result<HyperedgeBatch, TrainError> {
    Ok(match unit {
        InputUnit::Hyperedge => HyperedgeBatch::from_edges(edges, vocab, width, side)?,
        InputUnit::WordUnit => {
            let flat: Vec<NodeToken> = edges.iter().flat_map(|e| e.tokens.iter().copied()).collect();
            HyperedgeBatch::word_units(&flat, vocab, cap, side)
        }
    })
}

/// The hypergraph pair of one question and its question tokens, exactly as
/// [`prepare_examples`] builds them.
pub fn question_hypergraph(
    kb: &KnowledgeBase,
    linker: &Linker,
    pair: &QAPair,
    vocab: &Vocab,
    task: &TaskConfig,
) -> Result<(HypergraphPair, Vec<NodeToken>), TrainError> {
    let link = linker.link(&tokenize(&pair.question));
    let seeds = seeds_for(kb, pair, link.unique_seeds(), task.seed_source)?;
    let q_tokens = question_tokens(link.units(), vocab);
    Ok((build_pair_with_seeds(kb, seeds, &q_tokens, &task.hypergraph)?, q_tokens))
}

/// Build model inputs for `pairs`. Only the question, answer and seeds of a
/// pair are read; gold paths are ignored.
pub fn prepare_examples(
    kb: &KnowledgeBase,
    pairs: &[QAPair],
    vocab: &Vocab,
    answers: &AnswerSpace,
    task: &TaskConfig,
    model: &ModelConfig,
) -> Result<Prepared, TrainError> {
    let linker = Linker::new(kb);
    let hg = &task.hypergraph;
    let mut out = Prepared::default();
    for p in pairs {
        let answer = kb.entity(&p.answer).ok_or_else(|| crate::kb::KbError::UnknownSurface(p.answer.clone()))?;
        let (pair, q_tokens) = question_hypergraph(kb, &linker, p, vocab, task)?;
        if pair.knowledge_edges.is_empty() || q_tokens.is_empty() {
            out.skipped.push((p.qid.clone(), answer));
            continue;
        }
        let question = match model.input.question {
            InputUnit::Hyperedge => HyperedgeBatch::from_edges(&pair.question_edges, vocab, model.question_width, Side::Question)?,
            InputUnit::WordUnit => HyperedgeBatch::word_units(&q_tokens, vocab, hg.question_cap(), Side::Question),
        };
        let knowledge = batch(
            &pair.knowledge_edges,
            model.input.knowledge,
            model.knowledge_width,
            hg.knowledge_cap(),
            vocab,
            Side::Knowledge,
        )?;
        out.examples.push(Example {
            qid: p.qid.clone(),
            answer,
            target: answers.index_of(answer),
            question,
            knowledge,
            hypergraph: pair,
        });
    }
    Ok(out)
}
