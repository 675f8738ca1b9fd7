//! Exact keyword matching of question tokens against KB entity surfaces.
//!
//! Matching is greedy, left to right: at each position the longest entity
//! surface (in tokens) that matches is taken; ties go to the lower entity id.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::kb::{EntityId, KnowledgeBase};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LinkResult {
    /// Linked entities ordered by span start. An entity mentioned twice appears twice.
    pub seeds: Vec<EntityId>,
    /// Half-open token span `[start, end)` of each seed.
    pub spans: Vec<(usize, usize)>,
    pub residual_tokens: Vec<String>,
    pub residual_positions: Vec<usize>,
}

/// One question word unit: a linked entity or a leftover word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionUnit {
    Entity(EntityId),
    Word(String),
}

impl LinkResult {
    /// Word units in question order, entity spans collapsed to one unit each.
    pub fn units(&self) -> Vec<QuestionUnit> {
        let mut out = Vec::with_capacity(self.seeds.len() + self.residual_tokens.len());
        let (mut si, mut ri) = (0, 0);
        while si < self.seeds.len() || ri < self.residual_tokens.len() {
            let take_seed = match (self.spans.get(si), self.residual_positions.get(ri)) {
                (Some(&(s, _)), Some(&p)) => s < p,
                (Some(_), None) => true,
                _ => false,
            };
            if take_seed {
                out.push(QuestionUnit::Entity(self.seeds[si]));
                si += 1;
            } else {
                out.push(QuestionUnit::Word(self.residual_tokens[ri].clone()));
                ri += 1;
            }
        }
        out
    }

    /// Seeds with repeats removed, first occurrence kept.
    pub fn unique_seeds(&self) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = Vec::new();
        for &s in &self.seeds {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}

/// Entity surfaces indexed by their first token.
#[derive(Debug, Clone)]
pub struct Linker {
    by_first: BTreeMap<String, Vec<(Vec<String>, EntityId)>>,
}

impl Linker {
    pub fn new(kb: &KnowledgeBase) -> Self {
        let mut by_first: BTreeMap<String, Vec<(Vec<String>, EntityId)>> = BTreeMap::new();
        for (id, surface) in kb.entities().iter() {
            let toks: Vec<String> = surface.split(' ').map(String::from).collect();
            by_first.entry(toks[0].clone()).or_default().push((toks, EntityId(id)));
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        Self { by_first }
    }

    pub fn link(&self, tokens: &[String]) -> LinkResult {
        let mut res = LinkResult {
            seeds: Vec::new(),
            spans: Vec::new(),
            residual_tokens: Vec::new(),
            residual_positions: Vec::new(),
        };
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.by_first.get(&tokens[i]).and_then(|cands| {
                cands.iter().find(|(surf, _)| {
                    i + surf.len() <= tokens.len() && surf.iter().zip(&tokens[i..]).all(|(a, b)| a == b)
                })
            });
            match hit {
                Some((surf, id)) => {
                    res.seeds.push(*id);
                    res.spans.push((i, i + surf.len()));
                    i += surf.len();
                }
                None => {
                    res.residual_tokens.push(tokens[i].clone());
                    res.residual_positions.push(i);
                    i += 1;
                }
            }
        }
        res
    }
}

pub fn link_question(kb: &KnowledgeBase, tokens: &[String]) -> LinkResult {
    Linker::new(kb).link(tokens)
}
