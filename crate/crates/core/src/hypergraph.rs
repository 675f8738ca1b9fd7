//! Question and query-aware knowledge hypergraphs.
//!
//! A knowledge hyperedge is a chained walk `[e0, r1, e1, .., rk, ek]` of `k`
//! triplets starting at a linked seed entity. A question hyperedge is an
//! n-gram over the question's word units.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kb::{EntityId, KbError, KnowledgeBase, Triplet};
use crate::linker::LinkResult;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WalkError {
    #[error("n_hops must be at least 1")]
    ZeroHops,
    #[error("max_n must be at least 1")]
    ZeroNgram,
    #[error("question has no word units")]
    EmptyQuestion,
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Relation,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeToken {
    pub kind: NodeKind,
    pub id: u32,
}

impl NodeToken {
    pub const fn entity(id: u32) -> Self {
        Self { kind: NodeKind::Entity, id }
    }
    pub const fn relation(id: u32) -> Self {
        Self { kind: NodeKind::Relation, id }
    }
    pub const fn word(id: u32) -> Self {
        Self { kind: NodeKind::Word, id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Question,
    Knowledge,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hyperedge {
    pub tokens: Vec<NodeToken>,
    /// Number of chained triplets; 0 for question n-grams.
    pub hops: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphPair {
    pub question_edges: Vec<Hyperedge>,
    pub knowledge_edges: Vec<Hyperedge>,
    pub seed_entities: Vec<EntityId>,
    /// Whether the cap truncated the (question, knowledge) side.
    pub caps_applied: (bool, bool),
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypergraphConfig {
    pub n_hops: usize,
    pub max_n: usize,
    pub allow_revisit: bool,
    /// Keep only walks of exactly `n_hops` triplets instead of `1..=n_hops`.
    pub exact_hops: bool,
    /// Knowledge edge cap; `None` uses [`default_cap`] for `n_hops`.
    pub knowledge_cap: Option<usize>,
    pub question_cap: Option<usize>,
    pub cap_seed: u64,
}

impl Default for HypergraphConfig {
    fn default() -> Self {
        Self {
            n_hops: 2,
            max_n: 3,
            allow_revisit: false,
            exact_hops: false,
            knowledge_cap: None,
            question_cap: None,
            cap_seed: 0,
        }
    }
}

impl HypergraphConfig {
    pub fn knowledge_cap(&self) -> usize {
        self.knowledge_cap.unwrap_or_else(|| default_cap(self.n_hops))
    }

    pub fn question_cap(&self) -> usize {
        self.question_cap.unwrap_or_else(|| default_cap(self.n_hops))
    }

    /// Token slots of a knowledge hyperedge.
    pub fn knowledge_width(&self) -> usize {
        2 * self.n_hops + 1
    }
}

/// Sequence budget per walk depth: 300, 1,000 and 1,800 for 1, 2 and 3 hops.
pub fn default_cap(n_hops: usize) -> usize {
    match n_hops {
        0 | 1 => 300,
        2 => 1000,
        _ => 1800,
    }
}

/// Every directed path of `1..=n_hops` triplets from each seed, deduplicated,
/// ordered by hop count then token ids.
pub fn knowledge_walks(
    kb: &KnowledgeBase,
    seeds: &[EntityId],
    n_hops: usize,
    allow_revisit: bool,
) -> Result<Vec<Hyperedge>, WalkError> {
    if n_hops == 0 {
        return Err(WalkError::ZeroHops);
    }
    let mut found: BTreeSet<(usize, Vec<u32>)> = BTreeSet::new();
    for &seed in seeds {
        kb.neighbors(seed)?;
        // Explicit stack of (path ids, next neighbor index to try).
        let mut path: Vec<u32> = alloc::vec![seed.0];
        let mut cursor: Vec<usize> = alloc::vec![0];
        while let Some(next) = cursor.last_mut() {
            let here = EntityId(*path.last().unwrap());
            let hops = (path.len() - 1) / 2;
            let nbrs = kb.neighbors(here)?;
            if hops == n_hops || *next >= nbrs.len() {
                cursor.pop();
                if path.len() > 1 {
                    path.truncate(path.len() - 2);
                }
                continue;
            }
            let (rel, tail) = nbrs[*next];
            *next += 1;
            if !allow_revisit && path.iter().step_by(2).any(|&e| e == tail.0) {
                continue;
            }
            path.push(rel.0);
            path.push(tail.0);
            found.insert((hops + 1, path.clone()));
            cursor.push(0);
        }
    }
    Ok(found
        .into_iter()
        .map(|(hops, ids)| Hyperedge {
            tokens: ids
                .iter()
                .enumerate()
                .map(|(i, &id)| if i % 2 == 0 { NodeToken::entity(id) } else { NodeToken::relation(id) })
                .collect(),
            hops,
            side: Side::Knowledge,
        })
        .collect())
}

/// All contiguous n-grams for `n = 1..=min(max_n, len)`, ordered by start
/// then length; repeated token sequences keep their first occurrence.
pub fn question_ngrams(tokens: &[NodeToken], max_n: usize) -> Result<Vec<Hyperedge>, WalkError> {
    if tokens.is_empty() {
        return Err(WalkError::EmptyQuestion);
    }
    if max_n == 0 {
        return Err(WalkError::ZeroNgram);
    }
    let mut seen: BTreeSet<&[NodeToken]> = BTreeSet::new();
    let mut out = Vec::new();
    for start in 0..tokens.len() {
        for n in 1..=max_n.min(tokens.len() - start) {
            let gram = &tokens[start..start + n];
            if seen.insert(gram) {
                out.push(Hyperedge { tokens: gram.to_vec(), hops: 0, side: Side::Question });
            }
        }
    }
    Ok(out)
}

/// Truncate to at most `max_count` edges. Lower hop classes are kept whole;
/// the first class that does not fit is sampled uniformly without
/// replacement (seeded) and higher classes are dropped. Input order is kept.
pub fn cap_hyperedges(edges: Vec<Hyperedge>, max_count: usize, seed: u64) -> Vec<Hyperedge> {
    let max_count = max_count.max(1);
    if edges.len() <= max_count {
        return edges;
    }
    let classes: BTreeSet<usize> = edges.iter().map(|e| e.hops).collect();
    let mut keep = alloc::vec![false; edges.len()];
    let mut remaining = max_count;
    for hops in classes {
        let members: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].hops == hops).collect();
        if members.len() <= remaining {
            members.iter().for_each(|&i| keep[i] = true);
            remaining -= members.len();
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in rand::seq::index::sample(&mut rng, members.len(), remaining) {
            keep[members[j]] = true;
        }
        break;
    }
    edges.into_iter().zip(keep).filter_map(|(e, k)| k.then_some(e)).collect()
}

/// Index of the walk that spells out `path` (head, relation, tail, relation, ...).
pub fn find_walk(edges: &[Hyperedge], path: &[Triplet]) -> Option<usize> {
    let first = path.first()?;
    let mut ids = alloc::vec![NodeToken::entity(first.head.0)];
    for f in path {
        ids.push(NodeToken::relation(f.predicate.0));
        ids.push(NodeToken::entity(f.tail.0));
    }
    edges.iter().position(|e| e.tokens == ids)
}

/// Compose walks, n-grams and caps for one question.
pub fn build_pair(
    kb: &KnowledgeBase,
    link: &LinkResult,
    question_tokens: &[NodeToken],
    cfg: &HypergraphConfig,
) -> Result<HypergraphPair, WalkError> {
    build_pair_with_seeds(kb, link.unique_seeds(), question_tokens, cfg)
}

/// [`build_pair`] with walk seeds supplied directly (oracle links).
pub fn build_pair_with_seeds(
    kb: &KnowledgeBase,
    seeds: Vec<EntityId>,
    question_tokens: &[NodeToken],
    cfg: &HypergraphConfig,
) -> Result<HypergraphPair, WalkError> {
    let mut k_edges = knowledge_walks(kb, &seeds, cfg.n_hops, cfg.allow_revisit)?;
    if cfg.exact_hops {
        k_edges.retain(|e| e.hops == cfg.n_hops);
    }
    let q_edges = question_ngrams(question_tokens, cfg.max_n)?;
    let (q_len, k_len) = (q_edges.len(), k_edges.len());
    let q_edges = cap_hyperedges(q_edges, cfg.question_cap(), cfg.cap_seed);
    let k_edges = cap_hyperedges(k_edges, cfg.knowledge_cap(), cfg.cap_seed);
    Ok(HypergraphPair {
        caps_applied: (q_edges.len() < q_len, k_edges.len() < k_len),
        question_edges: q_edges,
        knowledge_edges: k_edges,
        seed_entities: seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(e: &Hyperedge) -> Vec<u32> {
        e.tokens.iter().map(|t| t.id).collect()
    }

    #[test]
    fn single_path() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let a = kb.entity("a").unwrap();
        let w = knowledge_walks(&kb, &[a], 1, false).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].tokens, [NodeToken::entity(0), NodeToken::relation(0), NodeToken::entity(1)]);
        assert_eq!(w[0].hops, 1);
    }

    #[test]
    fn shorter_walks_included() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b"), ("b", "s", "c")]).unwrap();
        let w = knowledge_walks(&kb, &[kb.entity("a").unwrap()], 2, false).unwrap();
        assert_eq!(w.iter().map(ids).collect::<Vec<_>>(), [vec![0, 0, 1], vec![0, 0, 1, 1, 2]]);
        assert_eq!(w.iter().map(|e| e.hops).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn revisit_flag_controls_cycles() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b"), ("b", "r", "a")]).unwrap();
        let a = kb.entity("a").unwrap();
        assert_eq!(knowledge_walks(&kb, &[a], 3, false).unwrap().len(), 1);
        assert_eq!(knowledge_walks(&kb, &[a], 3, true).unwrap().len(), 3);
    }

    #[test]
    fn walk_errors() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        assert_eq!(knowledge_walks(&kb, &[EntityId(0)], 0, false), Err(WalkError::ZeroHops));
        assert!(matches!(knowledge_walks(&kb, &[EntityId(7)], 1, false), Err(WalkError::Kb(_))));
    }

    #[test]
    fn ngram_enumeration() {
        let t = [NodeToken::word(0), NodeToken::word(1), NodeToken::word(2)];
        let g = question_ngrams(&t, 2).unwrap();
        assert_eq!(g.iter().map(ids).collect::<Vec<_>>(), [vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2]]);
        assert!(g.iter().all(|e| e.hops == 0 && e.side == Side::Question));
        assert_eq!(question_ngrams(&t[..1], 3).unwrap().len(), 1);
        assert_eq!(question_ngrams(&[], 3), Err(WalkError::EmptyQuestion));
    }

    #[test]
    fn ngram_duplicates_keep_first() {
        let t = [NodeToken::word(0), NodeToken::word(0)];
        let g = question_ngrams(&t, 2).unwrap();
        assert_eq!(g.iter().map(ids).collect::<Vec<_>>(), [vec![0], vec![0, 0]]);
    }

    fn edge(hops: usize, tag: u32) -> Hyperedge {
        Hyperedge { tokens: vec![NodeToken::entity(tag)], hops, side: Side::Knowledge }
    }

    #[test]
    fn cap_identity_and_priority() {
        let few: Vec<_> = (0..5).map(|i| edge(1, i)).collect();
        assert_eq!(cap_hyperedges(few.clone(), 10, 3), few);

        let mut many: Vec<_> = (0..3).map(|i| edge(1, i)).collect();
        many.extend((0..100).map(|i| edge(2, 100 + i)));
        let capped = cap_hyperedges(many.clone(), 10, 7);
        assert_eq!(capped.len(), 10);
        assert_eq!(capped.iter().filter(|e| e.hops == 1).count(), 3);
        assert_eq!(capped, cap_hyperedges(many.clone(), 10, 7));
        // canonical order preserved
        let pos: Vec<usize> = capped.iter().map(|c| many.iter().position(|m| m == c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cap_drops_higher_classes_after_overflow() {
        let mut e: Vec<_> = (0..5).map(|i| edge(1, i)).collect();
        e.extend((0..5).map(|i| edge(2, 10 + i)));
        e.extend((0..5).map(|i| edge(3, 20 + i)));
        let c = cap_hyperedges(e, 8, 1);
        assert_eq!(c.iter().filter(|x| x.hops == 1).count(), 5);
        assert_eq!(c.iter().filter(|x| x.hops == 2).count(), 3);
        assert_eq!(c.iter().filter(|x| x.hops == 3).count(), 0);
    }

    #[test]
    fn build_pair_without_seeds_has_no_knowledge() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let link = crate::linker::link_question(&kb, &[alloc::string::String::from("zz")]);
        let pair = build_pair(&kb, &link, &[NodeToken::word(0)], &HypergraphConfig::default()).unwrap();
        assert!(pair.knowledge_edges.is_empty());
        assert_eq!(pair.question_edges.len(), 1);
    }
}
