use alloc::vec::Vec;

use super::{ModelError, Vocab};
use crate::hypergraph::{Hyperedge, NodeToken, Side};

/// Padded token-row matrix for one side of one question.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperedgeBatch {
    pub side: Side,
    pub num_edges: usize,
    pub max_nodes: usize,
    /// Row-major `num_edges x max_nodes` embedding rows; PAD slots hold [`Vocab::PAD`].
    pub token_ids: Vec<usize>,
    pub node_mask: Vec<bool>,
    pub edge_mask: Vec<bool>,
}

impl HyperedgeBatch {
    pub fn from_edges(
        edges: &[Hyperedge],
        vocab: &Vocab,
        max_nodes: usize,
        side: Side,
    ) -> Result<Self, ModelError> {
        let mut token_ids = Vec::with_capacity(edges.len() * max_nodes);
        let mut node_mask = Vec::with_capacity(edges.len() * max_nodes);
        for e in edges {
            if e.tokens.len() > max_nodes {
                return Err(ModelError::EdgeTooLong { len: e.tokens.len(), width: max_nodes });
            }
            for slot in 0..max_nodes {
                match e.tokens.get(slot) {
                    Some(&t) => {
                        token_ids.push(vocab.row(t));
                        node_mask.push(true);
                    }
                    None => {
                        token_ids.push(Vocab::PAD);
                        node_mask.push(false);
                    }
                }
            }
        }
        Ok(Self {
            side,
            num_edges: edges.len(),
            max_nodes,
            token_ids,
            node_mask,
            edge_mask: alloc::vec![true; edges.len()],
        })
    }

    /// One length-1 row per token, truncated to `cap` rows.
    pub fn word_units(tokens: &[NodeToken], vocab: &Vocab, cap: usize, side: Side) -> Self {
        let n = tokens.len().min(cap);
        Self {
            side,
            num_edges: n,
            max_nodes: 1,
            token_ids: tokens[..n].iter().map(|&t| vocab.row(t)).collect(),
            node_mask: alloc::vec![true; n],
            edge_mask: alloc::vec![true; n],
        }
    }

    /// Append `extra` fully masked rows.
    pub fn pad_edges(&mut self, extra: usize) {
        self.num_edges += extra;
        self.token_ids.extend(core::iter::repeat_n(Vocab::PAD, extra * self.max_nodes));
        self.node_mask.extend(core::iter::repeat_n(false, extra * self.max_nodes));
        self.edge_mask.extend(core::iter::repeat_n(false, extra));
    }

    pub fn real_edges(&self) -> usize {
        self.edge_mask.iter().filter(|&&m| m).count()
    }

    /// Lookup ids for the embedding gather: `None` wherever the node or its edge is masked.
    pub fn lookup_ids(&self) -> Vec<Option<usize>> {
        (0..self.token_ids.len())
            .map(|i| (self.node_mask[i] && self.edge_mask[i / self.max_nodes]).then_some(self.token_ids[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KnowledgeBase;
    use alloc::vec;

    #[test]
    fn pads_short_edges() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let v = Vocab::from_kb(&kb);
        let e = Hyperedge { tokens: vec![NodeToken::entity(0)], hops: 0, side: Side::Question };
        let b = HyperedgeBatch::from_edges(core::slice::from_ref(&e), &v, 3, Side::Question).unwrap();
        assert_eq!(b.token_ids, [1, 0, 0]);
        assert_eq!(b.node_mask, [true, false, false]);
        assert!(HyperedgeBatch::from_edges(&[e], &v, 0, Side::Question).is_err());
    }

    #[test]
    fn word_units_count_tokens() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let v = Vocab::from_kb(&kb);
        let toks = [NodeToken::entity(0), NodeToken::relation(0), NodeToken::entity(1)];
        let b = HyperedgeBatch::word_units(&toks, &v, 10, Side::Knowledge);
        assert_eq!((b.num_edges, b.max_nodes), (3, 1));
        assert_eq!(HyperedgeBatch::word_units(&toks, &v, 2, Side::Knowledge).num_edges, 2);
    }
}
