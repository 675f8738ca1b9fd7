use alloc::string::String;
use alloc::vec::Vec;

use crate::hypergraph::{NodeKind, NodeToken};
use crate::kb::{KnowledgeBase, SymbolTable};

/// Embedding-row layout: `[PAD, entities.., relations.., words..]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entity_surfaces: Vec<String>,
    relation_surfaces: Vec<String>,
    words: SymbolTable,
}

impl Vocab {
    pub const PAD: usize = 0;

    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        Self {
            entity_surfaces: kb.entities().iter().map(|(_, s)| String::from(s)).collect(),
            relation_surfaces: kb.relations().iter().map(|(_, s)| String::from(s)).collect(),
            words: SymbolTable::new(),
        }
    }

    /// Rebuild from the per-kind surface lists (checkpoint headers store these).
    pub fn from_parts(entities: Vec<String>, relations: Vec<String>, words: Vec<String>) -> Self {
        let mut table = SymbolTable::new();
        for w in &words {
            table.intern(w);
        }
        Self { entity_surfaces: entities, relation_surfaces: relations, words: table }
    }

    pub fn add_word(&mut self, word: &str) -> u32 {
        self.words.intern(word)
    }

    pub fn word(&self, word: &str) -> Option<u32> {
        self.words.get(word)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_surfaces.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_surfaces.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    /// Number of embedding rows, PAD included.
    pub fn len(&self) -> usize {
        1 + self.entity_surfaces.len() + self.relation_surfaces.len() + self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, t: NodeToken) -> usize {
        let id = t.id as usize;
        match t.kind {
            NodeKind::Entity => 1 + id,
            NodeKind::Relation => 1 + self.entity_surfaces.len() + id,
            NodeKind::Word => 1 + self.entity_surfaces.len() + self.relation_surfaces.len() + id,
        }
    }

    pub fn token(&self, row: usize) -> Option<NodeToken> {
        let (ne, nr) = (self.entity_surfaces.len(), self.relation_surfaces.len());
        match row {
            0 => None,
            r if r <= ne => Some(NodeToken::entity((r - 1) as u32)),
            r if r <= ne + nr => Some(NodeToken::relation((r - 1 - ne) as u32)),
            r if r < self.len() => Some(NodeToken::word((r - 1 - ne - nr) as u32)),
            _ => None,
        }
    }

    pub fn surface(&self, t: NodeToken) -> &str {
        let id = t.id as usize;
        match t.kind {
            NodeKind::Entity => &self.entity_surfaces[id],
            NodeKind::Relation => &self.relation_surfaces[id],
            NodeKind::Word => self.words.surface(t.id).unwrap_or(""),
        }
    }

    pub fn entity_surfaces(&self) -> &[String] {
        &self.entity_surfaces
    }

    pub fn relation_surfaces(&self) -> &[String] {
        &self.relation_surfaces
    }

    pub fn word_surfaces(&self) -> Vec<String> {
        self.words.iter().map(|(_, s)| String::from(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout_roundtrips() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let mut v = Vocab::from_kb(&kb);
        let w = v.add_word("who");
        assert_eq!(v.len(), 1 + 2 + 1 + 1);
        for t in [NodeToken::entity(0), NodeToken::entity(1), NodeToken::relation(0), NodeToken::word(w)] {
            assert_eq!(v.token(v.row(t)), Some(t));
        }
        assert_eq!(v.token(Vocab::PAD), None);
        assert_eq!(v.surface(NodeToken::word(w)), "who");
    }
}
