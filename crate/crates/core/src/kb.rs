//! Interned triple store with an outgoing-adjacency index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KbError {
    #[error("empty {field} field after normalization")]
    EmptyField { field: &'static str },
    #[error("knowledge base has no facts")]
    Empty,
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown entity surface {0:?}")]
    UnknownSurface(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct RelationId(pub u32);

/// Bijective surface <-> dense id table. Ids are assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    surfaces: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern an already-normalized surface.
    pub fn intern(&mut self, surface: &str) -> u32 {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.surfaces.len() as u32;
        self.surfaces.push(String::from(surface));
        self.index.insert(String::from(surface), id);
        id
    }

    pub fn get(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.surfaces.iter().enumerate().map(|(i, s)| (i as u32, s.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub head: EntityId,
    pub predicate: RelationId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KbStats {
    pub entities: usize,
    pub relations: usize,
    pub facts: usize,
    pub duplicates_dropped: usize,
}

/// Accumulates facts in insertion order; ids follow first appearance.
#[derive(Debug, Default)]
pub struct KbBuilder {
    entities: SymbolTable,
    relations: SymbolTable,
    facts: Vec<Triplet>,
    seen: BTreeSet<Triplet>,
    duplicates: usize,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Normalize and insert one fact. Returns `false` for an exact duplicate.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> Result<bool, KbError> {
        let (h, r, t) = (normalize(head), normalize(relation), normalize(tail));
        for (field, value) in [("head", &h), ("relation", &r), ("tail", &t)] {
            if value.is_empty() {
                return Err(KbError::EmptyField { field });
            }
        }
        let triplet = Triplet {
            head: EntityId(self.entities.intern(&h)),
            predicate: RelationId(self.relations.intern(&r)),
            tail: EntityId(self.entities.intern(&t)),
        };
        if !self.seen.insert(triplet) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.facts.push(triplet);
        Ok(true)
    }

    /// Finish the KB. With `add_inverse`, every fact `(h, r, t)` also yields
    /// `(t, "r inverse", h)`.
    pub fn build(mut self, add_inverse: bool) -> Result<KnowledgeBase, KbError> {
        if self.facts.is_empty() {
            return Err(KbError::Empty);
        }
        if add_inverse {
            let forward = self.facts.clone();
            for f in forward {
                let name = format!("{} inverse", self.relations.surfaces[f.predicate.0 as usize]);
                let inv = Triplet {
                    head: f.tail,
                    predicate: RelationId(self.relations.intern(&name)),
                    tail: f.head,
                };
                if self.seen.insert(inv) {
                    self.facts.push(inv);
                }
            }
        }
        let mut out_index: Vec<Vec<(RelationId, EntityId)>> = alloc::vec![Vec::new(); self.entities.len()];
        for f in &self.facts {
            out_index[f.head.0 as usize].push((f.predicate, f.tail));
        }
        for list in &mut out_index {
            list.sort_unstable();
        }
        Ok(KnowledgeBase {
            entities: self.entities,
            relations: self.relations,
            facts: self.facts,
            out_index,
            duplicates_dropped: self.duplicates,
        })
    }
}

/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entities: SymbolTable,
    relations: SymbolTable,
    facts: Vec<Triplet>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    duplicates_dropped: usize,
}

impl KnowledgeBase {
    pub fn from_triples<'a, I>(triples: I) -> Result<Self, KbError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = KbBuilder::new();
        for (h, r, t) in triples {
            b.insert(h, r, t)?;
        }
        b.build(false)
    }

    pub fn entities(&self) -> &SymbolTable {
        &self.entities
    }

    pub fn relations(&self) -> &SymbolTable {
        &self.relations
    }

    pub fn facts(&self) -> &[Triplet] {
        &self.facts
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity(&self, surface: &str) -> Option<EntityId> {
        self.entities.get(&normalize(surface)).map(EntityId)
    }

    pub fn relation(&self, surface: &str) -> Option<RelationId> {
        self.relations.get(&normalize(surface)).map(RelationId)
    }

    pub fn entity_surface(&self, e: EntityId) -> &str {
        self.entities.surface(e.0).unwrap_or("")
    }

    pub fn relation_surface(&self, r: RelationId) -> &str {
        self.relations.surface(r.0).unwrap_or("")
    }

    /// Outgoing `(predicate, tail)` pairs of `e`, ordered by `(predicate id, tail id)`.
    pub fn neighbors(&self, e: EntityId) -> Result<&[(RelationId, EntityId)], KbError> {
        self.out_index
            .get(e.0 as usize)
            .map(Vec::as_slice)
            .ok_or(KbError::UnknownEntity(e.0))
    }

    pub fn contains(&self, fact: &Triplet) -> bool {
        self.out_index
            .get(fact.head.0 as usize)
            .is_some_and(|l| l.binary_search(&(fact.predicate, fact.tail)).is_ok())
    }

    pub fn stats(&self) -> KbStats {
        KbStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            facts: self.facts.len(),
            duplicates_dropped: self.duplicates_dropped,
        }
    }

    /// Normalized facts in ingestion order, one `head\trelation\ttail` line each.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for f in &self.facts {
            out.push_str(self.entity_surface(f.head));
            out.push('\t');
            out.push_str(self.relation_surface(f.predicate));
            out.push('\t');
            out.push_str(self.entity_surface(f.tail));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triple() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        let s = kb.stats();
        assert_eq!((s.entities, s.relations, s.facts), (2, 1, 1));
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b"), ("A", "r", "b")]).unwrap();
        assert_eq!(kb.stats().facts, 1);
        assert_eq!(kb.stats().duplicates_dropped, 1);
    }

    #[test]
    fn neighbors_sorted_by_predicate_then_tail() {
        let kb = KnowledgeBase::from_triples([("a", "r", "b"), ("a", "s", "c")]).unwrap();
        let a = kb.entity("a").unwrap();
        let r = kb.relation("r").unwrap();
        let s = kb.relation("s").unwrap();
        assert!(r < s);
        assert_eq!(
            kb.neighbors(a).unwrap(),
            &[(r, kb.entity("b").unwrap()), (s, kb.entity("c").unwrap())]
        );
        assert!(kb.neighbors(kb.entity("b").unwrap()).unwrap().is_empty());
        assert_eq!(kb.neighbors(EntityId(99)), Err(KbError::UnknownEntity(99)));
    }

    #[test]
    fn empty_and_blank_fields_rejected() {
        let none: [(&str, &str, &str); 0] = [];
        assert_eq!(KnowledgeBase::from_triples(none).unwrap_err(), KbError::Empty);
        assert!(matches!(
            KnowledgeBase::from_triples([("a", " _ ", "b")]),
            Err(KbError::EmptyField { field: "relation" })
        ));
    }

    #[test]
    fn inverse_facts_materialize() {
        let mut b = KbBuilder::new();
        b.insert("a", "r", "b").unwrap();
        let kb = b.build(true).unwrap();
        let inv = kb.relation("r inverse").unwrap();
        assert_eq!(kb.neighbors(kb.entity("b").unwrap()).unwrap(), &[(inv, kb.entity("a").unwrap())]);
        assert_eq!(kb.stats().facts, 2);
    }

    #[test]
    fn tsv_roundtrip_is_normalized() {
        let kb = KnowledgeBase::from_triples([("Barack_Obama", "Spouse", "Michelle  Obama")]).unwrap();
        assert_eq!(kb.to_tsv(), "barack obama\tspouse\tmichelle obama\n");
    }
}
