//! Node embedding initialization from pretrained word vectors.
//!
//! A node whose surface has several words gets the mean of the vectors found;
//! a node with no known word gets a uniform(-0.5/w, 0.5/w) row seeded by its
//! surface, so equal surfaces (a relation and the question word naming it)
//! start from the same vector.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Vocab};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Later duplicates overwrite earlier ones.
    pub fn insert(&mut self, word: &str, v: Vec<f64>) -> Result<(), ModelError> {
        if v.len() != self.dim {
            return Err(ModelError::VectorDim { word: String::from(word), got: v.len(), expected: self.dim });
        }
        self.vectors.insert(String::from(word), v);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingCoverage {
    /// Symbols (PAD excluded).
    pub symbols: usize,
    /// Symbols with at least one pretrained word.
    pub covered: usize,
    pub coverage: f64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// The seeded random row used for a surface with no pretrained word.
pub fn oov_row(surface: &str, w: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(surface));
    let a = 0.5 / w as f64;
    (0..w).map(|_| rng.random_range(-a..a)).collect()
}

pub fn build_embedding_table(
    vocab: &Vocab,
    vectors: Option<&WordVectors>,
    w: usize,
    oov_seed: u64,
) -> Result<(Matrix, EmbeddingCoverage), ModelError> {
    if let Some(v) = vectors {
        if v.dim() != w {
            return Err(ModelError::VectorDim { word: String::from("<file>"), got: v.dim(), expected: w });
        }
    }
    let mut table = Matrix::zeros(vocab.len(), w);
    let mut covered = 0;
    for row in 1..vocab.len() {
        let token = vocab.token(row).expect("non-PAD row");
        let surface = vocab.surface(token);
        let mut sum = alloc::vec![0.0; w];
        let mut found = 0usize;
        if let Some(v) = vectors {
            for word in surface.split(' ') {
                if let Some(vec) = v.get(word) {
                    sum.iter_mut().zip(vec).for_each(|(s, x)| *s += x);
                    found += 1;
                }
            }
        }
        if found > 0 {
            covered += 1;
            sum.iter_mut().for_each(|s| *s /= found as f64);
            table.row_mut(row).copy_from_slice(&sum);
        } else {
            table.row_mut(row).copy_from_slice(&oov_row(surface, w, oov_seed));
        }
    }
    let symbols = vocab.len() - 1;
    let coverage = if symbols == 0 { 0.0 } else { covered as f64 / symbols as f64 };
    Ok((table, EmbeddingCoverage { symbols, covered, coverage }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::NodeToken;
    use crate::kb::KnowledgeBase;
    use alloc::vec;

    #[test]
    fn multiword_nodes_are_mean_pooled() {
        let kb = KnowledgeBase::from_triples([("barack obama", "spouse", "zzzqq")]).unwrap();
        let vocab = Vocab::from_kb(&kb);
        let mut wv = WordVectors::new(2);
        wv.insert("barack", vec![1.0, 2.0]).unwrap();
        wv.insert("obama", vec![3.0, -2.0]).unwrap();
        let (t, cov) = build_embedding_table(&vocab, Some(&wv), 2, 9).unwrap();
        let row = vocab.row(NodeToken::entity(kb.entity("barack obama").unwrap().0));
        assert_eq!(t.row(row), &[2.0, 0.0]);
        assert_eq!(t.row(Vocab::PAD), &[0.0, 0.0]);
        assert_eq!(cov.covered, 1);
    }

    #[test]
    fn oov_rows_are_seeded_and_bounded() {
        let kb = KnowledgeBase::from_triples([("zzzqq", "r", "b")]).unwrap();
        let vocab = Vocab::from_kb(&kb);
        let (a, _) = build_embedding_table(&vocab, None, 8, 3).unwrap();
        let (b, _) = build_embedding_table(&vocab, None, 8, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|x| x.abs() < 0.5 / 8.0));
        let (c, _) = build_embedding_table(&vocab, None, 8, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn equal_surfaces_share_oov_init() {
        let kb = KnowledgeBase::from_triples([("e1", "born in", "e2")]).unwrap();
        let mut vocab = Vocab::from_kb(&kb);
        let w = vocab.add_word("born in");
        let (t, _) = build_embedding_table(&vocab, None, 4, 1).unwrap();
        assert_eq!(t.row(vocab.row(NodeToken::relation(0))), t.row(vocab.row(NodeToken::word(w))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut wv = WordVectors::new(3);
        assert!(wv.insert("a", vec![1.0]).is_err());
        let kb = KnowledgeBase::from_triples([("a", "r", "b")]).unwrap();
        assert!(build_embedding_table(&Vocab::from_kb(&kb), Some(&wv), 4, 0).is_err());
    }
}
