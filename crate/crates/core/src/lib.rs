//! Hypergraph transformer for weakly-supervised multi-hop question answering
//! over a knowledge base.
//!
//! This crate is `no_std` (with `alloc`) and contains no IO. It covers the
//! knowledge-base index, exact-match entity linking, hypergraph construction by
//! multi-hop graph walks, a small reverse-mode tensor engine, the guided/self
//! attention model, the training loop and a synthetic dataset generator.
//! File formats, checkpoints and the command line live in the `hgt` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod hypergraph;
pub mod kb;
pub mod linker;
pub mod model;
pub mod tensor;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod text;
pub mod train;

pub use hypergraph::{Hyperedge, HypergraphConfig, HypergraphPair, NodeKind, NodeToken, Side};
pub use kb::{EntityId, KnowledgeBase, RelationId, Triplet};
pub use linker::LinkResult;
