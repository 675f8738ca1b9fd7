//! The hypergraph transformer: hyperedge embedding, guided-attention and
//! self-attention stacks, aggregation and the two answer predictors.

mod batch;
mod embedding;
mod encoder;
mod params;
mod trace;
mod vocab;

pub use batch::HyperedgeBatch;
pub use embedding::{build_embedding_table, EmbeddingCoverage, WordVectors};
pub use encoder::{
    embed_hyperedges, encode, guided_attention_block, joint_representation, predict_logits, predict_mlp,
    predict_similarity, self_attention_block, Encoded, ForwardCtx,
};
pub use params::{BlockParams, ModelParams, PredictorParams};
pub use trace::{AttentionTrace, Direction, TraceEntry};
pub use vocab::Vocab;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(&'static str),
    #[error("{0} side has no real hyperedges")]
    EmptySide(&'static str),
    #[error("hyperedge with {len} nodes exceeds width {width}")]
    EdgeTooLong { len: usize, width: usize },
    #[error("token row {row} outside vocabulary of {vocab}")]
    TokenOutOfRange { row: usize, vocab: usize },
    #[error("answer space is empty")]
    NoAnswers,
    #[error("word vector for {word:?} has {got} dims, expected {expected}")]
    VectorDim { word: alloc::string::String, got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Mlp,
    Similarity,
}

/// How one side is fed to the attention stacks: whole hyperedges, or every
/// node token as its own length-1 row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputUnit {
    Hyperedge,
    WordUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InputFormat {
    pub question: InputUnit,
    pub knowledge: InputUnit,
}

impl InputFormat {
    pub const HYPEREDGE: Self = Self { question: InputUnit::Hyperedge, knowledge: InputUnit::Hyperedge };
    pub const WORD_UNIT: Self = Self { question: InputUnit::WordUnit, knowledge: InputUnit::WordUnit };

    pub fn has_word_units(&self) -> bool {
        self.question == InputUnit::WordUnit || self.knowledge == InputUnit::WordUnit
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Node embedding width.
    pub w: usize,
    /// Hyperedge embedding width after the side projection.
    pub d: usize,
    /// Attention width.
    pub d_v: usize,
    pub heads: usize,
    pub n_guided_blocks: usize,
    pub n_self_blocks: usize,
    pub dropout: f64,
    pub positional_embeddings: bool,
    /// Node slots per question row (`max_n`, or 1 for word units).
    pub question_width: usize,
    /// Node slots per knowledge row (`2 * n_hops + 1`, or 1 for word units).
    pub knowledge_width: usize,
    pub predictor: PredictorKind,
    pub input: InputFormat,
    /// Use the knowledge-direction guided blocks for both directions.
    pub share_guided: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            w: 300,
            d: 300,
            d_v: 300,
            heads: 4,
            n_guided_blocks: 2,
            n_self_blocks: 3,
            dropout: 0.1,
            positional_embeddings: true,
            question_width: 3,
            knowledge_width: 5,
            predictor: PredictorKind::Mlp,
            input: InputFormat::HYPEREDGE,
            share_guided: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.w == 0 || self.d == 0 || self.d_v == 0 {
            return Err(ModelError::Config("w, d and d_v must be positive"));
        }
        if self.heads == 0 || !self.d_v.is_multiple_of(self.heads) {
            return Err(ModelError::Config("d_v must be divisible by heads"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config("dropout must lie in [0, 1)"));
        }
        if self.question_width == 0 || self.knowledge_width == 0 {
            return Err(ModelError::Config("row widths must be positive"));
        }
        Ok(())
    }

    /// Set the row widths implied by walk depth, n-gram size and input format.
    pub fn with_widths(mut self, n_hops: usize, max_n: usize) -> Self {
        self.question_width = match self.input.question {
            InputUnit::Hyperedge => max_n,
            InputUnit::WordUnit => 1,
        };
        self.knowledge_width = match self.input.knowledge {
            InputUnit::Hyperedge => 2 * n_hops + 1,
            InputUnit::WordUnit => 1,
        };
        self
    }
}
