//! Dense row-major matrices and a reverse-mode differentiation tape.
//!
//! Everything is two-dimensional; vectors are `1 x n` rows. Values are `f64`.

mod adam;
mod matrix;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{Axis, Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("masked_softmax: row {row} is fully masked")]
    FullyMasked { row: usize },
    #[error("backward: loss must be 1x1, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("{op}: index {index} out of range for {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("parameter {name}: shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: alloc::string::String,
        got: (usize, usize),
        expected: (usize, usize),
    },
}
