use alloc::string::String;
use alloc::vec::Vec;

use super::{Matrix, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Replace every value, checking names and shapes against the current layout.
    pub fn load_values(&mut self, values: Vec<(String, Matrix)>) -> Result<(), TensorError> {
        if values.len() != self.values.len() {
            return Err(TensorError::Shape { op: "load_values", lhs: (self.values.len(), 0), rhs: (values.len(), 0) });
        }
        for (i, (name, m)) in values.iter().enumerate() {
            if name != &self.names[i] || m.shape() != self.values[i].shape() {
                return Err(TensorError::ParamShape {
                    name: name.clone(),
                    got: m.shape(),
                    expected: self.values[i].shape(),
                });
            }
        }
        self.values = values.into_iter().map(|(_, m)| m).collect();
        Ok(())
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Matrix>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.values.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.grads.iter_mut().for_each(|g| g.scale_in_place(c));
    }

    pub fn clear(&mut self) {
        self.grads.iter_mut().for_each(|g| g.data_mut().fill(0.0));
    }
}
