//! Weighted bags of vectors: the unit every similarity consumes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm};

/// Anything that exposes parallel weights and vectors of one dimension.
pub trait WeightedVectors {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn weight(&self, i: usize) -> f64;
    fn vector(&self, i: usize) -> &[f64];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Additive-composition embedding `sum_i w_i v_i`.
    fn embedding(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for i in 0..self.len() {
            axpy(self.weight(i), self.vector(i), &mut x);
        }
        x
    }

    /// `sum_i w_i ||v_i||`, the unnormalized transport mass.
    fn total_mass(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i) * norm(self.vector(i))).sum()
    }
}

/// Tokens of one sentence with their weights and (possibly transformed) vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence {
    tokens: Vec<String>,
    weights: Vec<f64>,
    dim: usize,
    vectors: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(dim: usize) -> Self {
        Self { tokens: Vec::new(), weights: Vec::new(), dim, vectors: Vec::new() }
    }

    pub fn push(&mut self, token: impl Into<String>, weight: f64, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        self.tokens.push(token.into());
        self.weights.push(weight);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    /// Builds a sequence from weights and vectors, naming tokens by position.
    pub fn from_parts(weights: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != vectors.len() {
            return Err(Error::Shape(alloc::format!(
                "{} weights for {} vectors",
                weights.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut ws = Self::new(dim);
        for (i, (w, v)) in weights.into_iter().zip(vectors).enumerate() {
            ws.push(alloc::format!("t{i}"), w, &v)?;
        }
        Ok(ws)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors_mut(&mut self) -> core::slice::ChunksExactMut<'_, f64> {
        self.vectors.chunks_exact_mut(self.dim.max(1))
    }
}

impl WeightedVectors for WeightedSequence {
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Phrases of one partition level, each with its composed weight and vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseSequence {
    pub(crate) spans: Vec<(usize, usize)>,
    pub(crate) weights: Vec<f64>,
    pub(crate) dim: usize,
    pub(crate) vectors: Vec<f64>,
}

impl PhraseSequence {
    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl WeightedVectors for PhraseSequence {
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}
