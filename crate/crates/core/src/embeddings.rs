//! Word vector tables and unigram frequency tables.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Token to dense vector table. Vectors are stored contiguously as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    index: BTreeMap<String, usize>,
    tokens: Vec<String>,
    data: Vec<f64>,
}

/// Result of [`EmbeddingStore::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Added,
    /// The token was already present; the first vector is kept.
    Duplicate,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, index: BTreeMap::new(), tokens: Vec::new(), data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<Insert> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        if self.index.contains_key(token) {
            return Ok(Insert::Duplicate);
        }
        self.index.insert(token.into(), self.tokens.len());
        self.tokens.push(token.into());
        self.data.extend_from_slice(vector);
        Ok(Insert::Added)
    }

    /// Exact-match lookup, falling back to the lowercased token.
    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        if let Some(&i) = self.index.get(token) {
            return Some(self.row(i));
        }
        let lower = token.to_lowercase();
        if lower != token {
            return self.index.get(lower.as_str()).map(|&i| self.row(i));
        }
        None
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), self.row(i)))
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1)).take(self.tokens.len())
    }

    /// Applies `f` to every stored vector in place.
    pub fn transform<F: FnMut(&mut [f64])>(&mut self, mut f: F) {
        if self.dim == 0 {
            return;
        }
        for v in self.data.chunks_exact_mut(self.dim) {
            f(v);
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Unigram counts with derived probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` occurrences; duplicate tokens accumulate.
    pub fn add(&mut self, token: &str, count: u64) {
        *self.counts.entry(token.into()).or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `count / total`, or 0 for unseen tokens. Falls back to the lowercased
    /// token like [`EmbeddingStore::lookup`].
    pub fn probability(&self, token: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let c = match self.counts.get(token) {
            Some(&c) => c,
            None => self.count(&token.to_lowercase()),
        };
        c as f64 / self.total as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }
}
