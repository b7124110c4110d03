//! Unsupervised sentence similarity through expectation-correction and
//! recursive optimal transport.
//!
//! This crate is the allocation-only algorithmic core: vector stores,
//! preprocessing converters, recursive phrase partitions, entropic and
//! prior-regularized Sinkhorn solvers, the similarity family built on top of
//! them, and the correlation/bootstrap statistics used to evaluate it.
//! File formats, the benchmark runner and the command-line tool live in the
//! `rots` companion crate.
#![no_std]
// `!(x > 0.0)` guards reject NaN too; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

extern crate alloc;

pub mod embeddings;
pub mod error;
pub mod linalg;
pub mod preprocess;
pub mod rpp;
pub mod sequence;
pub mod similarity;
pub mod stats;
pub mod transport;

pub use embeddings::{EmbeddingStore, FrequencyTable};
pub use error::{Error, Result};
pub use preprocess::{PipelineSetup, SentencePreprocessor};
pub use rpp::{DependencyTree, RecursivePhrasePartition};
pub use sequence::{PhraseSequence, WeightedSequence, WeightedVectors};
pub use similarity::{Aggregation, LevelScores, Method, SimilarityConfig};
pub use transport::{AlignmentMatrix, PriorMatrix, TransportProblem};
