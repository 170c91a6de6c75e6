//! Exact sequence-to-sequence interpolation with small transformers.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod cli;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod gen;
pub mod geometry;
pub mod io;
pub mod layers;
pub mod matrix;
pub mod metric;
pub mod scalar;
pub mod token;
pub mod training;
pub mod transformer;

pub use dataset::{validate_dataset, Dataset, SequencePair, Violation};
pub use error::{Error, Result};
pub use layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
pub use matrix::{AttentionMatrix, DenseMatrix};
pub use metric::{directed_hausdorff, hausdorff_distance, sequences_equal_as_sets};
pub use scalar::Scalar;
pub use token::{Sequence, Token};
pub use transformer::{param_count, transformer_apply, Transformer, TransformerBlock};

pub type Token64 = Token<f64>;
pub type Token32 = Token<f32>;
pub type Sequence64 = Sequence<f64>;
pub type Sequence32 = Sequence<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Transformer64 = Transformer<f64>;
pub type Transformer32 = Transformer<f32>;
