use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{FeedForwardLayer, SelfAttentionLayer};
use crate::scalar::Scalar;
use crate::token::Sequence;

/// One feed-forward layer followed by one self-attention layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct TransformerBlock<T> {
    pub ff: FeedForwardLayer<T>,
    pub sa: SelfAttentionLayer<T>,
}

impl<T: Scalar> TransformerBlock<T> {
    pub fn apply(&self, xs: &Sequence<T>) -> Result<Sequence<T>> {
        let h = self.ff.apply_sequence(xs)?;
        self.sa.apply(&h)
    }

    pub fn param_count(&self) -> usize {
        self.ff.param_count() + self.sa.param_count()
    }
}

/// Composition `(SA^L ∘ FF^L) ∘ ⋯ ∘ (SA^1 ∘ FF^1)` acting on sequences in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Transformer<T> {
    pub d: usize,
    pub blocks: Vec<TransformerBlock<T>>,
}

impl<T: Scalar> Transformer<T> {
    pub fn new(d: usize) -> Self {
        Transformer {
            d,
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, block: TransformerBlock<T>) {
        self.blocks.push(block);
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Checks every layer acts on `R^d`.
    pub fn validate(&self) -> Result<()> {
        for (k, block) in self.blocks.iter().enumerate() {
            block
                .ff
                .check()
                .map_err(|e| Error::Dimension(format!("block {k}: {e}")))?;
            if block.ff.dim() != self.d {
                return Err(Error::Dimension(format!(
                    "block {k}: feed-forward layer acts on R^{}, transformer on R^{}",
                    block.ff.dim(),
                    self.d
                )));
            }
            block
                .sa
                .check(self.d)
                .map_err(|e| Error::Dimension(format!("block {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn apply(&self, xs: &Sequence<T>) -> Result<Sequence<T>> {
        if xs.dim() != self.d {
            return Err(Error::Dimension(format!(
                "sequence in R^{} fed to a transformer on R^{}",
                xs.dim(),
                self.d
            )));
        }
        self.blocks
            .iter()
            .try_fold(xs.clone(), |x, block| block.apply(&x))
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(TransformerBlock::param_count).sum()
    }

    pub fn max_width(&self) -> usize {
        self.blocks.iter().map(|b| b.ff.width()).max().unwrap_or(0)
    }
}

pub fn transformer_apply<T: Scalar>(t: &Transformer<T>, xs: &Sequence<T>) -> Result<Sequence<T>> {
    t.apply(xs)
}

/// Nonzero scalars across all layers; tagged attention matrices count in stored form.
pub fn param_count<T: Scalar>(t: &Transformer<T>) -> usize {
    t.param_count()
}
