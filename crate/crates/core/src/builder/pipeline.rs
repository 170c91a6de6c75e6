use serde::{Deserialize, Serialize};

use super::report::{BlockShape, Snapshot, StepName, StepRecord};
use crate::error::{Error, Result};
use crate::layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
use crate::token::{distinct_tokens, Sequence, Token};
use crate::transformer::{Transformer, TransformerBlock};

/// Temperature chosen for one softmax self-attention layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRecord {
    pub block: usize,
    pub step: StepName,
    pub tau: f64,
    pub halvings: u32,
    /// Whether the layer's predicate fails at `2τ` (`None` when `τ = 1`).
    pub doubled_fails: Option<bool>,
}

const MAX_HALVINGS: u32 = 60;

/// Largest `τ = 2^{-k}`, `k ≤ 60`, for which `predicate` holds on the softmax
/// outputs of `template` (whose own kind is ignored).
pub fn calibrate_tau<F>(
    template: &SelfAttentionLayer<f64>,
    states: &[Sequence<f64>],
    predicate: F,
) -> Result<(f64, u32)>
where
    F: Fn(&[Sequence<f64>]) -> bool,
{
    let mut tau = 1.0;
    for k in 0..=MAX_HALVINGS {
        let layer = template.with_kind(AttentionKind::Softmax { tau });
        let out: Vec<Sequence<f64>> = states
            .iter()
            .map(|s| layer.apply(s))
            .collect::<Result<_>>()?;
        if out.iter().all(|s| s.is_finite()) && predicate(&out) {
            return Ok((tau, k));
        }
        tau *= 0.5;
    }
    Err(Error::Calibration {
        halvings: MAX_HALVINGS,
        detail: "softmax layer does not reach the hardmax behaviour at any tried temperature"
            .into(),
    })
}

#[derive(Debug, Clone)]
enum Mode {
    Hardmax,
    Softmax { fixed: Option<f64> },
}

/// Construction state: the current image of every input sequence and the
/// blocks emitted so far.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub d: usize,
    pub states: Vec<Sequence<f64>>,
    pub model: Transformer<f64>,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub taus: Vec<TauRecord>,
    mode: Mode,
    current: Option<StepName>,
}

impl Pipeline {
    pub fn hardmax(d: usize, inputs: Vec<Sequence<f64>>) -> Self {
        Self::with_mode(d, inputs, Mode::Hardmax)
    }

    /// Softmax pipeline; with `fixed_tau` every attention layer uses that
    /// temperature instead of a calibrated one.
    pub fn softmax(d: usize, inputs: Vec<Sequence<f64>>, fixed_tau: Option<f64>) -> Self {
        Self::with_mode(d, inputs, Mode::Softmax { fixed: fixed_tau })
    }

    fn with_mode(d: usize, inputs: Vec<Sequence<f64>>, mode: Mode) -> Self {
        Pipeline {
            d,
            states: inputs,
            model: Transformer::new(d),
            steps: Vec::new(),
            snapshots: Vec::new(),
            taus: Vec::new(),
            mode,
            current: None,
        }
    }

    pub fn is_softmax(&self) -> bool {
        matches!(self.mode, Mode::Softmax { .. })
    }

    pub fn identity_sa(&self) -> SelfAttentionLayer<f64> {
        SelfAttentionLayer::identity(match self.mode {
            Mode::Hardmax => AttentionKind::Hardmax,
            Mode::Softmax { fixed } => AttentionKind::Softmax {
                tau: fixed.unwrap_or(1.0),
            },
        })
    }

    pub fn begin(&mut self, step: StepName) {
        self.current = Some(step);
        self.steps.push(StepRecord {
            step,
            blocks: 0,
            shapes: Vec::new(),
        });
    }

    pub fn end(&mut self) {
        if let Some(step) = self.current.take() {
            self.snapshots.push(Snapshot {
                after: step,
                states: self.states.clone(),
            });
        }
    }

    /// Appends `SA ∘ FF` and advances every state through it.
    pub fn push(&mut self, ff: FeedForwardLayer<f64>, sa: SelfAttentionLayer<f64>) -> Result<()> {
        let block = TransformerBlock { ff, sa };
        let next: Vec<Sequence<f64>> = self
            .states
            .iter()
            .map(|s| block.apply(s))
            .collect::<Result<_>>()?;
        if let Some((j, _)) = next.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::construction(
                "block",
                format!(
                    "block {} produces non-finite tokens in sequence {j}",
                    self.model.num_blocks()
                ),
            ));
        }
        let shape = BlockShape::of(&block.ff, &block.sa);
        let record = self.steps.last_mut().expect("push outside a step");
        record.blocks += 1;
        record.shapes.push(shape);
        self.model.push(block);
        self.states = next;
        Ok(())
    }

    /// Turns a hardmax attention layer into the one actually emitted: itself for
    /// the hardmax builder, a calibrated (or fixed-τ) softmax layer otherwise.
    /// `predicate` judges the softmax outputs given the FF outputs `ff_states`.
    pub fn finalize_sa<F>(
        &mut self,
        hard: SelfAttentionLayer<f64>,
        ff_states: &[Sequence<f64>],
        predicate: F,
    ) -> Result<SelfAttentionLayer<f64>>
    where
        F: Fn(&[Sequence<f64>]) -> bool,
    {
        let fixed = match self.mode {
            Mode::Hardmax => return Ok(hard),
            Mode::Softmax { fixed } => fixed,
        };
        let step = self.current.unwrap_or(StepName::Separation);
        let block = self.model.num_blocks();
        let (tau, halvings) = match fixed {
            Some(tau) => {
                let layer = hard.with_kind(AttentionKind::Softmax { tau });
                let out: Vec<Sequence<f64>> = ff_states
                    .iter()
                    .map(|s| layer.apply(s))
                    .collect::<Result<_>>()?;
                if !predicate(&out) {
                    return Err(Error::Calibration {
                        halvings: 0,
                        detail: format!(
                            "fixed temperature {tau} fails at block {block} ({})",
                            step.as_str()
                        ),
                    });
                }
                (tau, 0)
            }
            None => calibrate_tau(&hard, ff_states, &predicate)?,
        };
        let doubled_fails = (fixed.is_none() && tau < 1.0).then(|| {
            let layer = hard.with_kind(AttentionKind::Softmax { tau: 2.0 * tau });
            let out: Result<Vec<Sequence<f64>>> =
                ff_states.iter().map(|s| layer.apply(s)).collect();
            out.map(|o| !predicate(&o)).unwrap_or(true)
        });
        self.taus.push(TauRecord {
            block,
            step,
            tau,
            halvings,
            doubled_fails,
        });
        Ok(hard.with_kind(AttentionKind::Softmax { tau }))
    }

    /// Pairwise-distinct current locations over all sequences.
    pub fn union_locations(&self) -> Vec<Token<f64>> {
        let all: Vec<Token<f64>> = self.states.iter().flat_map(|s| s.iter().cloned()).collect();
        distinct_tokens(&all, 0.0)
    }

    /// Largest coordinate magnitude over all states.
    pub fn scale(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, x| m.max(x.max_abs()))
    }
}
