use serde::{Deserialize, Serialize};

use crate::layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
use crate::matrix::AttentionMatrix;
use crate::token::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepName {
    Separation,
    LeaderSelection,
    Collapse,
    Interpolation,
}

impl StepName {
    pub fn as_str(self) -> &'static str {
        match self {
            StepName::Separation => "separation",
            StepName::LeaderSelection => "leader_selection",
            StepName::Collapse => "collapse",
            StepName::Interpolation => "interpolation",
        }
    }
}

/// Shape and nonzero-parameter count of one emitted block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockShape {
    pub ff_width: usize,
    pub ff_residual: bool,
    pub ff_params: usize,
    /// `identity`, or the form of `A` (`rank_one`, `scaled_identity`, `dense`).
    pub sa: String,
    pub sa_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl BlockShape {
    pub fn of(ff: &FeedForwardLayer<f64>, sa: &SelfAttentionLayer<f64>) -> Self {
        let sa_form = if sa.v.is_zero() && sa.rho == 1.0 {
            "identity"
        } else {
            match sa.a {
                AttentionMatrix::RankOne { .. } => "rank_one",
                AttentionMatrix::ScaledIdentity(_) => "scaled_identity",
                AttentionMatrix::Dense(_) => "dense",
            }
        };
        BlockShape {
            ff_width: ff.width(),
            ff_residual: ff.eta != 0.0,
            ff_params: ff.param_count(),
            sa: sa_form.to_string(),
            sa_params: sa.param_count(),
            tau: match sa.kind {
                AttentionKind::Softmax { tau } => Some(tau),
                AttentionKind::Hardmax => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: StepName,
    pub blocks: usize,
    pub shapes: Vec<BlockShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub after: StepName,
    pub states: Vec<Sequence<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub mode: String,
    pub d: usize,
    pub n_sequences: usize,
    pub sum_m: usize,
    pub steps: Vec<StepRecord>,
    /// Total number of blocks `L`.
    #[serde(rename = "L")]
    pub num_blocks: usize,
    /// Nonzero-parameter count `P`.
    #[serde(rename = "P")]
    pub param_count: usize,
    #[serde(rename = "bound_L")]
    pub bound_blocks: usize,
    /// `P / (d Σm)`.
    #[serde(rename = "bound_P_coeff")]
    pub param_coeff: f64,
    pub max_width: usize,
    pub delta1: f64,
    pub detours: usize,
    pub distances: Vec<f64>,
    pub intermediate_states: Vec<Snapshot>,
}

impl ConstructionReport {
    pub fn blocks_in(&self, step: StepName) -> usize {
        self.steps
            .iter()
            .filter(|s| s.step == step)
            .map(|s| s.blocks)
            .sum()
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn within_bound(&self) -> bool {
        self.num_blocks <= self.bound_blocks
    }
}
