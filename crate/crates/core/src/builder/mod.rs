//! Explicit interpolating transformers for hardmax and softmax attention.
//!
//! Both builders run the same four steps (separation, leader selection,
//! collapse, interpolation) on `f64` data and re-derive every step from the
//! states produced by the blocks actually emitted.

mod collapse;
mod hardmax;
mod interpolation;
mod leaders;
mod pipeline;
mod report;
mod separation;
mod softmax;

pub use collapse::build_collapse;
pub use hardmax::build_hardmax;
pub use interpolation::build_interpolation;
pub use leaders::{build_leader_selection, Placement};
pub use pipeline::{calibrate_tau, Pipeline, TauRecord};
pub use report::{BlockShape, ConstructionReport, Snapshot, StepName, StepRecord};
pub use separation::build_separation;
pub use softmax::{
    build_softmax, build_softmax_fixed_tau, collapse_ff, CollapseIteration, SoftmaxPlan,
};

/// Interpolation tolerance in Hausdorff distance used by the builders.
pub const VERIFY_TOL: f64 = 1e-9;
