use super::leaders::Placement;
use super::pipeline::Pipeline;
use super::report::StepName;
use crate::dynamics::check_partial_hypotheses;
use crate::error::{Error, Result};
use crate::layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
use crate::matrix::AttentionMatrix;

/// `ρ = 0`, `V = I`, `A = I`: every non-leader jumps onto the apex of its sequence.
pub(crate) fn apex_layer() -> SelfAttentionLayer<f64> {
    SelfAttentionLayer {
        rho: 0.0,
        v: AttentionMatrix::identity(),
        a: AttentionMatrix::identity(),
        kind: AttentionKind::Hardmax,
    }
}

pub(crate) fn check_placed(p: &Pipeline, placement: &Placement) -> Result<()> {
    for (j, s) in p.states.iter().enumerate() {
        check_partial_hypotheses(s, &placement.leaders[j], placement.radii[j])
            .map_err(|e| Error::construction("collapse", format!("sequence {j}: {e}")))?;
    }
    Ok(())
}

/// One hardmax block after which sequence `j` holds exactly `m^j` distinct tokens.
pub fn build_collapse(p: &mut Pipeline, placement: &Placement) -> Result<()> {
    check_placed(p, placement)?;
    p.begin(StepName::Collapse);
    p.push(FeedForwardLayer::identity(p.d), apex_layer())?;
    for (j, s) in p.states.iter().enumerate() {
        let m = placement.leaders[j].len();
        if s.distinct_count(0.0) != m {
            return Err(Error::Verification(format!(
                "sequence {j} has {} distinct tokens after collapse, expected {m}",
                s.distinct_count(0.0)
            )));
        }
    }
    p.end();
    Ok(())
}
