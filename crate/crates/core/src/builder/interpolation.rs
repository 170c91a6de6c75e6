use super::pipeline::Pipeline;
use super::report::StepName;
use crate::error::{Error, Result};
use crate::geometry::hat_ff;
use crate::token::{distinct_tokens, Sequence, Token};

struct Move {
    seq: usize,
    at: Token<f64>,
    to: Token<f64>,
}

fn sorted_distinct(s: &Sequence<f64>) -> Vec<Token<f64>> {
    let mut v = distinct_tokens(s.tokens(), 0.0);
    v.sort_by(|a, b| a.lex_cmp(b));
    v
}

/// Moves each collapsed location onto its output token with one hat layer per
/// move, using at most `budget` blocks. Returns the number of detours taken to
/// break cyclic dependencies between moves.
pub fn build_interpolation(
    p: &mut Pipeline,
    outputs: &[Sequence<f64>],
    budget: usize,
) -> Result<usize> {
    if outputs.len() != p.states.len() {
        return Err(Error::InvalidInput(
            "one output sequence per state is required".into(),
        ));
    }
    p.begin(StepName::Interpolation);
    let scale = p.scale().max(
        outputs
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, x| m.max(x.max_abs())),
    );
    let tol = 1e-12 * (1.0 + scale);
    let mut pending: Vec<Move> = Vec::new();
    for (j, (s, y)) in p.states.iter().zip(outputs).enumerate() {
        let from = sorted_distinct(s);
        let to = sorted_distinct(y);
        if from.len() != to.len() {
            return Err(Error::construction(
                "interpolation",
                format!(
                    "sequence {j} has {} distinct tokens but {} outputs",
                    from.len(),
                    to.len()
                ),
            ));
        }
        for (at, to) in from.into_iter().zip(to) {
            if at.dist(&to) <= tol {
                continue;
            }
            if let Some(other) = pending.iter().find(|m| m.at == at) {
                if other.to.dist(&to) > tol {
                    return Err(Error::construction(
                        "interpolation",
                        format!(
                            "sequences {} and {j} share a location with different targets",
                            other.seq
                        ),
                    ));
                }
                continue;
            }
            pending.push(Move { seq: j, at, to });
        }
    }

    let mut used = 0;
    let mut detours = 0;
    while !pending.is_empty() {
        if used == budget {
            return Err(Error::construction(
                "interpolation",
                format!(
                    "{} moves left but the block budget of {budget} is spent",
                    pending.len()
                ),
            ));
        }
        let ready = (0..pending.len()).find(|&i| {
            pending
                .iter()
                .enumerate()
                .all(|(k, m)| k == i || m.at.dist(&pending[i].to) > tol)
        });
        let union = p.union_locations();
        let (i, target) = match ready {
            Some(i) => (i, pending[i].to.clone()),
            None => {
                // Every target is occupied by another pending location: park one
                // location beyond everything and retry.
                let mut top = vec![f64::NEG_INFINITY; p.d];
                for x in union.iter().chain(pending.iter().map(|m| &m.to)) {
                    for (a, c) in top.iter_mut().zip(x.iter_coords()) {
                        *a = a.max(c);
                    }
                }
                detours += 1;
                (0, Token(top.into_iter().map(|c| c + 2.0).collect()))
            }
        };
        let at = union
            .iter()
            .position(|u| *u == pending[i].at)
            .ok_or_else(|| {
                Error::construction(
                    "interpolation",
                    "pending location disappeared from the states",
                )
            })?;
        let ff = hat_ff(&union, at, &target).map_err(|e| {
            Error::construction(
                "interpolation",
                format!("moving a token of sequence {}: {e}", pending[i].seq),
            )
        })?;
        let id = p.identity_sa();
        p.push(ff, id)?;
        used += 1;
        // Locations are fixed or moved only up to rounding; follow their exact images.
        let ff = &p.model.blocks.last().expect("just pushed").ff;
        for m in pending.iter_mut() {
            m.at = ff.apply(&m.at)?;
        }
        if ready.is_some() {
            pending.remove(i);
        }
    }
    p.end();
    Ok(detours)
}
