use serde::{Deserialize, Serialize};

use super::pipeline::Pipeline;
use super::report::StepName;
use crate::error::{Error, Result};
use crate::geometry::hat_ff;
use crate::layers::FeedForwardLayer;
use crate::token::Token;

/// Where the leader-selection step puts each sequence's leaders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Coordinate range `[a1, a2]` of the shifted tokens.
    pub a1: f64,
    pub a2: f64,
    /// Per-sequence radius `t_j`: the apex sits at `t_j 1_d`, the other leaders on
    /// the sphere of radius `t_j` in the negative orthant.
    pub radii: Vec<f64>,
    /// Leader token indices per sequence; the first one is the apex.
    pub leaders: Vec<Vec<usize>>,
    pub targets: Vec<Vec<Token<f64>>>,
}

impl Placement {
    pub fn all_targets(&self) -> impl Iterator<Item = &Token<f64>> {
        self.targets.iter().flatten()
    }
}

fn sphere_direction(d: usize, r: usize) -> Token<f64> {
    let mut v = Token::splat(d, 1.0);
    v.0[0] += (r - 1) as f64;
    v.normalized()
}

pub(crate) fn plan_placement(d: usize, a1: f64, a2: f64, ms: &[usize]) -> Placement {
    let sd = (d as f64).sqrt();
    let radii: Vec<f64> = (0..ms.len())
        .map(|j| a2 + 3.0 * (j + 1) as f64 / sd)
        .collect();
    let targets = ms
        .iter()
        .zip(&radii)
        .map(|(&m, &t)| {
            (0..m)
                .map(|r| {
                    if r == 0 {
                        Token::splat(d, t)
                    } else {
                        sphere_direction(d, r).scale(-t)
                    }
                })
                .collect()
        })
        .collect();
    Placement {
        a1,
        a2,
        radii,
        leaders: ms.iter().map(|&m| (0..m).collect()).collect(),
        targets,
    }
}

/// Shifts every token into the positive cube, then moves the first `m^j` tokens of
/// each sequence to their leader positions, one hat layer per leader.
///
/// With `hold_last` the final hat layer is returned instead of emitted, so the
/// caller can pair it with its own attention layer.
pub fn build_leader_selection(
    p: &mut Pipeline,
    ms: &[usize],
    hold_last: bool,
) -> Result<(Placement, Option<FeedForwardLayer<f64>>)> {
    if ms.len() != p.states.len() {
        return Err(Error::InvalidInput(
            "one output size per sequence is required".into(),
        ));
    }
    p.begin(StepName::LeaderSelection);
    let low = p
        .states
        .iter()
        .flat_map(|s| s.iter())
        .flat_map(|x| x.iter_coords())
        .fold(f64::INFINITY, f64::min);
    let id = p.identity_sa();
    p.push(
        FeedForwardLayer::constant_shift(&Token::splat(p.d, 1.0 + low.abs())),
        id,
    )?;
    let coords = || {
        p.states
            .iter()
            .flat_map(|s| s.iter())
            .flat_map(|x| x.iter_coords())
    };
    let a1 = coords().fold(f64::INFINITY, f64::min);
    let a2 = coords().fold(f64::NEG_INFINITY, f64::max);
    let placement = plan_placement(p.d, a1, a2, ms);

    let total: usize = ms.iter().sum();
    let mut done = 0;
    let mut held = None;
    for (j, targets) in placement.targets.iter().enumerate() {
        for (r, y) in targets.iter().enumerate() {
            let union = p.union_locations();
            let scale = p.scale().max(y.max_abs());
            if union.iter().any(|u| u.dist(y) <= 1e-9 * (1.0 + scale)) {
                return Err(Error::construction(
                    "leader_selection",
                    format!("leader position {r} of sequence {j} is occupied"),
                ));
            }
            let x = &p.states[j][placement.leaders[j][r]];
            let at = union
                .iter()
                .position(|u| u == x)
                .expect("token is a location");
            let ff = hat_ff(&union, at, y).map_err(|e| {
                Error::construction(
                    "leader_selection",
                    format!("moving leader {r} of sequence {j}: {e}"),
                )
            })?;
            done += 1;
            if hold_last && done == total {
                held = Some(ff);
            } else {
                let id = p.identity_sa();
                p.push(ff, id)?;
            }
        }
    }
    if !hold_last {
        p.end();
    }
    Ok((placement, held))
}
