use serde::{Deserialize, Serialize};

use super::collapse::apex_layer;
use super::hardmax::{finish, remaining};
use super::interpolation::build_interpolation;
use super::leaders::{build_leader_selection, Placement};
use super::pipeline::{Pipeline, TauRecord};
use super::report::{ConstructionReport, StepName};
use super::separation::build_separation;
use crate::dataset::Dataset;
use crate::dynamics::check_partial_hypotheses;
use crate::error::{Error, Result};
use crate::layers::FeedForwardLayer;
use crate::matrix::DenseMatrix;
use crate::token::{Sequence, Token};
use crate::transformer::Transformer;

/// Parameters of one collapsing feed-forward layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseIteration {
    /// Sequence whose apex cloud is sent to the origin.
    pub sequence: usize,
    pub s: f64,
    pub c_pos: f64,
    pub c_neg: f64,
}

/// Quantities fixed while building the softmax transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPlan {
    /// Radius of the balls the apex clouds must stay in after the collapsing attention layer.
    pub delta: f64,
    /// Unit collapse direction in the negative orthant.
    pub w: Token<f64>,
    /// Smallest leader radius.
    pub r: f64,
    /// Smallest projection gap between placed leaders, divided by `r`.
    pub zeta: f64,
    /// Placed leader positions, all sequences.
    pub leaders: Vec<Token<f64>>,
    pub taus: Vec<TauRecord>,
    pub collapse: Vec<CollapseIteration>,
    pub tau_min: f64,
    /// A single temperature, `tau_min / 2^k`, with which a rebuild using it in every
    /// attention layer also interpolates exactly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_tau: Option<f64>,
    pub global_tau_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Non-residual width-3 layer `x ↦ −w g(⟨w, x⟩ + s)` where `g` is the
/// piecewise-linear profile
///
/// ```text
/// g(z) = relu(z + c₊) − (c₊/c₋ + 1) relu(z) + c₊/(2c₋) relu(z − c₋)
/// ```
///
/// With `w` a unit vector in the negative orthant and `p = −⟨w, x⟩`: points with
/// `p ≥ s + c₊` go to 0, `p ∈ [s, s + c₊]` lands on `[0, c₊]·(−w)` reversed, and
/// `p ≤ s − c₋` lands on the positive multiples of `w`, increasingly in `p`.
pub fn collapse_ff(w: &Token<f64>, s: f64, c_pos: f64, c_neg: f64) -> FeedForwardLayer<f64> {
    debug_assert!(c_pos > 0.0 && c_neg > 0.0);
    FeedForwardLayer {
        eta: 0.0,
        w: DenseMatrix::from_columns(&[
            w.scale(-1.0),
            w.scale(c_pos / c_neg + 1.0),
            w.scale(-c_pos / (2.0 * c_neg)),
        ]),
        u: DenseMatrix::from_row_tokens(&[w.clone(), w.clone(), w.clone()]),
        b: vec![s + c_pos, s, s - c_neg],
    }
}

/// First `w_k = −(1_d + (k/10) e_1)/‖·‖` giving distinct leader projections; returns
/// it with the smallest projection gap.
fn choose_direction(d: usize, placement: &Placement) -> Result<(Token<f64>, f64)> {
    for k in 0..=1000 {
        let mut u = Token::splat(d, 1.0);
        u.0[0] += k as f64 / 10.0;
        let u = u.normalized();
        let mut proj: Vec<f64> = placement.all_targets().map(|q| u.dot(q)).collect();
        proj.sort_by(f64::total_cmp);
        let top = proj.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        let gap = proj
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let gap = if gap.is_finite() { gap } else { 1.0 + top };
        if gap >= 1e-6 * (1.0 + top) {
            return Ok((u.scale(-1.0), gap));
        }
    }
    Err(Error::construction(
        "collapse",
        "no candidate direction separates the leader projections",
    ))
}

#[derive(Clone, Copy, PartialEq)]
enum Label {
    Cloud,
    Single,
}

/// Sends the apex cloud of every sequence to one point, farthest cloud first.
fn collapse_clouds(
    p: &mut Pipeline,
    placement: &Placement,
    w: &Token<f64>,
) -> Result<Vec<CollapseIteration>> {
    let u = w.scale(-1.0);
    let n = p.states.len();
    let labels: Vec<Vec<Label>> = p
        .states
        .iter()
        .zip(&placement.leaders)
        .map(|(s, lead)| {
            (0..s.len())
                .map(|l| {
                    if lead[1..].contains(&l) {
                        Label::Single
                    } else {
                        Label::Cloud
                    }
                })
                .collect()
        })
        .collect();
    let mut active = vec![true; n];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut spans: Vec<(usize, f64, f64)> = Vec::new();
        let mut rest = f64::NEG_INFINITY;
        for (j, s) in p.states.iter().enumerate() {
            let mut span = (f64::INFINITY, f64::NEG_INFINITY);
            for (l, x) in s.iter().enumerate() {
                let q = u.dot(x);
                if active[j] && labels[j][l] == Label::Cloud {
                    span = (span.0.min(q), span.1.max(q));
                } else {
                    rest = rest.max(q);
                }
            }
            if active[j] {
                spans.push((j, span.0, span.1));
            }
        }
        let &(far, lo_f, _) = spans
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("an active cloud");
        let others: Vec<&(usize, f64, f64)> = spans.iter().filter(|c| c.0 != far).collect();
        let hi_o = others.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c.2));
        let lo_o = others.iter().fold(f64::INFINITY, |m, c| m.min(c.1));
        let floor = if rest.is_finite() {
            rest
        } else {
            others.iter().map(|c| c.1).fold(lo_f, f64::min) - 1.0
        };
        if !(hi_o < lo_f) || !(floor < lo_o.min(lo_f)) {
            return Err(Error::construction(
                "collapse",
                "projection intervals of the clouds overlap",
            ));
        }
        let top = lo_f - (lo_f - hi_o.max(floor)) / 4.0;
        let (s, c_neg) = if others.is_empty() {
            let s = floor + (top - floor) / 2.0;
            (s, (s - floor) / 2.0)
        } else {
            (lo_o - (lo_o - floor) / 4.0, (lo_o - floor) / 2.0)
        };
        let c_pos = top - s;
        let ff = collapse_ff(w, s, c_pos, c_neg);
        let id = p.identity_sa();
        p.push(ff, id)?;
        let cloud: Vec<&Token<f64>> = p.states[far]
            .iter()
            .enumerate()
            .filter(|(l, _)| labels[far][*l] == Label::Cloud)
            .map(|(_, x)| x)
            .collect();
        if cloud.iter().any(|x| !x.is_zero()) {
            return Err(Error::Verification(format!(
                "cloud of sequence {far} did not reach the origin"
            )));
        }
        active[far] = false;
        out.push(CollapseIteration {
            sequence: far,
            s,
            c_pos,
            c_neg,
        });
    }
    Ok(out)
}

fn build(
    ds: &Dataset<f64>,
    fixed_tau: Option<f64>,
) -> Result<(Transformer<f64>, ConstructionReport, SoftmaxPlan)> {
    ds.validate()?;
    let ms = ds.output_lengths();
    let n = ds.len();
    let bound = 2 * ds.total_output_len() + 3 * n;
    let mut p = Pipeline::softmax(ds.d, ds.inputs(), fixed_tau);
    let delta1 = build_separation(&mut p)?;

    let (placement, held) = build_leader_selection(&mut p, &ms, true)?;
    let held = held.expect("at least one leader");
    let (w, gap) = choose_direction(ds.d, &placement)?;
    let delta = gap / 20.0;
    let r = placement
        .radii
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let ff_states: Vec<Sequence<f64>> = p
        .states
        .iter()
        .map(|s| held.apply_sequence(s))
        .collect::<Result<_>>()?;
    for (j, s) in ff_states.iter().enumerate() {
        check_partial_hypotheses(s, &placement.leaders[j], placement.radii[j])
            .map_err(|e| Error::construction("collapse", format!("sequence {j}: {e}")))?;
    }
    // The collapsing attention layer shares the block of the last leader move.
    let hard = apex_layer();
    let target: Vec<Sequence<f64>> = ff_states
        .iter()
        .map(|s| hard.apply(s))
        .collect::<Result<_>>()?;
    let sa = p.finalize_sa(hard, &ff_states, |out| {
        out.iter()
            .zip(&target)
            .all(|(a, b)| a.iter().zip(b.iter()).all(|(x, y)| x.dist(y) < delta))
    })?;
    p.push(held, sa)?;
    p.end();

    p.begin(StepName::Collapse);
    let collapse = collapse_clouds(&mut p, &placement, &w)?;
    for (j, s) in p.states.iter().enumerate() {
        if s.distinct_count(0.0) != ms[j] {
            return Err(Error::Verification(format!(
                "sequence {j} has {} distinct tokens after collapse, expected {}",
                s.distinct_count(0.0),
                ms[j]
            )));
        }
    }
    p.end();

    let budget = remaining(&p, bound)?;
    let detours = build_interpolation(&mut p, &ds.outputs(), budget)?;
    let taus = p.taus.clone();
    let tau_min = taus.iter().map(|t| t.tau).fold(1.0, f64::min);
    let (model, report) = finish(p, ds, "softmax", bound, delta1, detours)?;
    let plan = SoftmaxPlan {
        delta,
        w,
        r,
        zeta: gap / r,
        leaders: placement.all_targets().cloned().collect(),
        taus,
        collapse,
        tau_min,
        global_tau: fixed_tau,
        global_tau_verified: fixed_tau.is_some(),
        note: None,
    };
    Ok((model, report, plan))
}

const GLOBAL_HALVINGS: u32 = 8;

/// Builds a softmax transformer with `L ≤ 2Σm + 3N` blocks, calibrating the
/// temperature of each attention layer, then looks for one temperature that
/// works for every layer at once: `tau_min` first, then up to eight halvings of it
/// (the layer predicates need not be monotone in `τ`).
pub fn build_softmax(
    ds: &Dataset<f64>,
) -> Result<(Transformer<f64>, ConstructionReport, SoftmaxPlan)> {
    let (model, report, mut plan) = build(ds, None)?;
    let mut tau = plan.tau_min;
    let mut last = None;
    for _ in 0..=GLOBAL_HALVINGS {
        match build(ds, Some(tau)) {
            Ok(_) => {
                plan.global_tau = Some(tau);
                plan.global_tau_verified = true;
                if tau < plan.tau_min {
                    plan.note = Some(format!(
                        "tau_min {} fails for some layer; {tau} works globally",
                        plan.tau_min
                    ));
                }
                return Ok((model, report, plan));
            }
            Err(e) => last = Some(e),
        }
        tau *= 0.5;
    }
    plan.note = Some(format!(
        "no single temperature in [{tau:e}, {}] works ({}); per-layer temperatures kept",
        plan.tau_min,
        last.map(|e| e.to_string()).unwrap_or_default()
    ));
    Ok((model, report, plan))
}

/// Builds the softmax transformer with the same temperature `tau` in every
/// attention layer, failing if any layer's requirement is not met at `tau`.
pub fn build_softmax_fixed_tau(
    ds: &Dataset<f64>,
    tau: f64,
) -> Result<(Transformer<f64>, ConstructionReport, SoftmaxPlan)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    build(ds, Some(tau))
}
