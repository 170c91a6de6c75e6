use super::pipeline::Pipeline;
use super::report::StepName;
use crate::error::{Error, Result};
use crate::geometry::{choose_leader_ff, hat_ff, is_extreme};
use crate::layers::{AttentionKind, FeedForwardLayer, SelfAttentionLayer};
use crate::matrix::AttentionMatrix;
use crate::token::{Sequence, Token};

const MAX_BLOCKS_PER_SEQUENCE: usize = 2;

/// Tokens of different sequences closer than this count as shared. Softmax layers
/// pull shared tokens apart only by tiny amounts, which later hat layers could
/// not resolve, so the threshold is far above rounding level.
fn conflict_tol(scale: f64) -> f64 {
    1e-4 * (1.0 + scale)
}

/// `1/2, 1/3, 2/5, 3/7, …`: the shrink factors tried for each separation layer.
fn alpha_candidates() -> impl Iterator<Item = f64> {
    std::iter::once(0.5).chain((1..=63).map(|k| k as f64 / (2 * k + 1) as f64))
}

fn min_cross(a: &Sequence<f64>, b: &Sequence<f64>) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x.dist(y)))
        .fold(f64::INFINITY, f64::min)
}

fn min_within(s: &Sequence<f64>) -> f64 {
    let t = s.tokens();
    let mut m = f64::INFINITY;
    for a in 0..t.len() {
        for b in a + 1..t.len() {
            m = m.min(t[a].dist(&t[b]));
        }
    }
    m
}

/// Smallest distance over pairs that must be distinct: all within-sequence pairs
/// and all cross pairs among sequences `0..upto`.
fn min_required(states: &[Sequence<f64>], upto: usize) -> f64 {
    let mut m = states.iter().map(min_within).fold(f64::INFINITY, f64::min);
    for a in 0..upto.min(states.len()) {
        for b in a + 1..upto.min(states.len()) {
            m = m.min(min_cross(&states[a], &states[b]));
        }
    }
    m
}

fn contains(s: &Sequence<f64>, x: &Token<f64>, tol: f64) -> bool {
    s.iter().any(|y| y.dist(x) <= tol)
}

struct Plan {
    k: usize,
    jstar: usize,
    candidates: Vec<usize>,
    /// Number of leading sequences whose cross pairs must be distinct afterwards.
    upto: usize,
}

/// Which sequence supplies the leader for separating sequence `k` from `0..k`.
fn plan(states: &[Sequence<f64>], k: usize, tol: f64) -> Result<Plan> {
    let xk = &states[k];
    let owners: Vec<Vec<usize>> = xk
        .iter()
        .map(|x| (0..k).filter(|&j| contains(&states[j], x, tol)).collect())
        .collect();
    let unique: Vec<usize> = (0..xk.len()).filter(|&i| owners[i].is_empty()).collect();
    if !unique.is_empty() {
        return Ok(Plan {
            k,
            jstar: k,
            candidates: unique,
            upto: k + 1,
        });
    }
    let mut touched: Vec<usize> = owners.iter().flatten().copied().collect();
    touched.sort_unstable();
    touched.dedup();
    if touched.len() >= 2 {
        // Every token of X^k is shared, with at least two earlier sequences: a
        // leader of X^k splits off the tokens shared with the other ones.
        return Ok(Plan {
            k,
            jstar: k,
            candidates: (0..xk.len()).collect(),
            upto: k,
        });
    }
    let j0 = touched[0];
    let candidates: Vec<usize> = (0..states[j0].len())
        .filter(|&r| !contains(xk, &states[j0][r], tol))
        .collect();
    if candidates.is_empty() {
        return Err(Error::construction(
            "separation",
            format!("sequences {j0} and {k} coincide as sets"),
        ));
    }
    Ok(Plan {
        k,
        jstar: j0,
        candidates,
        upto: k + 1,
    })
}

fn block(p: &mut Pipeline, plan: &Plan) -> Result<()> {
    let states = p.states.clone();
    let scale = p.scale();
    let tol = 1e-9 * (1.0 + scale);
    let xs = &states[plan.jstar];
    let mut extreme = None;
    for &i in &plan.candidates {
        if is_extreme(xs, i, tol)?.0 {
            extreme = Some(i);
            break;
        }
    }
    let (hat, moved, istar) = match extreme {
        Some(i) => (None, states.clone(), i),
        None => {
            // Move a candidate outside the hull of everything first.
            let i = plan.candidates[0];
            let union = p.union_locations();
            let at = union
                .iter()
                .position(|u| *u == xs[i])
                .expect("token is a location");
            let top = union.iter().fold(vec![f64::NEG_INFINITY; p.d], |mut m, x| {
                for (a, c) in m.iter_mut().zip(x.iter_coords()) {
                    *a = a.max(c);
                }
                m
            });
            let y = Token(top.into_iter().map(|c| c + 1.0).collect());
            let hat = hat_ff(&union, at, &y).map_err(|e| {
                Error::construction("separation", format!("moving a non-extreme leader: {e}"))
            })?;
            let moved: Vec<Sequence<f64>> = states
                .iter()
                .map(|s| hat.apply_sequence(s))
                .collect::<Result<_>>()?;
            (Some(hat), moved, i)
        }
    };
    let choice = choose_leader_ff(&moved, plan.jstar, istar)?;
    let ff = match hat {
        Some(h) => h.concat(&choice.ff),
        None => choice.ff.clone(),
    };
    let ff_states: Vec<Sequence<f64>> = states
        .iter()
        .map(|s| ff.apply_sequence(s))
        .collect::<Result<_>>()?;
    let a = choice.attention();
    for (j, s) in ff_states.iter().enumerate() {
        for l in 0..s.len() {
            if crate::layers::hardmax_cluster(s, &a, l) != vec![choice.leaders[j]] {
                return Err(Error::Verification(format!(
                    "separation layer: token {l} of sequence {j} has a non-singleton cluster"
                )));
            }
        }
    }

    let before = min_required(&states, plan.k);
    let margin = 1e-9 * (1.0 + scale);
    let mut best: Option<(f64, SelfAttentionLayer<f64>)> = None;
    let mut chosen = None;
    for alpha in alpha_candidates() {
        let sa = shrink_layer(alpha, &a);
        let after: Vec<Sequence<f64>> = ff_states
            .iter()
            .map(|s| sa.apply(s))
            .collect::<Result<_>>()?;
        let m = min_required(&after, plan.upto);
        if m <= margin {
            continue;
        }
        if m >= 0.25 * before {
            chosen = Some((m, sa));
            break;
        }
        if best.as_ref().is_none_or(|(bm, _)| m > *bm) {
            best = Some((m, sa));
        }
    }
    let (hard_min, hard) = chosen.or(best).ok_or_else(|| {
        Error::construction(
            "separation",
            "no shrink factor keeps the required pairs apart",
        )
    })?;
    let upto = plan.upto;
    let sa = p.finalize_sa(hard, &ff_states, |out| {
        min_required(out, upto) >= 0.5 * hard_min
    })?;
    p.push(ff, sa)
}

/// `SA(X)_i = (1 − α) x_i + α Σ π_il x_l`.
fn shrink_layer(alpha: f64, a: &AttentionMatrix<f64>) -> SelfAttentionLayer<f64> {
    SelfAttentionLayer {
        rho: 1.0 - alpha,
        v: AttentionMatrix::ScaledIdentity(alpha),
        a: a.clone(),
        kind: AttentionKind::Hardmax,
    }
}

/// Emits a global shift followed by at most two layers per sequence after the
/// first, until all sequences are pairwise disjoint. Returns `δ₁`, half the
/// smallest distance between distinct tokens of the union.
pub fn build_separation(p: &mut Pipeline) -> Result<f64> {
    p.begin(StepName::Separation);
    let shift = Token::splat(p.d, 1.0 + p.scale());
    let id = p.identity_sa();
    p.push(FeedForwardLayer::constant_shift(&shift), id)?;
    for k in 1..p.states.len() {
        let mut used = 0;
        loop {
            let tol = conflict_tol(p.scale());
            let clash: Vec<usize> = (0..k)
                .filter(|&j| min_cross(&p.states[k], &p.states[j]) <= tol)
                .collect();
            if clash.is_empty() {
                break;
            }
            if used == MAX_BLOCKS_PER_SEQUENCE {
                return Err(Error::construction(
                    "separation",
                    format!("sequence {k} still shares tokens with {clash:?} after {used} layers"),
                ));
            }
            let plan = plan(&p.states, k, tol)?;
            block(p, &plan)?;
            used += 1;
        }
    }
    let union = p.union_locations();
    let mut gap = f64::INFINITY;
    for a in 0..union.len() {
        for b in a + 1..union.len() {
            gap = gap.min(union[a].dist(&union[b]));
        }
    }
    p.end();
    Ok(if gap.is_finite() { 0.5 * gap } else { 0.5 })
}
