use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{hardmax_cluster, FeedForwardLayer};
use crate::matrix::{AttentionMatrix, DenseMatrix};
use crate::scalar::Scalar;
use crate::token::{Sequence, Token};

use super::coord_scale;
use super::extreme::{extreme_in, extreme_tol, repair_direction};

const TIE_RETRIES: usize = 8;
const SHIFT_DOUBLINGS: usize = 50;

fn tie_band<T: Scalar>(seqs: &[Sequence<T>], v: &Token<T>) -> T {
    let scale = seqs
        .iter()
        .flat_map(|s| s.iter())
        .fold(T::zero(), |m, x| m.max(v.dot(x).abs()));
    T::lit(1e-8) * (T::one() + scale)
}

/// Indices attaining `max ⟨v, ·⟩` over `xs` within `band`.
fn top_set<T: Scalar>(xs: &Sequence<T>, v: &Token<T>, band: T) -> Vec<usize> {
    let p: Vec<T> = xs.iter().map(|x| v.dot(x)).collect();
    let max = p.iter().copied().fold(T::neg_infinity(), T::max);
    (0..p.len()).filter(|&l| max - p[l] <= band).collect()
}

/// Largest step `ε` along `u` keeping `⟨v, x_top − x_l⟩ > 0` for every `l`.
fn step_bound<T: Scalar>(
    xs: &Sequence<T>,
    top: usize,
    v: &Token<T>,
    u: &Token<T>,
    skip: &[usize],
) -> T {
    let mut bound = T::infinity();
    for (l, x) in xs.iter().enumerate() {
        if l == top || skip.contains(&l) {
            continue;
        }
        let diff = xs[top].sub(x);
        let g = v.dot(&diff);
        let c = u.dot(&diff);
        if c < T::zero() {
            bound = bound.min(g.max(T::zero()) / -c);
        }
    }
    bound
}

/// Direction `v` with `⟨v, x*⟩ ≠ 0`, a unique maximizer of `⟨v, ·⟩` in every
/// sequence, and maximizer `istar` in sequence `jstar`. Returned with unit norm.
pub fn global_leader_direction<T: Scalar>(
    seqs: &[Sequence<T>],
    jstar: usize,
    istar: usize,
) -> Result<Token<T>> {
    let target = seqs
        .get(jstar)
        .and_then(|s| s.tokens().get(istar))
        .ok_or_else(|| Error::InvalidInput(format!("no token {istar} in sequence {jstar}")))?;
    if target.is_zero() {
        return Err(Error::Hypothesis(
            "prescribed leader is the zero token".into(),
        ));
    }
    let xs = seqs[jstar].tokens();
    let (ok, cert) = extreme_in(xs, istar, extreme_tol(coord_scale(xs)))?;
    let cert = match (ok, cert) {
        (true, Some(c)) => c,
        _ => {
            return Err(Error::Hypothesis(format!(
                "token {istar} of sequence {jstar} is not extreme"
            )))
        }
    };
    let mut v = repair_direction(xs, istar, &cert).normalized();
    let mut fixed: Vec<(usize, usize)> = vec![(jstar, istar)];

    for j in (0..seqs.len()).filter(|&j| j != jstar) {
        let mut resolved = false;
        for _ in 0..TIE_RETRIES {
            let band = tie_band(seqs, &v);
            let tied = top_set(&seqs[j], &v, band);
            if tied.len() == 1 {
                fixed.push((j, tied[0]));
                resolved = true;
                break;
            }
            // The lexicographic maximum of the tied tokens is one of their extreme points.
            let pos = (0..tied.len())
                .max_by(|&a, &b| seqs[j][tied[a]].lex_cmp(&seqs[j][tied[b]]))
                .expect("non-empty tie");
            let top = tied[pos];
            let group: Vec<Token<T>> = tied.iter().map(|&l| seqs[j][l].clone()).collect();
            let (ok, cert) = extreme_in(&group, pos, extreme_tol(coord_scale(&group)))?;
            let u = match (ok, cert) {
                (true, Some(c)) => c.direction.normalized(),
                _ => {
                    return Err(Error::construction(
                        "global_leader_direction",
                        format!("tie in sequence {j} has no extreme point"),
                    ))
                }
            };
            let mut bound = T::infinity();
            for &(k, ik) in &fixed {
                bound = bound.min(step_bound(&seqs[k], ik, &v, &u, &[]));
            }
            bound = bound.min(step_bound(&seqs[j], top, &v, &u, &tied));
            let p_star = v.dot(target);
            let c_star = u.dot(target);
            if c_star * p_star < T::zero() {
                bound = bound.min(p_star.abs() / c_star.abs());
            }
            let eps = (bound / T::lit(2.0)).min(T::one());
            if !(eps > T::zero()) {
                break;
            }
            v = v.axpy(eps, &u).normalized();
        }
        if !resolved {
            return Err(Error::construction(
                "global_leader_direction",
                format!("could not break the argmax tie in sequence {j}"),
            ));
        }
    }

    let band = tie_band(seqs, &v);
    for (j, s) in seqs.iter().enumerate() {
        let tied = top_set(s, &v, band);
        if tied.len() != 1 || (j == jstar && tied[0] != istar) {
            return Err(Error::Verification(format!(
                "leader direction fails for sequence {j}"
            )));
        }
    }
    if v.dot(target).is_zero() {
        return Err(Error::Verification(
            "leader direction is orthogonal to the prescribed leader".into(),
        ));
    }
    Ok(v)
}

/// Width-1 shift layer along a leader direction, with the leader index per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct LeaderChoice<T> {
    pub ff: FeedForwardLayer<T>,
    /// Unit direction; the matching attention matrix is `v vᵀ`.
    pub v: Token<T>,
    pub leaders: Vec<usize>,
    pub shift: T,
}

impl<T: Scalar> LeaderChoice<T> {
    pub fn attention(&self) -> AttentionMatrix<T> {
        AttentionMatrix::rank_one(self.v.clone(), true)
    }
}

/// `FF(x) = x + (max|⟨v, x⟩| + ε) v` with `‖v‖ = 1`, so that every shifted token
/// has positive projection and `C_l(FF(X^j), v vᵀ) = {i_j}`; verified by enumeration.
pub fn choose_leader_ff<T: Scalar>(
    seqs: &[Sequence<T>],
    jstar: usize,
    istar: usize,
) -> Result<LeaderChoice<T>> {
    let v = global_leader_direction(seqs, jstar, istar)?;
    let d = v.dim();
    let top = seqs
        .iter()
        .flat_map(|s| s.iter())
        .fold(T::zero(), |m, x| m.max(v.dot(x).abs()));
    let leaders: Vec<usize> = seqs
        .iter()
        .map(|s| {
            (0..s.len())
                .max_by(|&a, &b| v.dot(&s[a]).partial_cmp(&v.dot(&s[b])).expect("finite"))
                .expect("non-empty")
        })
        .collect();
    let a = AttentionMatrix::rank_one(v.clone(), true);
    let mut eps = T::one();
    for _ in 0..=SHIFT_DOUBLINGS {
        let shift = top + eps;
        let ff = FeedForwardLayer {
            eta: T::one(),
            w: DenseMatrix::from_columns(std::slice::from_ref(&v)),
            u: DenseMatrix::zeros(1, d),
            b: vec![shift],
        };
        let ok = seqs.iter().zip(&leaders).all(|(s, &ij)| {
            let moved = s.map(|x| ff.apply_unchecked(x));
            moved.iter().all(|y| !y.is_zero() && v.dot(y) > T::zero())
                && (0..moved.len()).all(|l| hardmax_cluster(&moved, &a, l) == vec![ij])
        });
        if ok {
            return Ok(LeaderChoice {
                ff,
                v,
                leaders,
                shift,
            });
        }
        eps = eps * T::lit(2.0);
    }
    Err(Error::Verification(
        "leader-choosing layer failed to produce singleton clusters".into(),
    ))
}
