//! Discrete hardmax self-attention particle dynamics
//! `x_i(k+1) = (1−γ) x_i(k) + γ · mean_{l ∈ C_i(X(k), A)} x_l(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::hardmax_row;
use crate::matrix::AttentionMatrix;
use crate::scalar::Scalar;
use crate::token::{Sequence, Token};

/// Margin used by every hypothesis check in this module.
pub const HYPOTHESIS_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub enum MatrixMode<T> {
    RankOne { v: Token<T> },
    ScaledIdentity { xi: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct DynamicsConfig<T> {
    pub gamma: T,
    pub matrix_mode: MatrixMode<T>,
}

impl<T: Scalar> DynamicsConfig<T> {
    pub fn rank_one(gamma: T, v: Token<T>) -> Self {
        DynamicsConfig {
            gamma,
            matrix_mode: MatrixMode::RankOne { v },
        }
    }

    pub fn scaled_identity(gamma: T, xi: T) -> Self {
        DynamicsConfig {
            gamma,
            matrix_mode: MatrixMode::ScaledIdentity { xi },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "step size must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        match &self.matrix_mode {
            MatrixMode::RankOne { v } if v.is_zero() || !v.is_finite() => Err(Error::InvalidInput(
                "rank-one direction must be nonzero and finite".into(),
            )),
            MatrixMode::ScaledIdentity { xi } if !(*xi > T::zero()) || !xi.is_finite() => Err(
                Error::InvalidInput(format!("identity scale must be positive, got {xi}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn attention_matrix(&self) -> AttentionMatrix<T> {
        match &self.matrix_mode {
            MatrixMode::RankOne { v } => AttentionMatrix::rank_one(v.clone(), true),
            MatrixMode::ScaledIdentity { xi } => AttentionMatrix::ScaledIdentity(*xi),
        }
    }

    /// `10·⌈log(tol)/log(1−γ)⌉` for `γ < 1`, otherwise 2.
    pub fn default_max_steps(&self, conv_tol: T) -> usize {
        if self.gamma >= T::one() {
            return 2;
        }
        let k = (conv_tol.ln() / (T::one() - self.gamma).ln()).ceil();
        10 * k.to_usize().unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Trajectory<T> {
    pub iterates: Vec<Sequence<T>>,
    pub converged: bool,
    pub equilibrium: Option<Sequence<T>>,
    pub steps_taken: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &Sequence<T> {
        self.iterates
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// One synchronous update; clusters are computed on the pre-update state.
///
/// Written as `x + γ (M − x)` so that tokens whose cluster is themselves stay
/// bit-for-bit fixed; `γ = 1` returns the cluster mean itself.
pub fn step<T: Scalar>(xs: &Sequence<T>, cfg: &DynamicsConfig<T>) -> Sequence<T> {
    let d = xs.dim();
    let scores = cfg.attention_matrix().scores(xs.tokens());
    let tokens = xs
        .iter()
        .zip(&scores)
        .map(|(xi, row)| {
            let w = hardmax_row(row);
            let members: Vec<(T, &Token<T>)> = w
                .iter()
                .zip(xs.iter())
                .filter(|(wl, _)| !wl.is_zero())
                .map(|(wl, xl)| (*wl, xl))
                .collect();
            // Averaging copies of one token is not exact in floating point.
            let mean = if members.iter().all(|(_, xl)| *xl == members[0].1) {
                members[0].1.clone()
            } else {
                members
                    .iter()
                    .fold(Token::zeros(d), |acc, (wl, xl)| acc.axpy(*wl, xl))
            };
            if cfg.gamma == T::one() {
                mean
            } else {
                xi.axpy(cfg.gamma, &mean.sub(xi))
            }
        })
        .collect();
    Sequence::from_tokens_unchecked(tokens)
}

fn max_displacement<T: Scalar>(a: &Sequence<T>, b: &Sequence<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.dist(y))
        .fold(T::zero(), T::max)
}

/// Iterates until the largest per-token displacement drops below `conv_tol`.
/// `steps_taken` counts the steps needed to reach the reported state.
pub fn simulate<T: Scalar>(
    x0: &Sequence<T>,
    cfg: &DynamicsConfig<T>,
    max_steps: usize,
    conv_tol: T,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if max_steps == 0 {
        return Err(Error::InvalidInput("max_steps must be at least 1".into()));
    }
    let mut iterates = vec![x0.clone()];
    for k in 0..max_steps {
        let cur = iterates.last().expect("non-empty");
        let next = step(cur, cfg);
        if max_displacement(cur, &next) < conv_tol {
            let eq = cur.clone();
            return Ok(Trajectory {
                iterates,
                converged: true,
                equilibrium: Some(eq),
                steps_taken: k,
            });
        }
        iterates.push(next);
    }
    Ok(Trajectory {
        iterates,
        converged: false,
        equilibrium: None,
        steps_taken: max_steps,
    })
}

pub fn simulate_default<T: Scalar>(
    x0: &Sequence<T>,
    cfg: &DynamicsConfig<T>,
) -> Result<Trajectory<T>> {
    let tol = T::lit(1e-10);
    simulate(x0, cfg, cfg.default_max_steps(tol), tol)
}

fn margin<T: Scalar>(scale: T) -> T {
    T::lit(HYPOTHESIS_MARGIN) * (T::one() + scale.abs())
}

/// Limit predicted for `A = v vᵀ`: tokens with `⟨v, x⟩ > 0` go to the unique
/// maximizer, the rest to the unique minimizer.
pub fn predict_rank1_equilibrium<T: Scalar>(x0: &Sequence<T>, v: &Token<T>) -> Result<Sequence<T>> {
    if v.dim() != x0.dim() {
        return Err(Error::Dimension(format!(
            "direction has dimension {}, tokens {}",
            v.dim(),
            x0.dim()
        )));
    }
    let p: Vec<T> = x0.iter().map(|x| v.dot(x)).collect();
    let scale = p.iter().fold(T::zero(), |m, &q| m.max(q.abs()));
    let tol = margin(scale);
    if let Some(i) = p.iter().position(|q| q.abs() <= tol) {
        return Err(Error::Hypothesis(format!(
            "⟨v, x_{i}⟩ = {} is zero within margin",
            p[i]
        )));
    }
    let big = unique_extremum(&p, tol, |a, b| a > b)
        .ok_or_else(|| Error::Hypothesis("maximizer of ⟨v, ·⟩ is not unique".into()))?;
    let small = unique_extremum(&p, tol, |a, b| a < b)
        .ok_or_else(|| Error::Hypothesis("minimizer of ⟨v, ·⟩ is not unique".into()))?;
    Ok(x0.map_indexed(|i, _| {
        if p[i] > T::zero() {
            x0[big].clone()
        } else {
            x0[small].clone()
        }
    }))
}

fn unique_extremum<T: Scalar>(p: &[T], tol: T, better: impl Fn(T, T) -> bool) -> Option<usize> {
    let mut best = 0;
    for (i, &q) in p.iter().enumerate() {
        if better(q, p[best]) {
            best = i;
        }
    }
    p.iter()
        .enumerate()
        .all(|(i, &q)| i == best || (q - p[best]).abs() > tol)
        .then_some(best)
}

/// Checks the partial-clustering configuration with radius `R` and leader set
/// `leaders` (first entry is the apex `R·1_d`).
pub fn check_partial_hypotheses<T: Scalar>(
    x0: &Sequence<T>,
    leaders: &[usize],
    r: T,
) -> Result<()> {
    let n = x0.len();
    if leaders.is_empty() {
        return Err(Error::Hypothesis("leader set is empty".into()));
    }
    if !(r > T::zero()) {
        return Err(Error::Hypothesis(format!(
            "radius must be positive, got {r}"
        )));
    }
    let mut is_leader = vec![false; n];
    for &i in leaders {
        if i >= n || is_leader[i] {
            return Err(Error::Hypothesis(format!(
                "leader index {i} out of range or repeated"
            )));
        }
        is_leader[i] = true;
    }
    let tol = margin(r);
    let apex = &x0[leaders[0]];
    if apex.iter_coords().any(|c| (c - r).abs() > tol) {
        return Err(Error::Hypothesis(format!(
            "clause ii: first leader {:?} is not R·1_d",
            apex.coords()
        )));
    }
    for &i in &leaders[1..] {
        let x = &x0[i];
        if (x.norm() - r).abs() > tol {
            return Err(Error::Hypothesis(format!(
                "clause iii: leader {i} is off the sphere of radius {r}"
            )));
        }
        if x.iter_coords().any(|c| c >= -tol) {
            return Err(Error::Hypothesis(format!(
                "clause iii: leader {i} is not in the negative orthant"
            )));
        }
    }
    for i in (0..n).filter(|&i| !is_leader[i]) {
        if x0[i].iter_coords().any(|c| c <= tol || c >= r - tol) {
            return Err(Error::Hypothesis(format!(
                "clause i: token {i} is not inside the open cube (0, {r})^d"
            )));
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            if x0[a] == x0[b] {
                return Err(Error::Hypothesis(format!("tokens {a} and {b} coincide")));
            }
        }
    }
    Ok(())
}

/// Limit predicted by partial clustering: non-leaders go to the apex, leaders stay.
pub fn predict_partial_equilibrium<T: Scalar>(
    x0: &Sequence<T>,
    leaders: &[usize],
    r: T,
) -> Result<Sequence<T>> {
    check_partial_hypotheses(x0, leaders, r)?;
    let apex = x0[leaders[0]].clone();
    Ok(x0.map_indexed(|i, x| {
        if leaders.contains(&i) {
            x.clone()
        } else {
            apex.clone()
        }
    }))
}

/// Regime detected from an initial state and configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    RankOne,
    FullClustering,
    NoClustering,
    PartialClustering,
    Unclassified,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::RankOne => "rank-one",
            Regime::FullClustering => "full clustering",
            Regime::NoClustering => "no clustering",
            Regime::PartialClustering => "partial clustering",
            Regime::Unclassified => "unclassified",
        }
    }
}

/// Best-effort detection of a regime whose limit is known in closed form.
pub fn classify<T: Scalar>(
    x0: &Sequence<T>,
    cfg: &DynamicsConfig<T>,
) -> (Regime, Option<Sequence<T>>) {
    match &cfg.matrix_mode {
        MatrixMode::RankOne { v } => match predict_rank1_equilibrium(x0, v) {
            Ok(p) => (Regime::RankOne, Some(p)),
            Err(_) => (Regime::Unclassified, None),
        },
        MatrixMode::ScaledIdentity { .. } => classify_identity(x0),
    }
}

fn classify_identity<T: Scalar>(x0: &Sequence<T>) -> (Regime, Option<Sequence<T>>) {
    let n = x0.len();
    let distinct = (0..n).all(|a| (a + 1..n).all(|b| x0[a] != x0[b]));
    if !distinct {
        return (Regime::Unclassified, None);
    }
    let r0 = x0[0].norm();
    if x0.iter().all(|x| (x.norm() - r0).abs() <= margin(r0)) {
        return (Regime::NoClustering, Some(x0.clone()));
    }
    for apex in 0..n {
        let r = x0[apex][0];
        if !(r > T::zero()) || x0[apex].iter_coords().any(|c| c != r) {
            continue;
        }
        let tol = margin(r);
        let mut leaders = vec![apex];
        for (i, x) in x0.iter().enumerate() {
            if i != apex && (x.norm() - r).abs() <= tol && x.iter_coords().all(|c| c < -tol) {
                leaders.push(i);
            }
        }
        if let Ok(pred) = predict_partial_equilibrium(x0, &leaders, r) {
            let regime = if leaders.len() == 1 {
                Regime::FullClustering
            } else {
                Regime::PartialClustering
            };
            return (regime, Some(pred));
        }
    }
    (Regime::Unclassified, None)
}

/// CSV with columns `step,token_index,coord_0..coord_{d-1}`, 17 significant digits.
pub fn trajectory_csv<T: Scalar>(traj: &Trajectory<T>) -> String {
    let d = traj.iterates.first().map_or(0, |s| s.dim());
    let mut out = String::from("step,token_index");
    for c in 0..d {
        out.push_str(&format!(",coord_{c}"));
    }
    out.push('\n');
    for (k, state) in traj.iterates.iter().enumerate() {
        for (i, x) in state.iter().enumerate() {
            out.push_str(&format!("{k},{i}"));
            for c in x.iter_coords() {
                out.push_str(&format!(",{:.16e}", c.as_f64()));
            }
            out.push('\n');
        }
    }
    out
}
