use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::hardmax_cluster;
use crate::matrix::AttentionMatrix;
use crate::scalar::Scalar;
use crate::token::{Sequence, Token};

use super::hull::min_norm_point_in_hull;

/// `⟨v, x_witness⟩ − max_{l ≠ witness} ⟨v, x_l⟩ = margin > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SeparationCertificate<T> {
    pub direction: Token<T>,
    pub margin: T,
    pub witness: usize,
}

impl<T: Scalar> SeparationCertificate<T> {
    /// Recomputes the margin of `direction` for `witness` over `xs`
    /// (`+∞` for a single token).
    pub fn recompute(direction: &Token<T>, xs: &[Token<T>], witness: usize) -> T {
        let top = direction.dot(&xs[witness]);
        let rest = xs
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != witness)
            .map(|(_, x)| direction.dot(x))
            .fold(T::neg_infinity(), T::max);
        top - rest
    }
}

/// Whether `x_i` is an extreme point of `co(X)`: its distance to
/// `co(X ∖ {x_i})` exceeds `tol`. On success the certificate direction is
/// `x_i − proj`.
pub fn is_extreme<T: Scalar>(
    xs: &Sequence<T>,
    i: usize,
    tol: T,
) -> Result<(bool, Option<SeparationCertificate<T>>)> {
    extreme_in(xs.tokens(), i, tol)
}

pub(crate) fn extreme_in<T: Scalar>(
    xs: &[Token<T>],
    i: usize,
    tol: T,
) -> Result<(bool, Option<SeparationCertificate<T>>)> {
    if i >= xs.len() {
        return Err(Error::InvalidInput(format!(
            "index {i} out of range for {} tokens",
            xs.len()
        )));
    }
    let others: Vec<Token<T>> = xs
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != i)
        .map(|(_, x)| x.clone())
        .collect();
    if others.is_empty() {
        let d = xs[i].dim();
        let direction = if xs[i].is_zero() {
            Token::unit(d, 0)
        } else {
            xs[i].clone()
        };
        return Ok((
            true,
            Some(SeparationCertificate {
                direction,
                margin: T::infinity(),
                witness: i,
            }),
        ));
    }
    let (proj, dist) = min_norm_point_in_hull(&others, &xs[i], tol)?;
    if dist <= tol {
        return Ok((false, None));
    }
    let direction = xs[i].sub(&proj);
    let margin = SeparationCertificate::recompute(&direction, xs, i);
    if margin > T::zero() {
        Ok((
            true,
            Some(SeparationCertificate {
                direction,
                margin,
                witness: i,
            }),
        ))
    } else {
        Ok((false, None))
    }
}

/// Default extremeness tolerance for a token cloud of the given coordinate scale.
pub(crate) fn extreme_tol<T: Scalar>(scale: T) -> T {
    T::lit(1e-9) * (T::one() + scale)
}

/// Tilts a certificate along `x_i` so that `|⟨v, x_i⟩|` is bounded away from 0
/// while keeping at least half the margin.
pub(crate) fn repair_direction<T: Scalar>(
    xs: &[Token<T>],
    i: usize,
    cert: &SeparationCertificate<T>,
) -> Token<T> {
    let v = &cert.direction;
    let xi = &xs[i];
    let xn = xi.norm();
    if xn.is_zero() || xs.len() == 1 {
        return v.clone();
    }
    let spread = xs.iter().map(|x| x.dist(xi)).fold(T::zero(), T::max);
    let t = cert.margin * xn / (T::lit(2.0) * spread);
    let p = v.dot(xi);
    if p.abs() >= t {
        return v.clone();
    }
    let signed = if p < T::zero() { -t } else { t };
    v.axpy(signed / (xn * xn), xi)
}

/// `A = ±v vᵀ` making `x_i` a leader of `X` (`C_i(X, A) = {i}`), verified.
pub fn leader_matrix<T: Scalar>(xs: &Sequence<T>, i: usize) -> Result<AttentionMatrix<T>> {
    let scale = super::coord_scale(xs.iter());
    let (ok, cert) = is_extreme(xs, i, extreme_tol(scale))?;
    let cert = match (ok, cert) {
        (true, Some(c)) => c,
        _ => {
            return Err(Error::Hypothesis(format!(
                "token {i} is not an extreme point of the hull"
            )))
        }
    };
    let v = repair_direction(xs.tokens(), i, &cert);
    let positive = v.dot(&xs[i]) > T::zero();
    let a = AttentionMatrix::rank_one(v, positive);
    if hardmax_cluster(xs, &a, i) != vec![i] {
        return Err(Error::Verification(format!(
            "leader matrix does not isolate token {i}"
        )));
    }
    Ok(a)
}
