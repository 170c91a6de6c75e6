use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::FeedForwardLayer;
use crate::matrix::DenseMatrix;
use crate::scalar::{relu, Scalar};
use crate::token::Token;

use super::coord_scale;

const CANDIDATES: usize = 32;

/// A width-3 bump layer and the geometry it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct HatLayer<T> {
    pub layer: FeedForwardLayer<T>,
    pub u: Token<T>,
    pub gamma: T,
}

fn instance_seed<T: Scalar>(points: &[Token<T>], i: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ i as u64;
    for p in points {
        for c in p.iter_coords() {
            h ^= c.as_f64().to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(7);
        }
    }
    h
}

/// Unit directions tried for the hat's normal: the coordinate axes followed by
/// Gaussian samples seeded from the instance.
fn candidates<T: Scalar>(d: usize, seed: u64) -> Vec<Token<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Token<T>> = (0..d).map(|k| Token::unit(d, k)).collect();
    while out.len() < CANDIDATES + d {
        let g: Vec<T> = (0..d)
            .map(|_| T::lit(StandardNormal.sample(&mut rng)))
            .collect();
        let t = Token(g);
        if !t.norm().is_zero() {
            out.push(t.normalized());
        }
    }
    out
}

/// Smallest `|⟨u, x_j − x_i⟩|` over `j ≠ i`, and the largest positive one.
fn gaps<T: Scalar>(u: &Token<T>, points: &[Token<T>], i: usize) -> (T, T) {
    let pi = u.dot(&points[i]);
    points.iter().enumerate().filter(|&(j, _)| j != i).fold(
        (T::infinity(), T::zero()),
        |(g, top), (_, x)| {
            let s = u.dot(x) - pi;
            (g.min(s.abs()), top.max(s))
        },
    )
}

/// Residual width-3 layer with `FF(x_i) = y` and `FF(x_j) = x_j` for `j ≠ i`.
pub fn hat_ff<T: Scalar>(
    points: &[Token<T>],
    i: usize,
    y: &Token<T>,
) -> Result<FeedForwardLayer<T>> {
    Ok(hat_ff_with(points, i, y)?.layer)
}

/// As [`hat_ff`], also returning the normal `u` and tube half-width `γ`.
///
/// The normal is picked from a fixed candidate set (axes and seeded Gaussian
/// directions, both signs) by the rounding error it induces.
pub fn hat_ff_with<T: Scalar>(points: &[Token<T>], i: usize, y: &Token<T>) -> Result<HatLayer<T>> {
    if i >= points.len() {
        return Err(Error::InvalidInput(format!(
            "index {i} out of range for {} points",
            points.len()
        )));
    }
    let d = points[i].dim();
    if y.dim() != d || points.iter().any(|p| p.dim() != d) {
        return Err(Error::Dimension(
            "hat layer points and target must share a dimension".into(),
        ));
    }
    if points.len() == 1 {
        return build(points, i, y, Token::unit(d, 0), T::one());
    }
    // Points on the far side of the tube are fixed exactly; those on the near side
    // only up to a rounding error of order eps·‖w‖·⟨u, x_j − x_i⟩, and so is the
    // moved point, with ⟨u, x_i⟩ in place of the offset. Pick the normal (and its
    // sign) that makes this smallest relative to the tube width.
    let xi = &points[i];
    let mut best: Option<(T, Token<T>, T)> = None;
    for c in candidates::<T>(d, instance_seed(points, i)) {
        for u in [c.scale(-T::one()), c] {
            let (gap, near) = gaps(&u, points, i);
            if !(gap > T::zero()) {
                continue;
            }
            let score = (near + u.dot(xi).abs() + gap) / gap;
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, u, gap));
            }
        }
    }
    let Some((_, u, gap)) = best else {
        return Err(Error::construction(
            "hat_ff",
            "no direction separates the moved point (points not distinct)",
        ));
    };
    build(points, i, y, u, gap)
}

fn build<T: Scalar>(
    points: &[Token<T>],
    i: usize,
    y: &Token<T>,
    u: Token<T>,
    gap: T,
) -> Result<HatLayer<T>> {
    let xi = &points[i];
    let gamma = gap / T::lit(2.0);
    let beta = -u.dot(xi);
    let b = vec![beta - gamma, beta, beta + gamma];
    let uu = DenseMatrix::from_row_tokens(&[u.clone(), u.clone(), u.clone()]);
    // Realized peak activation at x_i, evaluated exactly as the forward pass does.
    let peak = relu(uu.mul_vec(&xi.0)[2] + b[2]);
    if !(peak > T::zero()) {
        return Err(Error::construction("hat_ff", "degenerate tube width"));
    }
    let w = Token(
        y.sub(xi)
            .iter_coords()
            .map(|c| c / peak)
            .collect::<Vec<T>>(),
    );
    let layer = FeedForwardLayer {
        eta: T::one(),
        w: DenseMatrix::from_columns(&[w.clone(), w.scale(T::lit(-2.0)), w.clone()]),
        u: uu,
        b,
    };
    let scale = coord_scale(points.iter()).max(y.max_abs());
    let tol = T::lit(1e-10) * (T::one() + scale);
    if layer.apply_unchecked(xi).dist(y) > tol {
        return Err(Error::Verification("hat layer misses its target".into()));
    }
    for (j, x) in points.iter().enumerate() {
        if j != i && layer.apply_unchecked(x).dist(x) > tol {
            return Err(Error::Verification(format!(
                "hat layer disturbs point {j} by {:e} (gap {:e}, scale {:e})",
                layer.apply_unchecked(x).dist(x).as_f64(),
                (gamma + gamma).as_f64(),
                scale.as_f64()
            )));
        }
    }
    Ok(HatLayer { layer, u, gamma })
}
