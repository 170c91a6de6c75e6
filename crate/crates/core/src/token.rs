use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token<T>(pub Vec<T>);

impl<T: Scalar> Token<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Token(coords)
    }

    pub fn zeros(d: usize) -> Self {
        Token(vec![T::zero(); d])
    }

    pub fn splat(d: usize, value: T) -> Self {
        Token(vec![value; d])
    }

    pub fn unit(d: usize, axis: usize) -> Self {
        let mut t = Self::zeros(d);
        t.0[axis] = T::one();
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }

    /// Left-to-right inner product. Every matrix-vector product in the crate
    /// uses the same accumulation order, which the hat layers rely on.
    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
    }

    pub fn dist(&self, other: &Self) -> T {
        self.dist_sq(other).sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        Token(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Token(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Token(self.0.iter().map(|&a| a * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Token(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        )
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale(T::one() / n)
    }

    pub fn iter_coords(&self) -> impl Iterator<Item = T> + '_ {
        self.0.iter().copied()
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }

    /// Lexicographic comparison, NaN-free inputs assumed.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl<T> Index<usize> for Token<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Scalar> From<Vec<T>> for Token<T> {
    fn from(v: Vec<T>) -> Self {
        Token(v)
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// A non-empty list of tokens of equal dimension, compared as a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sequence<T> {
    tokens: Vec<Token<T>>,
}

impl<T: Scalar> Sequence<T> {
    pub fn new(tokens: Vec<Token<T>>) -> Result<Self> {
        let Some(first) = tokens.first() else {
            return Err(Error::InvalidInput(
                "sequence must contain at least one token".into(),
            ));
        };
        let d = first.dim();
        if let Some((i, t)) = tokens.iter().enumerate().find(|(_, t)| t.dim() != d) {
            return Err(Error::Dimension(format!(
                "token {i} has dimension {} but token 0 has dimension {d}",
                t.dim()
            )));
        }
        Ok(Sequence { tokens })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Token).collect())
    }

    /// Internal constructor for outputs of length-preserving maps.
    pub(crate) fn from_tokens_unchecked(tokens: Vec<Token<T>>) -> Self {
        debug_assert!(!tokens.is_empty());
        Sequence { tokens }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false for a constructed sequence; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.tokens.first().map_or(0, Token::dim)
    }

    pub fn tokens(&self) -> &[Token<T>] {
        &self.tokens
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Token<T>> {
        self.tokens.iter()
    }

    pub fn into_tokens(self) -> Vec<Token<T>> {
        self.tokens
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.iter().all(Token::is_finite)
    }

    /// Applies a per-token map, preserving length.
    pub fn map<F: FnMut(&Token<T>) -> Token<T>>(&self, f: F) -> Self {
        Sequence {
            tokens: self.tokens.iter().map(f).collect(),
        }
    }

    pub fn map_indexed<F: FnMut(usize, &Token<T>) -> Token<T>>(&self, mut f: F) -> Self {
        Sequence {
            tokens: self
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect(),
        }
    }

    /// Number of pairwise-distinct tokens (exact comparison up to `tol` in ℓ2).
    pub fn distinct_count(&self, tol: T) -> usize {
        distinct_tokens(&self.tokens, tol).len()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Sequence {
            tokens: perm.iter().map(|&i| self.tokens[i].clone()).collect(),
        }
    }
}

impl<T> Index<usize> for Sequence<T> {
    type Output = Token<T>;
    fn index(&self, i: usize) -> &Token<T> {
        &self.tokens[i]
    }
}

/// Deduplicates tokens whose ℓ2 distance is at most `tol`, keeping first occurrences.
pub fn distinct_tokens<T: Scalar>(tokens: &[Token<T>], tol: T) -> Vec<Token<T>> {
    let tol_sq = tol * tol;
    let mut out: Vec<Token<T>> = Vec::new();
    for t in tokens {
        if !out.iter().any(|o| o.dist_sq(t) <= tol_sq) {
            out.push(t.clone());
        }
    }
    out
}
