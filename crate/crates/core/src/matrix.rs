//! Dense matrices for feed-forward weights and the tagged attention matrices
//! (`Dense | ScaledIdentity | RankOne`) used by self-attention layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::token::{dot, Token};

/// Row-major dense matrix. Serializes as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(DenseMatrix {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Token<T>]) -> Self {
        let nrows = cols.first().map_or(0, Token::dim);
        let mut m = Self::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for i in 0..nrows {
                m.set(i, j, c[i]);
            }
        }
        m
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_row_tokens(rows: &[Token<T>]) -> Self {
        let ncols = rows.first().map_or(0, Token::dim);
        DenseMatrix {
            rows: rows.len(),
            cols: ncols,
            data: rows.iter().flat_map(|r| r.0.iter().copied()).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `M x`, accumulated left to right within each row.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Mᵀ x`
    pub fn mul_vec_transposed(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o = *o + m * xi;
            }
        }
        out
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for DenseMatrix<T> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl<T: Scalar> From<DenseMatrix<T>> for Vec<Vec<T>> {
    fn from(m: DenseMatrix<T>) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

/// Self-attention parameter matrix in the shapes the constructions emit.
///
/// `RankOne { v, sign }` stands for `sign · v vᵀ` and is evaluated with two
/// inner products; `ScaledIdentity(ξ)` stands for `ξ I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub enum AttentionMatrix<T> {
    Dense(DenseMatrix<T>),
    ScaledIdentity(T),
    RankOne { v: Vec<T>, sign: i8 },
}

impl<T: Scalar> AttentionMatrix<T> {
    pub fn zero() -> Self {
        AttentionMatrix::ScaledIdentity(T::zero())
    }

    pub fn identity() -> Self {
        AttentionMatrix::ScaledIdentity(T::one())
    }

    pub fn rank_one(v: Token<T>, positive: bool) -> Self {
        AttentionMatrix::RankOne {
            v: v.0,
            sign: if positive { 1 } else { -1 },
        }
    }

    fn sign_scalar(sign: i8) -> T {
        if sign < 0 {
            -T::one()
        } else {
            T::one()
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            AttentionMatrix::Dense(m) => m.nonzeros() == 0,
            AttentionMatrix::ScaledIdentity(s) => s.is_zero(),
            AttentionMatrix::RankOne { v, .. } => v.iter().all(|c| c.is_zero()),
        }
    }

    /// Checks the matrix acts on `R^d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            AttentionMatrix::Dense(m) if m.rows() != d || m.cols() != d => {
                Err(Error::Dimension(format!(
                    "dense attention matrix is {}x{}, expected {d}x{d}",
                    m.rows(),
                    m.cols()
                )))
            }
            AttentionMatrix::RankOne { v, sign } => {
                if v.len() != d {
                    Err(Error::Dimension(format!(
                        "rank-one vector has length {}, expected {d}",
                        v.len()
                    )))
                } else if *sign != 1 && *sign != -1 {
                    Err(Error::InvalidInput(format!(
                        "rank-one sign must be ±1, got {sign}"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// `M x`
    pub fn apply(&self, x: &Token<T>) -> Token<T> {
        match self {
            AttentionMatrix::Dense(m) => Token(m.mul_vec(&x.0)),
            AttentionMatrix::ScaledIdentity(s) => x.scale(*s),
            AttentionMatrix::RankOne { v, sign } => {
                let p = dot(v, &x.0) * Self::sign_scalar(*sign);
                Token(v.iter().map(|&c| c * p).collect())
            }
        }
    }

    /// Score matrix `S[i][l] = ⟨M x_i, x_l⟩` over a list of tokens.
    pub fn scores(&self, xs: &[Token<T>]) -> Vec<Vec<T>> {
        match self {
            AttentionMatrix::RankOne { v, sign } => {
                let s = Self::sign_scalar(*sign);
                let p: Vec<T> = xs.iter().map(|x| dot(v, &x.0)).collect();
                p.iter()
                    .map(|&pi| p.iter().map(|&pl| s * pi * pl).collect())
                    .collect()
            }
            AttentionMatrix::ScaledIdentity(s) => xs
                .iter()
                .map(|xi| xs.iter().map(|xl| *s * xi.dot(xl)).collect())
                .collect(),
            AttentionMatrix::Dense(_) => xs
                .iter()
                .map(|xi| {
                    let q = self.apply(xi);
                    xs.iter().map(|xl| q.dot(xl)).collect()
                })
                .collect(),
        }
    }

    /// Nonzero-parameter count of the stored form.
    pub fn param_count(&self) -> usize {
        match self {
            AttentionMatrix::Dense(m) => m.nonzeros(),
            AttentionMatrix::ScaledIdentity(s) => usize::from(!s.is_zero()),
            AttentionMatrix::RankOne { v, .. } => v.iter().filter(|c| !c.is_zero()).count(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            AttentionMatrix::Dense(m) => m.is_finite(),
            AttentionMatrix::ScaledIdentity(s) => s.is_finite(),
            AttentionMatrix::RankOne { v, .. } => v.iter().all(|c| c.is_finite()),
        }
    }

    /// Dense equivalent, used for training and for cross-checking the tagged forms.
    pub fn to_dense(&self, d: usize) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.apply(&Token::unit(d, j));
            for i in 0..d {
                m.set(i, j, col[i]);
            }
        }
        m
    }
}
