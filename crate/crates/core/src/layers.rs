//! Feed-forward and self-attention layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{AttentionMatrix, DenseMatrix};
use crate::scalar::{relu, Scalar};
use crate::token::{Sequence, Token};

/// `FF(x) = η x + W relu(U x + b)` with `W: d×d'`, `U: d'×d`, `b ∈ R^{d'}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct FeedForwardLayer<T> {
    pub eta: T,
    #[serde(rename = "W")]
    pub w: DenseMatrix<T>,
    #[serde(rename = "U")]
    pub u: DenseMatrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> FeedForwardLayer<T> {
    /// `η = 1`, `W = 0`: the identity map, with one dormant neuron.
    pub fn identity(d: usize) -> Self {
        FeedForwardLayer {
            eta: T::one(),
            w: DenseMatrix::zeros(d, 1),
            u: DenseMatrix::zeros(1, d),
            b: vec![T::zero()],
        }
    }

    /// `x ↦ x + shift`, realized with `U = 0`, `b = 1`, `W = shift`.
    pub fn constant_shift(shift: &Token<T>) -> Self {
        FeedForwardLayer {
            eta: T::one(),
            w: DenseMatrix::from_columns(std::slice::from_ref(shift)),
            u: DenseMatrix::zeros(1, shift.dim()),
            b: vec![T::one()],
        }
    }

    pub fn width(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn check(&self) -> Result<()> {
        let (d, dp) = (self.w.rows(), self.b.len());
        if dp == 0 {
            return Err(Error::Dimension(
                "feed-forward width must be at least 1".into(),
            ));
        }
        if self.w.cols() != dp || self.u.rows() != dp || self.u.cols() != d {
            return Err(Error::Dimension(format!(
                "feed-forward shapes W {}x{}, U {}x{}, b {} are inconsistent",
                self.w.rows(),
                self.w.cols(),
                self.u.rows(),
                self.u.cols(),
                dp
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations `U x + b`.
    pub fn pre_activations(&self, x: &Token<T>) -> Vec<T> {
        self.u
            .mul_vec(&x.0)
            .into_iter()
            .zip(&self.b)
            .map(|(z, &b)| z + b)
            .collect()
    }

    pub fn apply(&self, x: &Token<T>) -> Result<Token<T>> {
        if x.dim() != self.w.rows() || x.dim() != self.u.cols() {
            return Err(Error::Dimension(format!(
                "token of dimension {} fed to a feed-forward layer on R^{}",
                x.dim(),
                self.w.rows()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &Token<T>) -> Token<T> {
        let h: Vec<T> = self.pre_activations(x).into_iter().map(relu).collect();
        let wh = self.w.mul_vec(&h);
        Token(
            x.0.iter()
                .zip(wh)
                .map(|(&xi, v)| self.eta * xi + v)
                .collect(),
        )
    }

    pub fn apply_sequence(&self, xs: &Sequence<T>) -> Result<Sequence<T>> {
        let tokens = xs
            .iter()
            .map(|x| self.apply(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sequence::from_tokens_unchecked(tokens))
    }

    /// Stacks the hidden neurons of two residual layers (both must have `η = 1`):
    /// the result computes `x + W₁σ(U₁x+b₁) + W₂σ(U₂x+b₂)`.
    pub fn concat(&self, other: &Self) -> Self {
        let d = self.dim();
        let (w1, w2) = (self.width(), other.width());
        let mut w = DenseMatrix::zeros(d, w1 + w2);
        let mut u = DenseMatrix::zeros(w1 + w2, d);
        for i in 0..d {
            for k in 0..w1 {
                w.set(i, k, self.w.get(i, k));
            }
            for k in 0..w2 {
                w.set(i, w1 + k, other.w.get(i, k));
            }
        }
        for c in 0..d {
            for k in 0..w1 {
                u.set(k, c, self.u.get(k, c));
            }
            for k in 0..w2 {
                u.set(w1 + k, c, other.u.get(k, c));
            }
        }
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        FeedForwardLayer {
            eta: self.eta,
            w,
            u,
            b,
        }
    }

    pub fn param_count(&self) -> usize {
        usize::from(!self.eta.is_zero())
            + self.w.nonzeros()
            + self.u.nonzeros()
            + self.b.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.eta.is_finite()
            && self.w.is_finite()
            && self.u.is_finite()
            && self.b.iter().all(|v| v.is_finite())
    }
}

/// Attention weighting: hardmax (`τ → 0` limit) or softmax with temperature `τ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub enum AttentionKind<T> {
    Hardmax,
    Softmax { tau: T },
}

/// `SA_i(X) = ρ x_i + V Σ_l π_il(X, A) x_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SelfAttentionLayer<T> {
    pub rho: T,
    #[serde(rename = "V")]
    pub v: AttentionMatrix<T>,
    #[serde(rename = "A")]
    pub a: AttentionMatrix<T>,
    pub kind: AttentionKind<T>,
}

impl<T: Scalar> SelfAttentionLayer<T> {
    /// `ρ = 1`, `V = 0`, `A = 0`.
    pub fn identity(kind: AttentionKind<T>) -> Self {
        SelfAttentionLayer {
            rho: T::one(),
            v: AttentionMatrix::zero(),
            a: AttentionMatrix::zero(),
            kind,
        }
    }

    pub fn check(&self, d: usize) -> Result<()> {
        self.v.check_dim(d)?;
        self.a.check_dim(d)?;
        if let AttentionKind::Softmax { tau } = self.kind {
            if !(tau > T::zero()) || !tau.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "softmax temperature must be positive, got {tau}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: AttentionKind<T>) -> Self {
        SelfAttentionLayer {
            kind,
            ..self.clone()
        }
    }

    /// Row-stochastic attention matrix `π(X, A)`.
    pub fn weights(&self, xs: &Sequence<T>) -> Vec<Vec<T>> {
        let scores = self.a.scores(xs.tokens());
        match self.kind {
            AttentionKind::Hardmax => scores.iter().map(|r| hardmax_row(r)).collect(),
            AttentionKind::Softmax { tau } => scores.iter().map(|r| softmax_row(r, tau)).collect(),
        }
    }

    pub fn apply(&self, xs: &Sequence<T>) -> Result<Sequence<T>> {
        self.check(xs.dim())?;
        Ok(self.apply_unchecked(xs))
    }

    pub(crate) fn apply_unchecked(&self, xs: &Sequence<T>) -> Sequence<T> {
        let d = xs.dim();
        if self.v.is_zero() {
            return xs.map(|x| x.scale(self.rho));
        }
        let pi = self.weights(xs);
        let tokens = xs
            .iter()
            .zip(&pi)
            .map(|(xi, row)| {
                let mut mean = Token::zeros(d);
                for (w, xl) in row.iter().zip(xs.iter()) {
                    if !w.is_zero() {
                        mean = mean.axpy(*w, xl);
                    }
                }
                let vm = self.v.apply(&mean);
                Token(
                    xi.0.iter()
                        .zip(vm.0)
                        .map(|(&a, b)| self.rho * a + b)
                        .collect(),
                )
            })
            .collect();
        Sequence::from_tokens_unchecked(tokens)
    }

    pub fn param_count(&self) -> usize {
        usize::from(!self.rho.is_zero()) + self.v.param_count() + self.a.param_count()
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// Tie band for hardmax cluster membership: `max − s ≤ tol·(1 + |max|)`.
pub fn tie_tolerance<T: Scalar>(max: T) -> T {
    let base = T::lit(1e-9).max(T::epsilon() * T::lit(8.0));
    base * (T::one() + max.abs())
}

/// Hardmax weights from one row of scores: uniform on the (tolerance-banded) argmax set.
pub fn hardmax_row<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = tie_tolerance(max);
    let members: Vec<bool> = scores.iter().map(|&s| max - s <= tol).collect();
    let count = members.iter().filter(|&&m| m).count();
    let w = T::one() / T::usize(count);
    members
        .into_iter()
        .map(|m| if m { w } else { T::zero() })
        .collect()
}

/// Softmax weights `exp(s/τ) / Σ exp(s/τ)`, max-subtracted.
pub fn softmax_row<T: Scalar>(scores: &[T], tau: T) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let z = e.iter().fold(T::zero(), |acc, &v| acc + v);
    e.into_iter().map(|v| v / z).collect()
}

/// Cluster `C_i(X, A)`: indices where `⟨A x_i, x_l⟩` is maximal.
pub fn hardmax_cluster<T: Scalar>(
    xs: &Sequence<T>,
    a: &AttentionMatrix<T>,
    i: usize,
) -> Vec<usize> {
    hardmax_weights(xs, a, i)
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(l, _)| l)
        .collect()
}

pub fn hardmax_weights<T: Scalar>(xs: &Sequence<T>, a: &AttentionMatrix<T>, i: usize) -> Vec<T> {
    let q = a.apply(&xs[i]);
    let scores: Vec<T> = xs.iter().map(|xl| q.dot(xl)).collect();
    hardmax_row(&scores)
}

pub fn softmax_weights<T: Scalar>(
    xs: &Sequence<T>,
    a: &AttentionMatrix<T>,
    tau: T,
    i: usize,
) -> Vec<T> {
    let q = a.apply(&xs[i]);
    let scores: Vec<T> = xs.iter().map(|xl| q.dot(xl)).collect();
    softmax_row(&scores, tau)
}

pub fn ff_apply<T: Scalar>(layer: &FeedForwardLayer<T>, x: &Token<T>) -> Result<Token<T>> {
    layer.apply(x)
}

pub fn sa_apply<T: Scalar>(layer: &SelfAttentionLayer<T>, xs: &Sequence<T>) -> Result<Sequence<T>> {
    layer.apply(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f64; 2]]) -> Sequence<f64> {
        Sequence::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn ff_identity_when_w_zero() {
        let mut layer = FeedForwardLayer::<f64>::identity(2);
        layer.u = DenseMatrix::from_rows(vec![vec![3.0, -1.0]]).unwrap();
        layer.b = vec![7.0];
        assert_eq!(
            layer.apply(&Token(vec![3.0, -2.0])).unwrap(),
            Token(vec![3.0, -2.0])
        );
    }

    #[test]
    fn ff_zero_when_eta_and_w_zero() {
        let mut layer = FeedForwardLayer::<f64>::identity(2);
        layer.eta = 0.0;
        let out = layer.apply(&Token(vec![3.0, -2.0])).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn ff_dimension_mismatch_is_error() {
        let layer = FeedForwardLayer::<f64>::identity(2);
        assert!(matches!(
            layer.apply(&Token(vec![1.0, 2.0, 3.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn ff_general_evaluation() {
        // η=2, W=[[1],[−1]], U=[[1, 1]], b=[−1] at x=(1,2): relu(2)=2 → (2+2, 4−2)
        let layer = FeedForwardLayer {
            eta: 2.0,
            w: DenseMatrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(),
            u: DenseMatrix::from_rows(vec![vec![1.0, 1.0]]).unwrap(),
            b: vec![-1.0],
        };
        assert_eq!(
            layer.apply(&Token(vec![1.0, 2.0])).unwrap(),
            Token(vec![4.0, 2.0])
        );
    }

    #[test]
    fn hardmax_weights_examples() {
        let x = seq(&[[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let a = AttentionMatrix::identity();
        // inner products from x_1: (4, 0, 2)
        assert_eq!(hardmax_weights(&x, &a, 0), vec![1.0, 0.0, 0.0]);
        // from x_2: (0, 1, 1), an exact tie
        assert_eq!(hardmax_weights(&x, &a, 1), vec![0.0, 0.5, 0.5]);
        let third = 1.0 / 3.0;
        assert_eq!(
            hardmax_weights(&x, &AttentionMatrix::zero(), 2),
            vec![third; 3]
        );
    }

    #[test]
    fn softmax_weights_examples() {
        let x = seq(&[[1.0, 0.0], [0.0, 0.0]]);
        let w = softmax_weights(&x, &AttentionMatrix::identity(), 1.0, 0);
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        let u = softmax_weights(&x, &AttentionMatrix::zero(), 0.3, 1);
        assert_eq!(u, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_huge_scores() {
        let w = softmax_row(&[1e6, 0.0, -1e6], 1e-3);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn sa_identity_configuration() {
        let x = seq(&[[2.0, 0.0], [0.0, 1.0]]);
        let layer = SelfAttentionLayer::identity(AttentionKind::Hardmax);
        assert_eq!(layer.apply(&x).unwrap(), x);
    }

    #[test]
    fn sa_softmax_average_collapse() {
        let x = seq(&[[2.0, 0.0], [0.0, 1.0], [1.0, 5.0]]);
        let layer = SelfAttentionLayer {
            rho: 0.0,
            v: AttentionMatrix::identity(),
            a: AttentionMatrix::zero(),
            kind: AttentionKind::Softmax { tau: 0.7 },
        };
        let out = layer.apply(&x).unwrap();
        for t in out.iter() {
            assert!((t[0] - 1.0).abs() < 1e-15 && (t[1] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sa_rejects_nonpositive_tau() {
        let x = seq(&[[2.0, 0.0]]);
        let layer = SelfAttentionLayer::<f64>::identity(AttentionKind::Softmax { tau: 0.0 });
        assert!(layer.apply(&x).is_err());
    }

    #[test]
    fn kind_serialization() {
        assert_eq!(
            serde_json::to_string(&AttentionKind::<f64>::Hardmax).unwrap(),
            r#""hardmax""#
        );
        assert_eq!(
            serde_json::to_string(&AttentionKind::Softmax { tau: 0.5f64 }).unwrap(),
            r#"{"softmax":{"tau":0.5}}"#
        );
    }
}
