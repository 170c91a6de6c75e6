use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::token::{Sequence, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SequencePair<T> {
    pub input: Sequence<T>,
    pub output: Sequence<T>,
}

/// `N` input/output sequence pairs in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Dataset<T> {
    pub d: usize,
    pub pairs: Vec<SequencePair<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Input,
    Output,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Input => "input",
            Side::Output => "output",
        })
    }
}

/// First violated requirement on a dataset. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "clause")]
pub enum Violation {
    #[error("dimension d = {d} but at least 2 is required")]
    DimensionTooSmall { d: usize },
    #[error("dataset has no pairs")]
    Empty,
    #[error("pair {pair} {side} has no tokens")]
    EmptySequence { pair: usize, side: Side },
    #[error(
        "pair {pair} {side}: token {token} has dimension {found}, dataset dimension is {expected}"
    )]
    DimensionMismatch {
        pair: usize,
        side: Side,
        token: usize,
        found: usize,
        expected: usize,
    },
    #[error("pair {pair} {side}: token {token} has a non-finite coordinate")]
    NonFinite {
        pair: usize,
        side: Side,
        token: usize,
    },
    #[error("assumption (i): inputs {first} and {second} are equal as sets")]
    DuplicateInputs { first: usize, second: usize },
    #[error(
        "assumption (ii): pair {pair} {side} repeats a token at positions {first} and {second}"
    )]
    RepeatedToken {
        pair: usize,
        side: Side,
        first: usize,
        second: usize,
    },
    #[error("pair {pair}: output length {m} exceeds input length {n}")]
    OutputLonger { pair: usize, n: usize, m: usize },
}

impl Violation {
    /// Short clause label used in CLI diagnostics.
    pub fn clause(&self) -> &'static str {
        match self {
            Violation::DuplicateInputs { .. } => "assumption_i",
            Violation::RepeatedToken { .. } => "assumption_ii",
            Violation::OutputLonger { .. } => "length",
            Violation::DimensionTooSmall { .. } => "dimension",
            _ => "structure",
        }
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(d: usize, pairs: Vec<(Sequence<T>, Sequence<T>)>) -> Self {
        Dataset {
            d,
            pairs: pairs
                .into_iter()
                .map(|(input, output)| SequencePair { input, output })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn inputs(&self) -> Vec<Sequence<T>> {
        self.pairs.iter().map(|p| p.input.clone()).collect()
    }

    pub fn outputs(&self) -> Vec<Sequence<T>> {
        self.pairs.iter().map(|p| p.output.clone()).collect()
    }

    pub fn output_lengths(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.output.len()).collect()
    }

    /// `Σ_j m^j`
    pub fn total_output_len(&self) -> usize {
        self.pairs.iter().map(|p| p.output.len()).sum()
    }

    pub fn validate(&self) -> Result<(), Violation> {
        validate_dataset(self)
    }
}

/// Exact set equality (no tolerance).
pub fn same_set<T: Scalar>(a: &Sequence<T>, b: &Sequence<T>) -> bool {
    let contains = |s: &Sequence<T>, t: &Token<T>| s.iter().any(|u| u == t);
    a.iter().all(|t| contains(b, t)) && b.iter().all(|t| contains(a, t))
}

/// Checks dimension, shapes, pairwise-distinct inputs, distinct tokens within
/// every sequence, and `m^j ≤ n^j`. Comparisons are exact.
pub fn validate_dataset<T: Scalar>(ds: &Dataset<T>) -> Result<(), Violation> {
    if ds.d < 2 {
        return Err(Violation::DimensionTooSmall { d: ds.d });
    }
    if ds.pairs.is_empty() {
        return Err(Violation::Empty);
    }
    for (j, p) in ds.pairs.iter().enumerate() {
        for (side, s) in [(Side::Input, &p.input), (Side::Output, &p.output)] {
            if s.is_empty() {
                return Err(Violation::EmptySequence { pair: j, side });
            }
            for (i, t) in s.iter().enumerate() {
                if t.dim() != ds.d {
                    return Err(Violation::DimensionMismatch {
                        pair: j,
                        side,
                        token: i,
                        found: t.dim(),
                        expected: ds.d,
                    });
                }
                if !t.is_finite() {
                    return Err(Violation::NonFinite {
                        pair: j,
                        side,
                        token: i,
                    });
                }
            }
        }
    }
    for a in 0..ds.pairs.len() {
        for b in a + 1..ds.pairs.len() {
            if same_set(&ds.pairs[a].input, &ds.pairs[b].input) {
                return Err(Violation::DuplicateInputs {
                    first: a,
                    second: b,
                });
            }
        }
    }
    for (j, p) in ds.pairs.iter().enumerate() {
        for (side, s) in [(Side::Input, &p.input), (Side::Output, &p.output)] {
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    if s[a] == s[b] {
                        return Err(Violation::RepeatedToken {
                            pair: j,
                            side,
                            first: a,
                            second: b,
                        });
                    }
                }
            }
        }
    }
    for (j, p) in ds.pairs.iter().enumerate() {
        if p.output.len() > p.input.len() {
            return Err(Violation::OutputLonger {
                pair: j,
                n: p.input.len(),
                m: p.output.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(rows: &[[f64; 2]]) -> Sequence<f64> {
        Sequence::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn duplicate_inputs_as_sets() {
        let ds = Dataset::new(
            2,
            vec![
                (s(&[[0.0, 0.0], [1.0, 0.0]]), s(&[[5.0, 5.0]])),
                (s(&[[1.0, 0.0], [0.0, 0.0]]), s(&[[6.0, 5.0]])),
            ],
        );
        assert_eq!(
            validate_dataset(&ds),
            Err(Violation::DuplicateInputs {
                first: 0,
                second: 1
            })
        );
    }

    #[test]
    fn repeated_token() {
        let ds = Dataset::new(
            2,
            vec![(s(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]), s(&[[5.0, 5.0]]))],
        );
        assert_eq!(
            validate_dataset(&ds),
            Err(Violation::RepeatedToken {
                pair: 0,
                side: Side::Input,
                first: 0,
                second: 2
            })
        );
        let ds = Dataset::new(
            2,
            vec![(s(&[[0.0, 0.0], [1.0, 0.0]]), s(&[[5.0, 5.0], [5.0, 5.0]]))],
        );
        assert!(matches!(
            validate_dataset(&ds),
            Err(Violation::RepeatedToken {
                side: Side::Output,
                ..
            })
        ));
    }

    #[test]
    fn output_longer_and_dimension() {
        let ds = Dataset::new(2, vec![(s(&[[0.0, 0.0]]), s(&[[5.0, 5.0], [1.0, 1.0]]))]);
        assert_eq!(
            validate_dataset(&ds),
            Err(Violation::OutputLonger {
                pair: 0,
                n: 1,
                m: 2
            })
        );
        let one = Sequence::from_rows(vec![vec![1.0]]).unwrap();
        let ds = Dataset::new(1, vec![(one.clone(), one)]);
        assert_eq!(
            validate_dataset(&ds),
            Err(Violation::DimensionTooSmall { d: 1 })
        );
    }

    #[test]
    fn valid_dataset_passes() {
        let ds = Dataset::new(
            2,
            vec![
                (s(&[[0.0, 0.0], [1.0, 0.0]]), s(&[[5.0, 5.0]])),
                (s(&[[0.0, 0.0], [2.0, 0.0]]), s(&[[5.0, 5.0], [1.0, 2.0]])),
            ],
        );
        assert_eq!(validate_dataset(&ds), Ok(()));
        assert_eq!(ds.total_output_len(), 3);
    }
}
