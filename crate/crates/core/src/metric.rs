//! Hausdorff distance between finite point sets.

use crate::scalar::Scalar;
use crate::token::Sequence;

/// `max_{x∈X} min_{y∈Y} ‖x − y‖₂`
pub fn directed_hausdorff<T: Scalar>(x: &Sequence<T>, y: &Sequence<T>) -> T {
    x.iter()
        .map(|a| y.iter().map(|b| a.dist_sq(b)).fold(T::infinity(), T::min))
        .fold(T::zero(), T::max)
        .sqrt()
}

pub fn hausdorff_distance<T: Scalar>(x: &Sequence<T>, y: &Sequence<T>) -> T {
    directed_hausdorff(x, y).max(directed_hausdorff(y, x))
}

/// Set equality up to `tol` in Hausdorff distance.
pub fn sequences_equal_as_sets<T: Scalar>(x: &Sequence<T>, y: &Sequence<T>, tol: T) -> bool {
    hausdorff_distance(x, y) <= tol
}
