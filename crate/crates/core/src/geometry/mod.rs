//! Convex-separation toolkit: projections onto hulls, extreme-point
//! certificates, leader directions and hat layers.

mod extreme;
mod hat;
mod hull;
mod leader;

pub use extreme::{is_extreme, leader_matrix, SeparationCertificate};
pub use hat::{hat_ff, hat_ff_with, HatLayer};
pub use hull::min_norm_point_in_hull;
pub use leader::{choose_leader_ff, global_leader_direction, LeaderChoice};

use crate::scalar::Scalar;
use crate::token::Token;

/// Largest coordinate magnitude over a token list (0 for an empty list).
pub(crate) fn coord_scale<'a, T: Scalar>(points: impl IntoIterator<Item = &'a Token<T>>) -> T {
    points
        .into_iter()
        .fold(T::zero(), |m, p| m.max(p.max_abs()))
}
