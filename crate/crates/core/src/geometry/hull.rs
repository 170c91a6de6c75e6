use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::token::Token;

/// Euclidean projection of `query` onto `co(points)` and its distance, by
/// Wolfe's minimum-norm-point algorithm on the translated points `p − query`.
///
/// `tol` is an absolute tolerance on the distance. The iteration stops once the
/// duality gap `‖x‖ − min_j ⟨x, p_j⟩/‖x‖` is at most `tol`, or once `‖x‖` stops
/// decreasing; distances at or below `tol` are reported as 0 with the query
/// itself as projection.
pub fn min_norm_point_in_hull<T: Scalar>(
    points: &[Token<T>],
    query: &Token<T>,
    tol: T,
) -> Result<(Token<T>, T)> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "convex hull of an empty point set".into(),
        ));
    }
    let d = query.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != d) {
        return Err(Error::Dimension(format!(
            "hull point has dimension {}, query {d}",
            p.dim()
        )));
    }
    let ps: Vec<Token<T>> = points.iter().map(|p| p.sub(query)).collect();
    let n = ps.len();
    let cap = 50 * (n + d) + 100;

    let start = (0..n)
        .min_by(|&a, &b| {
            ps[a]
                .norm_sq()
                .partial_cmp(&ps[b].norm_sq())
                .expect("finite")
        })
        .expect("n > 0");
    let mut active: Vec<usize> = vec![start];
    let mut lambda: Vec<T> = vec![T::one()];
    let mut x = ps[start].clone();
    let mut gap = T::infinity();
    let mut last = (T::infinity(), x.clone());

    for _ in 0..cap {
        let xn = x.norm();
        if xn <= tol {
            return Ok((query.clone(), T::zero()));
        }
        let (j, best) = (0..n)
            .map(|j| (j, x.dot(&ps[j])))
            .fold(
                (0, T::infinity()),
                |acc, c| if c.1 < acc.1 { c } else { acc },
            );
        gap = xn - best.max(T::zero()) / xn;
        // ‖x‖ decreases strictly in exact arithmetic; a stall means rounding has taken over.
        if xn >= last.0 {
            return Ok((query.add(&last.1), last.0));
        }
        if gap <= tol || active.contains(&j) {
            return Ok((query.add(&x), xn));
        }
        last = (xn, x.clone());
        active.push(j);
        lambda.push(T::zero());

        // Minor cycles: move to the affine minimizer of the active set,
        // stepping back to the simplex boundary while it is infeasible.
        loop {
            let mu = affine_min_norm(&ps, &active);
            if mu.iter().all(|&m| m > T::zero()) {
                lambda = mu;
                break;
            }
            let mut theta = T::one();
            let mut blocking = None;
            for (k, (l, m)) in lambda.iter().zip(&mu).enumerate() {
                if *m <= T::zero() && *l > *m {
                    let t = *l / (*l - *m);
                    if blocking.is_none() || t < theta {
                        theta = t;
                        blocking = Some(k);
                    }
                }
            }
            for (l, m) in lambda.iter_mut().zip(&mu) {
                *l = (T::one() - theta) * *l + theta * *m;
            }
            // Drop the blocking point even if θ underflowed.
            if let Some(k) = blocking {
                lambda[k] = T::zero();
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > T::zero()).collect();
            let mut k = 0;
            active.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            lambda.retain(|&l| l > T::zero());
            if active.is_empty() {
                return Err(Error::NonConvergence {
                    iterations: cap,
                    gap: gap.as_f64(),
                });
            }
            let total = lambda.iter().fold(T::zero(), |a, &b| a + b);
            lambda.iter_mut().for_each(|l| *l = *l / total);
            if active.len() == 1 {
                break;
            }
        }
        x = combine(&ps, &active, &lambda, d);
    }
    Err(Error::NonConvergence {
        iterations: cap,
        gap: gap.as_f64(),
    })
}

fn combine<T: Scalar>(ps: &[Token<T>], active: &[usize], lambda: &[T], d: usize) -> Token<T> {
    active
        .iter()
        .zip(lambda)
        .fold(Token::zeros(d), |acc, (&i, &l)| acc.axpy(l, &ps[i]))
}

/// Weights of the minimum-norm point of the affine hull of the active points:
/// solves `[G 1; 1ᵀ 0] [λ; μ] = [0; 1]`.
fn affine_min_norm<T: Scalar>(ps: &[Token<T>], active: &[usize]) -> Vec<T> {
    let k = active.len();
    let mut m = vec![vec![T::zero(); k + 2]; k + 1];
    for a in 0..k {
        for b in 0..k {
            m[a][b] = ps[active[a]].dot(&ps[active[b]]);
        }
        m[a][k] = T::one();
        m[k][a] = T::one();
    }
    m[k][k + 1] = T::one();
    solve(&mut m).into_iter().take(k).collect()
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve<T: Scalar>(m: &mut [Vec<T>]) -> Vec<T> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| {
                m[a][col]
                    .abs()
                    .partial_cmp(&m[b][col].abs())
                    .expect("finite")
            })
            .expect("non-empty");
        m.swap(col, piv);
        let p = m[col][col];
        if p.is_zero() {
            continue;
        }
        for r in col + 1..n {
            let f = m[r][col] / p;
            if !f.is_zero() {
                let (top, bottom) = m.split_at_mut(r);
                for (dst, &v) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *dst = *dst - f * v;
                }
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = m[r][n];
        for c in r + 1..n {
            s = s - m[r][c] * x[c];
        }
        x[r] = if m[r][r].is_zero() {
            T::zero()
        } else {
            s / m[r][r]
        };
    }
    x
}
