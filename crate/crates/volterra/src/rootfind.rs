//! Root finding for increasing functions: geometric bracket expansion plus a
//! Newton iteration that falls back to bisection whenever a step would leave
//! the bracket or the derivative is unusable.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_ITER: usize = 120;

/// Solve g(x) = 0 for increasing g on a bracket with g(lo) <= 0 <= g(hi).
///
/// `dg` returns the derivative where available; a non-finite or zero value
/// triggers a bisection step instead. Converges when |g| <= residual_tol or
/// the bracket collapses to floating point resolution.
pub fn solve_increasing<S, G, D>(
    g: G,
    dg: D,
    mut lo: S,
    mut hi: S,
    residual_tol: S,
) -> Result<S>
where
    S: Scalar,
    G: Fn(S) -> Result<S>,
    D: Fn(S) -> Result<S>,
{
    let mut glo = g(lo)?;
    let mut ghi = g(hi)?;
    if glo > S::zero() || ghi < S::zero() {
        return Err(Error::RootFind(format!(
            "bracket [{lo}, {hi}] does not straddle the root (g: {glo} .. {ghi})"
        )));
    }
    if glo.abs() <= residual_tol {
        return Ok(lo);
    }
    if ghi.abs() <= residual_tol {
        return Ok(hi);
    }

    let mut x = (lo + hi) * S::of(0.5);
    for _ in 0..MAX_ITER {
        let gx = g(x)?;
        if gx.abs() <= residual_tol {
            return Ok(x);
        }
        if gx > S::zero() {
            hi = x;
            ghi = gx;
        } else {
            lo = x;
            glo = gx;
        }
        let width = hi - lo;
        if width <= (lo.abs() + hi.abs() + S::one()) * S::epsilon() {
            return Ok(x);
        }

        let mut next = None;
        if let Ok(d) = dg(x) {
            if d.is_finite() && d > S::zero() {
                let cand = x - gx / d;
                if cand > lo && cand < hi {
                    next = Some(cand);
                }
            }
        }
        x = next.unwrap_or_else(|| (lo + hi) * S::of(0.5));
        let _ = (glo, ghi);
    }
    Err(Error::RootFind(format!(
        "no convergence after {MAX_ITER} iterations near x = {x}"
    )))
}

/// Expand `hi` geometrically from `start` until g(hi) >= 0, for increasing g
/// with g(start) <= 0. Errors if no sign change appears before `limit`.
pub fn expand_upward<S, G>(g: &G, start: S, limit: S) -> Result<S>
where
    S: Scalar,
    G: Fn(S) -> Result<S>,
{
    let mut hi = start.max(S::epsilon());
    for _ in 0..4096 {
        if g(hi)? >= S::zero() {
            return Ok(hi);
        }
        hi = hi * S::of(2.0);
        if hi > limit {
            return Err(Error::RootFind(format!(
                "no sign change found up to {limit}"
            )));
        }
    }
    Err(Error::RootFind("bracket expansion overflow".into()))
}

/// Shrink `lo` geometrically toward zero until g(lo) <= 0, for increasing g
/// with g(start) >= 0 on (0, start]. Errors with the approached infimum if
/// the function never crosses (g is bounded below by a positive value).
pub fn expand_downward<S, G>(g: &G, start: S, infimum_context: f64) -> Result<S>
where
    S: Scalar,
    G: Fn(S) -> Result<S>,
{
    let mut lo = start;
    let floor = S::min_positive_value() * S::of(1e6);
    let mut last = g(lo)?;
    for _ in 0..4096 {
        if last <= S::zero() {
            return Ok(lo);
        }
        lo = lo * S::of(0.5);
        if lo < floor {
            return Err(Error::OutOfRange {
                value: infimum_context,
                infimum: last.to_f64_lossy(),
            });
        }
        last = g(lo)?;
    }
    Err(Error::RootFind("bracket shrink overflow".into()))
}
