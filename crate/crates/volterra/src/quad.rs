//! Adaptive Simpson quadrature with Richardson correction.
//!
//! One routine serves every integral in the crate (clocks, kernel mass,
//! quadratic variation, L-functional denominators). The error test is
//! relative to the locally accumulated value plus a small absolute seed, so
//! integrands spanning many orders of magnitude (e.g. exp(sqrt(s)) growth)
//! refine where the mass actually sits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_DEPTH: u32 = 60;

fn eval_checked<S: Scalar, F: Fn(S) -> S>(f: &F, x: S, context: &str) -> Result<S> {
    let v = f(x);
    if v.is_nan() || v.is_infinite() {
        return Err(Error::SingularIntegrand {
            location: x.to_f64_lossy(),
            context: context.to_string(),
        });
    }
    Ok(v)
}

fn simpson<S: Scalar>(h: S, fa: S, fm: S, fb: S) -> S {
    h / S::of(6.0) * (fa + S::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<S: Scalar, F: Fn(S) -> S>(
    f: &F,
    a: S,
    b: S,
    fa: S,
    fm: S,
    fb: S,
    whole: S,
    rel_tol: S,
    abs_tol: S,
    depth: u32,
    context: &str,
) -> Result<S> {
    let m = (a + b) * S::of(0.5);
    let lm = (a + m) * S::of(0.5);
    let rm = (m + b) * S::of(0.5);
    let flm = eval_checked(f, lm, context)?;
    let frm = eval_checked(f, rm, context)?;
    let h = m - a;
    let left = simpson(h, fa, flm, fm);
    let right = simpson(h, fm, frm, fb);
    let delta = left + right - whole;
    let scale = (left + right).abs();
    if delta.abs() <= S::of(15.0) * (abs_tol + rel_tol * scale) {
        return Ok(left + right + delta / S::of(15.0));
    }
    if depth == 0 {
        return Err(Error::QuadratureNoConvergence {
            a: a.to_f64_lossy(),
            b: b.to_f64_lossy(),
        });
    }
    let half_abs = abs_tol * S::of(0.5);
    let l = recurse(f, a, m, fa, flm, fm, left, rel_tol, half_abs, depth - 1, context)?;
    let r = recurse(f, m, b, fm, frm, fb, right, rel_tol, half_abs, depth - 1, context)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, b]` (a <= b) to relative tolerance `rel_tol`.
pub fn integrate<S: Scalar, F: Fn(S) -> S>(
    f: &F,
    a: S,
    b: S,
    rel_tol: S,
    context: &str,
) -> Result<S> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Expr(format!(
            "non-finite integration bounds in {context}"
        )));
    }
    if a == b {
        return Ok(S::zero());
    }
    if a > b {
        return Err(Error::Expr(format!(
            "reversed integration bounds in {context}"
        )));
    }
    let fa = eval_checked(f, a, context)?;
    let m = (a + b) * S::of(0.5);
    let fm = eval_checked(f, m, context)?;
    let fb = eval_checked(f, b, context)?;
    let whole = simpson(b - a, fa, fm, fb);
    // absolute seed keeps near-zero integrals from over-refining
    let abs_tol = rel_tol;
    recurse(f, a, b, fa, fm, fb, whole, rel_tol, abs_tol, MAX_DEPTH, context)
}

/// Cumulative integrals of `f` from 0 to each time in `times` (ascending).
pub fn cumulative_at<S: Scalar, F: Fn(S) -> S>(
    f: &F,
    times: &[S],
    rel_tol: S,
    context: &str,
) -> Result<Vec<S>> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = S::zero();
    let mut prev = S::zero();
    for &t in times {
        if t < prev {
            return Err(Error::Expr(format!(
                "cumulative_at needs ascending times in {context}"
            )));
        }
        acc = acc + integrate(f, prev, t, rel_tol, context)?;
        out.push(acc);
        prev = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_near_exact() {
        let v: f64 = integrate(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-10, "t").unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let v: f64 = integrate(&|x: f64| (x).sin(), 0.0, std::f64::consts::PI, 1e-12, "t").unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rapidly_growing_integrand() {
        // exact: integral of exp(sqrt(2 s)) / sqrt(2 s) over [0, t] = exp(sqrt(2 t)) - 1,
        // checked away from the removable 1/sqrt endpoint
        let g = |s: f64| (2.0 * s).sqrt().exp() / (2.0 * s).sqrt();
        let t0 = 1e-6;
        let t1 = 800.0;
        let v: f64 = integrate(&g, t0, t1, 1e-10, "t").unwrap();
        let exact = (2.0f64 * t1).sqrt().exp() - (2.0f64 * t0).sqrt().exp();
        assert!((v / exact - 1.0).abs() < 1e-8, "rel err {}", (v / exact - 1.0).abs());
    }

    #[test]
    fn singular_integrand_reports_location() {
        let r: super::Result<f64> = integrate(&|x: f64| 1.0 / x, -1.0, 1.0, 1e-10, "t");
        assert!(matches!(r, Err(Error::SingularIntegrand { .. })));
    }

    #[test]
    fn cumulative_matches_direct() {
        let f = |x: f64| x.exp();
        let times = [0.5, 1.0, 2.0, 4.0];
        let cum = cumulative_at(&f, &times, 1e-12, "t").unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert!((cum[i] - (t.exp() - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_width_interval() {
        let v: f64 = integrate(&|x: f64| x, 3.0, 3.0, 1e-10, "t").unwrap();
        assert_eq!(v, 0.0);
    }
}
