//! Tail diagnostics: the L-functional, clock ratios, finite-horizon
//! limsup surrogates, and regime classification with bound checks.
//!
//! Every limit in the underlying theory is an infinite-time statement;
//! each estimator here is a declared finite-horizon surrogate. Ratios are
//! sampled at geometric times, extrapolated by an affine fit in 1/√t with
//! a 1/log t cross-check (the wider interval wins), and the 0/∞ cases are
//! flagged by explicit thresholds plus a monotone-trend requirement. The
//! boundary L = 1 is decided by the interval, never by the point value.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::forcing::EnvelopeRole;
use crate::noise::{Integrability, SigmaEnvelope};
use crate::nonlinear::Nonlinearity;
use crate::quad;
use crate::scalar::Scalar;
use crate::solver::Trajectory;

/// A diagnostic ratio sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTrace<S: Scalar> {
    pub times: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> RatioTrace<S> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> S {
        *self.values.last().expect("trace never empty")
    }

    pub fn final_time(&self) -> S {
        *self.times.last().expect("trace never empty")
    }

    /// Largest sample over the tail half [T/2, T].
    pub fn tail_max(&self) -> S {
        self.tail_fold(|a, b| if b > a { b } else { a })
    }

    /// Smallest sample over the tail half [T/2, T].
    pub fn tail_min(&self) -> S {
        self.tail_fold(|a, b| if b < a { b } else { a })
    }

    fn tail_fold(&self, pick: impl Fn(S, S) -> S) -> S {
        let cut = self.final_time() * S::of(0.5);
        let mut acc = self.last();
        for (t, v) in self.times.iter().zip(&self.values) {
            if *t >= cut {
                acc = pick(acc, *v);
            }
        }
        acc
    }

    /// Strictly increasing across the last `k` samples.
    pub fn rising(&self, k: usize) -> bool {
        let n = self.values.len();
        if n < k || k < 2 {
            return false;
        }
        self.values[n - k..].windows(2).all(|w| w[1] > w[0])
    }
}

/// Finite-horizon limsup/liminf surrogate over 8 dyadic tail windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStats<S: Scalar> {
    pub limsup: S,
    pub liminf: S,
    pub windows: usize,
}

/// Partitions [T/2, T] into 8 dyadic windows [T(1−2⁻ᵏ), T(1−2⁻ᵏ⁻¹)] and
/// returns the max of per-window maxima and the min of per-window minima.
/// Extending the trace in time can only raise the max and lower the min
/// under the same partition scheme. Every window must hold a sample.
pub fn tail_limsup<S: Scalar>(times: &[S], values: &[S]) -> Result<TailStats<S>> {
    const WINDOWS: usize = 8;
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidGrid(
            "tail windows need matching, nonempty time and value slices".into(),
        ));
    }
    let t_end = *times.last().expect("nonempty");
    if !(t_end > S::zero()) {
        return Err(Error::InvalidGrid("tail windows need a positive final time".into()));
    }
    let mut maxima = [None::<S>; WINDOWS];
    let mut minima = [None::<S>; WINDOWS];
    for (t, v) in times.iter().zip(values) {
        let frac = (S::one() - *t / t_end).to_f64_lossy();
        if frac > 0.5 || frac < 0.0 {
            continue;
        }
        // window k covers frac ∈ (2^{-k-2}, 2^{-k-1}]; the final window
        // absorbs everything past the last cut, including t = T
        let mut k = 0usize;
        let mut edge = 0.25;
        while k + 1 < WINDOWS && frac <= edge {
            k += 1;
            edge *= 0.5;
        }
        maxima[k] = Some(match maxima[k] {
            Some(m) if m >= *v => m,
            _ => *v,
        });
        minima[k] = Some(match minima[k] {
            Some(m) if m <= *v => m,
            _ => *v,
        });
    }
    let filled = maxima.iter().filter(|m| m.is_some()).count();
    if filled < WINDOWS {
        return Err(Error::InsufficientHorizon {
            got: filled,
            need: WINDOWS,
        });
    }
    let limsup = maxima
        .iter()
        .map(|m| m.expect("all windows filled"))
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let liminf = minima
        .iter()
        .map(|m| m.expect("all windows filled"))
        .fold(S::infinity(), |a, b| if b < a { b } else { a });
    Ok(TailStats {
        limsup,
        liminf,
        windows: WINDOWS,
    })
}

pub fn tail_limsup_of<S: Scalar>(trace: &RatioTrace<S>) -> Result<TailStats<S>> {
    tail_limsup(&trace.times, &trace.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LClass {
    Zero,
    Finite,
    Infinite,
}

impl LClass {
    pub fn name(&self) -> &'static str {
        match self {
            LClass::Zero => "zero",
            LClass::Finite => "finite",
            LClass::Infinite => "infinite",
        }
    }
}

/// Tail estimate of a ratio limit, with its sampled trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LEstimate<S: Scalar> {
    pub value: S,
    pub lo: S,
    pub hi: S,
    pub class: LClass,
    pub trace: RatioTrace<S>,
}

impl<S: Scalar> LEstimate<S> {
    /// A bare estimate without trace data, for report assembly.
    pub fn from_parts(value: S, lo: S, hi: S, class: LClass) -> Self {
        LEstimate {
            value,
            lo,
            hi,
            class,
            trace: RatioTrace {
                times: Vec::new(),
                values: Vec::new(),
            },
        }
    }

    /// The interval cannot separate L ∈ (0,1] from L ∈ (1,∞).
    pub fn straddles_one(&self) -> bool {
        self.class == LClass::Finite && self.lo <= S::one() && S::one() < self.hi
    }
}

/// Thresholds for declaring a trace divergent or vanishing. The limits
/// they stand in for are infinite-time statements; these finite cutoffs
/// plus a monotone trend over the last three samples are the artifact's
/// convention and are surfaced in the report interval.
#[derive(Clone, Copy)]
struct FlagPolicy<S: Scalar> {
    inf_threshold: S,
    zero_threshold: S,
}

impl<S: Scalar> FlagPolicy<S> {
    /// For ratios with a linearly growing denominator (the L-functional).
    fn functional() -> Self {
        FlagPolicy {
            inf_threshold: S::of(1e3),
            zero_threshold: S::of(1e-3),
        }
    }

    /// For clock-over-time ratios, whose divergence is polynomially slow.
    fn clock() -> Self {
        FlagPolicy {
            inf_threshold: S::of(10.0),
            zero_threshold: S::of(1e-3),
        }
    }
}

fn fit_affine<S: Scalar>(us: &[S], rs: &[S]) -> (S, S) {
    let n = S::of(us.len() as f64);
    let mut su = S::zero();
    let mut sr = S::zero();
    let mut suu = S::zero();
    let mut sur = S::zero();
    for (u, r) in us.iter().zip(rs) {
        su = su + *u;
        sr = sr + *r;
        suu = suu + *u * *u;
        sur = sur + *u * *r;
    }
    let det = n * suu - su * su;
    if det.abs() <= (n * suu).abs() * S::of(1e-14) {
        return (sr / n, S::zero());
    }
    let a = (sr * suu - su * sur) / det;
    let b = (n * sur - su * sr) / det;
    (a, b)
}

/// Intercept-at-infinity fit of the better-converged half of the trace.
/// Early geometric samples sit far from asymptopia and would drag any
/// global fit, so they are excluded by construction.
fn extrapolate_tail<S: Scalar>(trace: RatioTrace<S>, policy: FlagPolicy<S>) -> LEstimate<S> {
    let n = trace.len();
    let last3 = &trace.values[n - 3..];
    if last3.iter().all(|r| *r > policy.inf_threshold)
        && last3.windows(2).all(|w| w[1] > w[0])
    {
        let lo = last3.iter().fold(S::infinity(), |a, b| if *b < a { *b } else { a });
        return LEstimate {
            value: S::infinity(),
            lo,
            hi: S::infinity(),
            class: LClass::Infinite,
            trace,
        };
    }
    if last3.iter().all(|r| r.abs() < policy.zero_threshold)
        && last3.windows(2).all(|w| w[1].abs() < w[0].abs())
    {
        let hi = last3.iter().fold(S::zero(), |a, b| {
            let m = b.abs();
            if m > a {
                m
            } else {
                a
            }
        });
        return LEstimate {
            value: S::zero(),
            lo: S::zero(),
            hi,
            class: LClass::Zero,
            trace,
        };
    }

    let tail_len = (n / 2).max(4).min(n);
    let ts = &trace.times[n - tail_len..];
    let rs = &trace.values[n - tail_len..];

    let fit_with = |us: &[S], rs: &[S]| -> (S, S) {
        let (a, b) = fit_affine(us, rs);
        let dev_len = us.len().min(4);
        let mut hw = S::zero();
        for (u, r) in us[us.len() - dev_len..].iter().zip(&rs[rs.len() - dev_len..]) {
            let d = (*r - (a + b * *u)).abs();
            if d > hw {
                hw = d;
            }
        }
        (a, hw)
    };

    let us1: Vec<S> = ts.iter().map(|t| S::one() / t.sqrt()).collect();
    let (a1, hw1) = fit_with(&us1, rs);
    let mut lo = a1 - hw1;
    let mut hi = a1 + hw1;

    // cross-check model; only sound where log t is safely positive
    let loggable: Vec<(S, S)> = ts
        .iter()
        .zip(rs)
        .filter(|(t, _)| t.to_f64_lossy() > std::f64::consts::E)
        .map(|(t, r)| (S::one() / t.ln(), *r))
        .collect();
    if loggable.len() >= 4 {
        let us2: Vec<S> = loggable.iter().map(|(u, _)| *u).collect();
        let rs2: Vec<S> = loggable.iter().map(|(_, r)| *r).collect();
        let (a2, hw2) = fit_with(&us2, &rs2);
        lo = lo.min(a2 - hw2);
        hi = hi.max(a2 + hw2);
    }

    let floor = a1.abs() * S::of(1e-12) + S::of(1e-15);
    lo = lo.min(a1 - floor).max(S::zero());
    hi = hi.max(a1 + floor);
    LEstimate {
        value: a1,
        lo,
        hi,
        class: LClass::Finite,
        trace,
    }
}

/// Tail estimate for an already-sampled nonnegative ratio trace. Needs at
/// least 6 points; thresholds follow the L-functional convention.
pub fn ratio_tail_estimate<S: Scalar>(trace: &RatioTrace<S>) -> Result<LEstimate<S>> {
    if trace.len() < 6 {
        return Err(Error::InsufficientHorizon {
            got: trace.len(),
            need: 6,
        });
    }
    Ok(extrapolate_tail(trace.clone(), FlagPolicy::functional()))
}

/// Geometric snapshot indices last/2ʲ, deduplicated, never index 0.
fn geometric_indices(len: usize, samples: usize) -> Vec<usize> {
    let last = len.saturating_sub(1);
    let mut idx = Vec::with_capacity(samples);
    for j in (0..samples).rev() {
        let k = ((last as f64) / 2f64.powi(j as i32)).round() as usize;
        let k = k.max(1).min(last);
        if idx.last() != Some(&k) {
            idx.push(k);
        }
    }
    idx
}

/// Estimates L(γ) = lim γ(t)/(M ∫₀ᵗ f(γ(s))ds) from cumulative quadrature
/// at geometric times horizon/2ʲ, j = 0..samples−1.
pub fn estimate_l<S: Scalar>(
    gamma: &dyn Fn(S) -> Result<S>,
    n: &Nonlinearity<S>,
    mass: S,
    horizon: S,
    samples: usize,
) -> Result<LEstimate<S>> {
    if !(mass > S::zero() && mass.is_finite()) {
        return Err(Error::InvalidKernel("total mass must be positive and finite".into()));
    }
    if !(horizon > S::zero() && horizon.is_finite()) {
        return Err(Error::InvalidGrid("horizon must be positive and finite".into()));
    }

    let captured: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |s: S| match gamma(s) {
        Ok(g) => n.f(g),
        Err(e) => {
            captured.borrow_mut().get_or_insert(e);
            S::nan()
        }
    };

    let mut times = Vec::with_capacity(samples);
    for j in (0..samples).rev() {
        times.push(horizon / S::of(2f64.powi(j as i32)));
    }

    let mut acc = S::zero();
    let mut prev = S::zero();
    let mut usable_t = Vec::new();
    let mut usable_r = Vec::new();
    for t in times {
        let inc = quad::integrate(&integrand, prev, t, S::quad_rel_tol(), "forcing-scale integral")
            .map_err(|e| captured.borrow_mut().take().unwrap_or(e))?;
        if let Some(e) = captured.borrow_mut().take() {
            return Err(e);
        }
        acc = acc + inc;
        prev = t;
        let g = gamma(t)?;
        let denom = mass * acc;
        if denom > S::zero() && denom.is_finite() && g.is_finite() {
            let r = g / denom;
            if r.is_finite() {
                usable_t.push(t);
                usable_r.push(r);
            }
        }
    }
    if usable_t.len() < 6 {
        return Err(Error::InsufficientHorizon {
            got: usable_t.len(),
            need: 6,
        });
    }
    Ok(extrapolate_tail(
        RatioTrace {
            times: usable_t,
            values: usable_r,
        },
        FlagPolicy::functional(),
    ))
}

/// Same estimate from uniform grid samples of γ: cumulative trapezoid of
/// f(γ) along the grid, ratios at geometric snapshot indices. This is the
/// right entry point when γ is already discretized (a sampled forcing, a
/// noise envelope on the solver grid); the trapezoid error is second
/// order in the step, far below the extrapolation interval.
pub fn estimate_l_from_samples<S: Scalar>(
    dt: S,
    gamma: &[S],
    n: &Nonlinearity<S>,
    mass: S,
    samples: usize,
) -> Result<LEstimate<S>> {
    if !(mass > S::zero() && mass.is_finite()) {
        return Err(Error::InvalidKernel("total mass must be positive and finite".into()));
    }
    if gamma.len() < 2 || !(dt > S::zero() && dt.is_finite()) {
        return Err(Error::InvalidGrid(
            "need a positive step and at least two envelope samples".into(),
        ));
    }
    let half = dt * S::of(0.5);
    let mut cum = Vec::with_capacity(gamma.len());
    let mut acc = S::zero();
    cum.push(acc);
    let mut prev = n.f(gamma[0]);
    for g in &gamma[1..] {
        let cur = n.f(*g);
        acc = acc + half * (prev + cur);
        cum.push(acc);
        prev = cur;
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in geometric_indices(gamma.len(), samples) {
        let denom = mass * cum[k];
        if denom > S::zero() && denom.is_finite() && gamma[k].is_finite() {
            let r = gamma[k] / denom;
            if r.is_finite() {
                times.push(dt * S::of(k as f64));
                values.push(r);
            }
        }
    }
    if times.len() < 6 {
        return Err(Error::InsufficientHorizon {
            got: times.len(),
            need: 6,
        });
    }
    Ok(extrapolate_tail(
        RatioTrace { times, values },
        FlagPolicy::functional(),
    ))
}

fn snapshot_trace<S: Scalar>(
    traj: &Trajectory<S>,
    samples: usize,
    mut value_at: impl FnMut(usize, S) -> Result<Option<S>>,
) -> Result<RatioTrace<S>> {
    if traj.len() < 2 {
        return Err(Error::InsufficientHorizon { got: 0, need: 1 });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in geometric_indices(traj.len(), samples) {
        let t = traj.time(k);
        if let Some(v) = value_at(k, t)? {
            if v.is_finite() {
                times.push(t);
                values.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::InsufficientHorizon { got: 0, need: 1 });
    }
    Ok(RatioTrace { times, values })
}

/// F(|x(t)|)/(M t) at geometric snapshot times, with its extrapolated
/// tail value. Divergence of this ratio is polynomially slow, so the
/// ∞-flag fires at a low threshold (above 10 and rising).
pub fn clock_ratio<S: Scalar>(
    traj: &Trajectory<S>,
    n: &Nonlinearity<S>,
    mass: S,
    samples: usize,
) -> Result<LEstimate<S>> {
    let trace = snapshot_trace(traj, samples, |k, t| {
        let r = n.clock(traj.values[k].abs())? / (mass * t);
        Ok(Some(r))
    })?;
    if trace.len() < 6 {
        return Err(Error::InsufficientHorizon {
            got: trace.len(),
            need: 6,
        });
    }
    Ok(extrapolate_tail(trace, FlagPolicy::clock()))
}

/// Φ(|x(t)|)/(M t), the majorant-clock twin of `clock_ratio`.
pub fn phi_clock_ratio<S: Scalar>(
    traj: &Trajectory<S>,
    n: &Nonlinearity<S>,
    mass: S,
    samples: usize,
) -> Result<LEstimate<S>> {
    let trace = snapshot_trace(traj, samples, |k, t| {
        let r = n.phi_clock(traj.values[k].abs())? / (mass * t);
        Ok(Some(r))
    })?;
    if trace.len() < 6 {
        return Err(Error::InsufficientHorizon {
            got: trace.len(),
            need: 6,
        });
    }
    Ok(extrapolate_tail(trace, FlagPolicy::clock()))
}

/// x(t)/H(t) at geometric snapshot times; samples with H ≤ 0 are skipped.
pub fn xh_trace<S: Scalar>(traj: &Trajectory<S>, samples: usize) -> Result<RatioTrace<S>> {
    snapshot_trace(traj, samples, |k, _| {
        let h = traj.h_values[k];
        Ok(if h > S::zero() {
            Some(traj.values[k] / h)
        } else {
            None
        })
    })
}

/// X(t)/Σ(t) at geometric snapshot times; times where the iterated-log
/// envelope is undefined (quadratic variation ≤ e) are skipped.
pub fn xsigma_trace<S: Scalar>(
    traj: &Trajectory<S>,
    sigma: &SigmaEnvelope<S>,
    samples: usize,
) -> Result<RatioTrace<S>> {
    snapshot_trace(traj, samples, |k, t| match sigma.envelope(t) {
        Ok(env) => Ok(Some(traj.values[k] / env)),
        Err(Error::DomainGuard { .. }) => Ok(None),
        Err(e) => Err(e),
    })
}

/// (X(t) − Z(t))/Σ(t) at geometric snapshot times.
pub fn residual_sigma_trace<S: Scalar>(
    traj: &Trajectory<S>,
    sigma: &SigmaEnvelope<S>,
    samples: usize,
) -> Result<RatioTrace<S>> {
    snapshot_trace(traj, samples, |k, t| match sigma.envelope(t) {
        Ok(env) => Ok(Some((traj.values[k] - traj.z_values[k]) / env)),
        Err(Error::DomainGuard { .. }) => Ok(None),
        Err(e) => Err(e),
    })
}

/// |x(t)|/γ(t) at geometric snapshot times.
pub fn envelope_ratio_trace<S: Scalar>(
    traj: &Trajectory<S>,
    gamma: &dyn Fn(S) -> Result<S>,
    samples: usize,
) -> Result<RatioTrace<S>> {
    snapshot_trace(traj, samples, |k, t| {
        let g = gamma(t)?;
        Ok(if g > S::zero() {
            Some(traj.values[k].abs() / g)
        } else {
            None
        })
    })
}

/// F(|x(t)|)/(M t) sampled every `stride` grid steps, dense enough for
/// the dyadic tail windows.
pub fn dense_clock_trace<S: Scalar>(
    traj: &Trajectory<S>,
    n: &Nonlinearity<S>,
    mass: S,
    stride: usize,
) -> Result<RatioTrace<S>> {
    dense_trace(traj, stride, |k, t| {
        Ok(Some(n.clock(traj.values[k].abs())? / (mass * t)))
    })
}

/// X(t)/Σ(t) sampled every `stride` grid steps.
pub fn dense_xsigma_trace<S: Scalar>(
    traj: &Trajectory<S>,
    sigma: &SigmaEnvelope<S>,
    stride: usize,
) -> Result<RatioTrace<S>> {
    dense_trace(traj, stride, |k, t| match sigma.envelope(t) {
        Ok(env) => Ok(Some(traj.values[k] / env)),
        Err(Error::DomainGuard { .. }) => Ok(None),
        Err(e) => Err(e),
    })
}

fn dense_trace<S: Scalar>(
    traj: &Trajectory<S>,
    stride: usize,
    mut value_at: impl FnMut(usize, S) -> Result<Option<S>>,
) -> Result<RatioTrace<S>> {
    if traj.len() < 2 {
        return Err(Error::InsufficientHorizon { got: 0, need: 1 });
    }
    let stride = stride.max(1);
    let last = traj.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut k = stride.max(1);
    loop {
        let k_eff = k.min(last);
        let t = traj.time(k_eff);
        if let Some(v) = value_at(k_eff, t)? {
            if v.is_finite() {
                times.push(t);
                values.push(v);
            }
        }
        if k_eff == last {
            break;
        }
        k += stride;
    }
    if times.is_empty() {
        return Err(Error::InsufficientHorizon { got: 0, need: 1 });
    }
    Ok(RatioTrace { times, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Nonnegative kernel, forcing and initial state: one-signed growth.
    DeterministicPositive,
    /// Signed forcing under asymptotic oddness, judged against an
    /// analytic envelope.
    DeterministicSigned,
    Brownian,
    Stable,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::DeterministicPositive => "deterministic_positive",
            Mode::DeterministicSigned => "deterministic_signed",
            Mode::Brownian => "brownian",
            Mode::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    OdeDominated,
    IntermediateLow,
    IntermediateHigh,
    ForcingDominated,
    Indeterminate,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::OdeDominated => "ode_dominated",
            Regime::IntermediateLow => "intermediate_low",
            Regime::IntermediateHigh => "intermediate_high",
            Regime::ForcingDominated => "forcing_dominated",
            Regime::Indeterminate => "indeterminate",
        }
    }

    /// Position in the growth order; the indeterminate outcome sits
    /// outside the chain.
    pub fn rank(&self) -> Option<u8> {
        match self {
            Regime::OdeDominated => Some(0),
            Regime::IntermediateLow => Some(1),
            Regime::IntermediateHigh => Some(2),
            Regime::ForcingDominated => Some(3),
            Regime::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "n/a",
        }
    }
}

/// One theorem-shaped bound check against a measured tail statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome<S: Scalar> {
    pub name: &'static str,
    pub status: CheckStatus,
    pub measured: Option<S>,
    pub lo: Option<S>,
    pub hi: Option<S>,
}

impl<S: Scalar> CheckOutcome<S> {
    fn not_applicable(name: &'static str) -> Self {
        CheckOutcome {
            name,
            status: CheckStatus::NotApplicable,
            measured: None,
            lo: None,
            hi: None,
        }
    }

    fn band(name: &'static str, measured: Option<S>, lo: S, hi: S) -> Self {
        match measured {
            None => Self::not_applicable(name),
            Some(m) => CheckOutcome {
                name,
                status: if m >= lo && m <= hi {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                measured: Some(m),
                lo: Some(lo),
                hi: Some(hi),
            },
        }
    }

    fn at_most(name: &'static str, measured: Option<S>, hi: S) -> Self {
        match measured {
            None => Self::not_applicable(name),
            Some(m) => CheckOutcome {
                name,
                status: if m <= hi { CheckStatus::Pass } else { CheckStatus::Fail },
                measured: Some(m),
                lo: None,
                hi: Some(hi),
            },
        }
    }

    /// Divergence surrogate: the trace's last value clears the floor and
    /// the last `k` samples rise monotonically.
    fn diverging(name: &'static str, trace: Option<&RatioTrace<S>>, floor: S, k: usize) -> Self {
        match trace {
            None => Self::not_applicable(name),
            Some(tr) => {
                let ok = tr.last() >= floor && tr.rising(k.min(tr.len()));
                CheckOutcome {
                    name,
                    status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                    measured: Some(tr.last()),
                    lo: Some(floor),
                    hi: None,
                }
            }
        }
    }
}

/// Bands around the theory's pinned limits. Every limit is infinite-time;
/// these are the declared finite-horizon allowances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<S: Scalar> {
    /// Relative band around pinned ratio limits (x/H, X/Σ, |x|/γ).
    pub ratio: S,
    /// Relative band around clock-ratio limits.
    pub clock: S,
    /// Ceiling for |(X − Z)/Σ| at the horizon.
    pub residual: S,
    /// A trace counts as divergent once it clears this and keeps rising.
    pub divergence_floor: S,
    /// A vanishing limit must sit below this at the horizon.
    pub vanish_ceiling: S,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        Tolerances {
            ratio: S::of(0.10),
            clock: S::of(0.10),
            residual: S::of(0.10),
            divergence_floor: S::of(10.0),
            vanish_ceiling: S::of(0.10),
        }
    }
}

/// Everything the classifier may consult. Traces are optional; a missing
/// trace turns its checks into n/a, never into a guess.
pub struct ClassifyInput<'a, S: Scalar> {
    pub mode: Mode,
    pub l: &'a LEstimate<S>,
    /// F(|x|)/(Mt) snapshots.
    pub clock: Option<&'a RatioTrace<S>>,
    pub xh: Option<&'a RatioTrace<S>>,
    pub xsigma: Option<&'a RatioTrace<S>>,
    pub residual_sigma: Option<&'a RatioTrace<S>>,
    pub envelope_ratio: Option<&'a RatioTrace<S>>,
    pub envelope_role: Option<EnvelopeRole>,
    pub integrability: Option<Integrability>,
}

impl<'a, S: Scalar> ClassifyInput<'a, S> {
    pub fn new(mode: Mode, l: &'a LEstimate<S>) -> Self {
        ClassifyInput {
            mode,
            l,
            clock: None,
            xh: None,
            xsigma: None,
            residual_sigma: None,
            envelope_ratio: None,
            envelope_role: None,
            integrability: None,
        }
    }
}

/// Regime label, predicted bounds and their checks, serialized as a flat
/// key-value report.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport<S: Scalar> {
    pub mode: Mode,
    pub regime: Regime,
    pub l_value: S,
    pub l_lo: S,
    pub l_hi: S,
    pub l_class: LClass,
    /// 1 + 1/L, the lower tracking bound, defined for L ∈ (1,∞).
    pub g_lower: Option<S>,
    /// L/(L−1), the upper tracking bound, defined for L ∈ (1,∞).
    pub g_upper: Option<S>,
    pub checks: Vec<CheckOutcome<S>>,
    pub notes: Vec<String>,
}

impl<S: Scalar> RegimeReport<S> {
    pub fn all_checks_pass(&self) -> bool {
        !self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name)
            .collect()
    }

    pub fn render(&self) -> String {
        fn num(v: f64) -> String {
            if v.is_infinite() {
                if v > 0.0 { "inf".into() } else { "-inf".into() }
            } else {
                format!("{v}")
            }
        }
        let opt = |v: Option<S>| match v {
            Some(v) => num(v.to_f64_lossy()),
            None => "n/a".into(),
        };
        let mut out = String::new();
        out.push_str(&format!("mode = {}\n", self.mode.name()));
        out.push_str(&format!("regime = {}\n", self.regime.name()));
        out.push_str(&format!("L = {}\n", num(self.l_value.to_f64_lossy())));
        out.push_str(&format!("L_lo = {}\n", num(self.l_lo.to_f64_lossy())));
        out.push_str(&format!("L_hi = {}\n", num(self.l_hi.to_f64_lossy())));
        out.push_str(&format!("L_class = {}\n", self.l_class.name()));
        out.push_str(&format!("G_L = {}\n", opt(self.g_lower)));
        out.push_str(&format!("G_U = {}\n", opt(self.g_upper)));
        for c in &self.checks {
            out.push_str(&format!("checks.{} = {}\n", c.name, c.status.name()));
            if let Some(m) = c.measured {
                out.push_str(&format!("measured.{} = {}\n", c.name, num(m.to_f64_lossy())));
            }
            if c.lo.is_some() || c.hi.is_some() {
                out.push_str(&format!(
                    "band.{} = [{}, {}]\n",
                    c.name,
                    opt(c.lo),
                    opt(c.hi)
                ));
            }
        }
        for (i, n) in self.notes.iter().enumerate() {
            out.push_str(&format!("note.{} = {}\n", i + 1, n));
        }
        out
    }
}

fn tail_estimate_value<S: Scalar>(trace: &RatioTrace<S>, policy: FlagPolicy<S>) -> S {
    if trace.len() >= 6 {
        let est = extrapolate_tail(trace.clone(), policy);
        match est.class {
            LClass::Infinite => S::infinity(),
            LClass::Zero => S::zero(),
            LClass::Finite => est.value,
        }
    } else {
        trace.last()
    }
}

/// Maps the L interval to a regime and runs the mode's bound checks
/// against the supplied tail statistics. Pure; never errors. An interval
/// straddling 1 yields the explicit indeterminate outcome.
pub fn classify<S: Scalar>(input: &ClassifyInput<S>, tol: &Tolerances<S>) -> RegimeReport<S> {
    let l = input.l;
    let one = S::one();
    let regime = match l.class {
        LClass::Zero => Regime::OdeDominated,
        LClass::Infinite => Regime::ForcingDominated,
        LClass::Finite => {
            if l.hi <= one {
                Regime::IntermediateLow
            } else if l.lo > one {
                Regime::IntermediateHigh
            } else {
                Regime::Indeterminate
            }
        }
    };

    let (g_lower, g_upper) = if regime == Regime::IntermediateHigh {
        (Some(one + one / l.value), Some(l.value / (l.value - one)))
    } else {
        (None, None)
    };

    let mut checks: Vec<CheckOutcome<S>> = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    let clock_tail = input
        .clock
        .map(|tr| tail_estimate_value(tr, FlagPolicy::clock()));
    let xh_tail = input
        .xh
        .map(|tr| tail_estimate_value(tr, FlagPolicy::functional()));

    for (name, tail) in [("clock ratio", &clock_tail), ("x/H ratio", &xh_tail)] {
        if let Some(v) = tail {
            if !v.is_finite() {
                notes.push(format!(
                    "{name} tail extrapolation crossed the divergence threshold \
                     (a finite-horizon convention); checks against it use the flagged value"
                ));
            }
        }
    }

    if regime == Regime::Indeterminate {
        notes.push(format!(
            "L interval [{}, {}] straddles 1; regime left undecided rather than guessed",
            l.lo.to_f64_lossy(),
            l.hi.to_f64_lossy()
        ));
        return RegimeReport {
            mode: input.mode,
            regime,
            l_value: l.value,
            l_lo: l.lo,
            l_hi: l.hi,
            l_class: l.class,
            g_lower,
            g_upper,
            checks,
            notes,
        };
    }

    match input.mode {
        Mode::DeterministicPositive => match regime {
            Regime::OdeDominated => {
                checks.push(CheckOutcome::band(
                    "clock_ratio_near_one",
                    clock_tail,
                    one - tol.clock,
                    one + tol.clock,
                ));
                checks.push(CheckOutcome::diverging(
                    "xh_ratio_diverging",
                    input.xh,
                    tol.divergence_floor,
                    4,
                ));
            }
            Regime::IntermediateLow => {
                checks.push(CheckOutcome::band(
                    "clock_ratio_within_band",
                    clock_tail,
                    one - tol.clock,
                    (one + l.hi) * (one + tol.clock),
                ));
                notes.push(
                    "no x/H prediction for L in (0,1]: a finite limit and divergence both \
                     occur at the same L"
                        .into(),
                );
            }
            Regime::IntermediateHigh => {
                checks.push(CheckOutcome::band(
                    "clock_ratio_within_band",
                    clock_tail,
                    one - tol.clock,
                    (one + l.hi) * (one + tol.clock),
                ));
                let (gl, gu) = (g_lower.expect("set above"), g_upper.expect("set above"));
                let measured = input.xh.map(|tr| (tr.tail_min(), tr.tail_max()));
                match measured {
                    None => checks.push(CheckOutcome::not_applicable("xh_ratio_within_bounds")),
                    Some((mn, mx)) => {
                        let lo_bound = gl * (one - tol.ratio);
                        let hi_bound = gu * (one + tol.ratio);
                        let ok = mn >= lo_bound && mx <= hi_bound;
                        checks.push(CheckOutcome {
                            name: "xh_ratio_within_bounds",
                            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                            measured: xh_tail,
                            lo: Some(lo_bound),
                            hi: Some(hi_bound),
                        });
                    }
                }
            }
            Regime::ForcingDominated => {
                checks.push(CheckOutcome::band(
                    "xh_ratio_near_one",
                    xh_tail,
                    one - tol.ratio,
                    one + tol.ratio,
                ));
                checks.push(CheckOutcome::diverging(
                    "clock_ratio_diverging",
                    input.clock,
                    tol.divergence_floor,
                    3,
                ));
            }
            Regime::Indeterminate => unreachable!("returned above"),
        },
        Mode::DeterministicSigned => {
            let role = input.envelope_role.unwrap_or(EnvelopeRole::Gamma);
            let tail_max = input.envelope_ratio.map(|tr| tr.tail_max());
            match role {
                EnvelopeRole::Gamma => {
                    checks.push(CheckOutcome::band(
                        "envelope_ratio_limsup_one",
                        tail_max,
                        one - tol.ratio,
                        one + tol.ratio,
                    ));
                }
                EnvelopeRole::GammaPlus => {
                    if l.class == LClass::Infinite {
                        checks.push(CheckOutcome::at_most(
                            "envelope_ratio_bounded",
                            tail_max,
                            tol.vanish_ceiling,
                        ));
                    } else if l.lo > one {
                        checks.push(CheckOutcome::at_most(
                            "envelope_ratio_bounded",
                            tail_max,
                            (one / l.value) * (one + tol.ratio),
                        ));
                    } else {
                        checks.push(CheckOutcome::not_applicable("envelope_ratio_bounded"));
                        notes.push(
                            "upper envelope bound needs L > 1 for the plus-envelope".into(),
                        );
                    }
                }
                EnvelopeRole::GammaMinus => {
                    checks.push(CheckOutcome::diverging(
                        "envelope_ratio_diverging",
                        input.envelope_ratio,
                        tol.divergence_floor,
                        3,
                    ));
                }
            }
        }
        Mode::Brownian => match regime {
            Regime::OdeDominated => {
                checks.push(CheckOutcome::at_most(
                    "clock_limsup_at_most_one",
                    clock_tail,
                    one + tol.clock,
                ));
            }
            Regime::IntermediateLow => {
                checks.push(CheckOutcome::at_most(
                    "clock_limsup_within_band",
                    clock_tail,
                    (one + l.hi) * (one + tol.clock),
                ));
            }
            Regime::IntermediateHigh => {
                checks.push(CheckOutcome::at_most(
                    "clock_limsup_within_band",
                    clock_tail,
                    (one + l.hi) * (one + tol.clock),
                ));
                let gu = g_upper.expect("set above");
                match input.xsigma {
                    None => checks.push(CheckOutcome::not_applicable("xsigma_within_bounds")),
                    Some(tr) => {
                        let (mn, mx) = (tr.tail_min(), tr.tail_max());
                        let bound = gu * (one + tol.ratio);
                        let ok = mx <= bound && mn >= -bound;
                        checks.push(CheckOutcome {
                            name: "xsigma_within_bounds",
                            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                            measured: Some(mx),
                            lo: Some(-bound),
                            hi: Some(bound),
                        });
                    }
                }
                if l.value > S::of(2.0) {
                    notes.push("fluctuation bounds straddle zero: recurrent for L > 2".into());
                } else {
                    notes.push(
                        "recurrence is not asserted for L in (1,2); fluctuation statistics \
                         reported only"
                            .into(),
                    );
                }
            }
            Regime::ForcingDominated => {
                let (mx, mn) = match input.xsigma {
                    Some(tr) => (Some(tr.tail_max()), Some(tr.tail_min())),
                    None => (None, None),
                };
                checks.push(CheckOutcome::band(
                    "xsigma_limsup_near_one",
                    mx,
                    one - tol.ratio,
                    one + tol.ratio,
                ));
                checks.push(CheckOutcome::band(
                    "xsigma_liminf_near_minus_one",
                    mn,
                    -one - tol.ratio,
                    -one + tol.ratio,
                ));
                checks.push(CheckOutcome::at_most(
                    "residual_over_sigma_small",
                    input.residual_sigma.map(|tr| tr.last().abs()),
                    tol.residual,
                ));
            }
            Regime::Indeterminate => unreachable!("returned above"),
        },
        Mode::Stable => {
            let integrable = input.integrability;
            let tail_max = input.envelope_ratio.map(|tr| tr.tail_max());
            match regime {
                Regime::OdeDominated => match integrable {
                    Some(Integrability::Finite) => {
                        let measured = input.clock.map(|tr| tr.tail_max());
                        checks.push(CheckOutcome::at_most(
                            "clock_limsup_at_most_one",
                            measured,
                            one + tol.clock,
                        ));
                    }
                    Some(Integrability::Infinite) => {
                        checks.push(CheckOutcome::not_applicable("clock_limsup_at_most_one"));
                        notes.push(
                            "growth retention needs an integrable envelope; the supplied one \
                             diverges"
                                .into(),
                        );
                    }
                    None => {
                        checks.push(CheckOutcome::not_applicable("clock_limsup_at_most_one"));
                        notes.push(
                            "envelope integrability was not supplied; retention check skipped"
                                .into(),
                        );
                    }
                },
                Regime::IntermediateLow => {
                    notes.push(
                        "no stable-noise statement for L in (0,1]: supply an envelope with \
                         L = 0 or L > 1"
                            .into(),
                    );
                }
                Regime::IntermediateHigh | Regime::ForcingDominated => match integrable {
                    Some(Integrability::Finite) => {
                        let hi = if l.class == LClass::Infinite {
                            tol.vanish_ceiling
                        } else {
                            (one / l.value) * (one + tol.ratio)
                        };
                        checks.push(CheckOutcome::at_most(
                            "envelope_ratio_bounded",
                            tail_max,
                            hi,
                        ));
                    }
                    Some(Integrability::Infinite) => {
                        checks.push(CheckOutcome::diverging(
                            "envelope_ratio_diverging",
                            input.envelope_ratio,
                            tol.divergence_floor,
                            3,
                        ));
                    }
                    None => {
                        checks.push(CheckOutcome::not_applicable("envelope_ratio_bounded"));
                        notes.push(
                            "envelope integrability was not supplied; dichotomy check skipped"
                                .into(),
                        );
                    }
                },
                Regime::Indeterminate => unreachable!("returned above"),
            }
        }
    }

    RegimeReport {
        mode: input.mode,
        regime,
        l_value: l.value,
        l_lo: l.lo,
        l_hi: l.hi,
        l_class: l.class,
        g_lower,
        g_upper,
        checks,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinear::Nonlinearity;
    use proptest::prelude::*;

    fn power(beta: f64) -> Nonlinearity<f64> {
        Nonlinearity::power(beta).unwrap()
    }

    enum Expect {
        Finite(f64),
        Zero,
        Infinite,
    }

    /// Closed-form envelope families with known L: the power family's
    /// exact ODE profile, the log-type exponential profile, and the
    /// polynomial family (1+t)^ε where L is 0, ε or ∞ according as ε
    /// compares with 1/(1−β).
    #[test]
    fn l_suite_recovers_closed_form_values_and_flags() {
        let cases: Vec<(&str, Nonlinearity<f64>, Box<dyn Fn(f64) -> f64>, f64, usize, Expect)> = vec![
            (
                "power beta=1/2 L=1/2",
                power(0.5),
                Box::new(|t: f64| (0.5 * 0.5 * t).powi(2)),
                1e6,
                20,
                Expect::Finite(0.5),
            ),
            (
                "power beta=1/2 L=1",
                power(0.5),
                Box::new(|t: f64| (0.5 * t).powi(2)),
                1e6,
                20,
                Expect::Finite(1.0),
            ),
            (
                "power beta=1/2 L=2",
                power(0.5),
                Box::new(|t: f64| t.powi(2)),
                1e6,
                20,
                Expect::Finite(2.0),
            ),
            (
                "power beta=3/4 L=3/2",
                power(0.75),
                Box::new(|t: f64| (1.5 * 0.25 * t).powi(4)),
                1e6,
                20,
                Expect::Finite(1.5),
            ),
            (
                "logtype L=1",
                Nonlinearity::logtype(),
                Box::new(|t: f64| (2.0 * (t + 1.0)).sqrt().exp() - std::f64::consts::E),
                1e3,
                12,
                Expect::Finite(1.0),
            ),
            (
                "logtype L=2",
                Nonlinearity::logtype(),
                Box::new(|t: f64| (4.0 * (t + 1.0)).sqrt().exp() - std::f64::consts::E),
                1e3,
                12,
                Expect::Finite(2.0),
            ),
            (
                "logtype L=4",
                Nonlinearity::logtype(),
                Box::new(|t: f64| (8.0 * (t + 1.0)).sqrt().exp() - std::f64::consts::E),
                1e3,
                12,
                Expect::Finite(4.0),
            ),
            (
                "polynomial eps=10 beta=0.9",
                power(0.9),
                Box::new(|t: f64| (1.0 + t).powi(10)),
                1e3,
                12,
                Expect::Finite(10.0),
            ),
            (
                "polynomial eps=2 beta=1/2",
                power(0.5),
                Box::new(|t: f64| (1.0 + t).powi(2)),
                1e3,
                12,
                Expect::Finite(2.0),
            ),
            (
                "bounded envelope",
                power(0.5),
                Box::new(|t: f64| 3.0 - 1.0 / (1.0 + t)),
                1e6,
                20,
                Expect::Zero,
            ),
            (
                // r(t) ~ 5.5(1+t)^{-1/2} needs t ≳ 3e7 to duck the flag
                // threshold at three consecutive geometric times
                "polynomial eps=5 beta=0.9 subcritical",
                power(0.9),
                Box::new(|t: f64| (1.0 + t).powi(5)),
                1e9,
                20,
                Expect::Zero,
            ),
            (
                "polynomial eps=3 beta=1/2 supercritical",
                power(0.5),
                Box::new(|t: f64| (1.0 + t).powi(3)),
                1e6,
                20,
                Expect::Infinite,
            ),
        ];
        assert_eq!(cases.len(), 12);

        for (name, n, gamma, horizon, samples, expect) in cases {
            let g = move |t: f64| Ok(gamma(t));
            let est = estimate_l(&g, &n, 1.0, horizon, samples).unwrap();
            match expect {
                Expect::Finite(l) => {
                    assert_eq!(est.class, LClass::Finite, "{name}");
                    let rel = (est.value - l).abs() / l;
                    assert!(rel <= 0.02, "{name}: estimate {} vs {l}", est.value);
                    assert!(est.lo <= est.value && est.value <= est.hi, "{name}");
                }
                Expect::Zero => assert_eq!(est.class, LClass::Zero, "{name}"),
                Expect::Infinite => assert_eq!(est.class, LClass::Infinite, "{name}"),
            }
        }
    }

    #[test]
    fn power_family_estimate_is_near_exact() {
        let g = |t: f64| Ok((0.5 * t).powi(2));
        let est = estimate_l(&g, &power(0.5), 1.0, 1e6, 20).unwrap();
        assert!((est.value - 1.0).abs() < 1e-6, "estimate {}", est.value);
    }

    #[test]
    fn grid_sample_estimate_agrees_with_the_quadrature_path() {
        // γ(t) = (t/2)² under f = √ gives L = 1; the grid variant must land
        // inside its own interval and within trapezoid error of the
        // quadrature-based estimate.
        let dt = 0.05;
        let steps = 200_000;
        let gamma: Vec<f64> = (0..=steps).map(|k| (0.5 * dt * k as f64).powi(2)).collect();
        let est = estimate_l_from_samples(dt, &gamma, &power(0.5), 1.0, 20).unwrap();
        assert_eq!(est.class, LClass::Finite);
        assert!((est.value - 1.0).abs() < 1e-3, "estimate {}", est.value);
        assert!(est.lo <= 1.0 + 1e-3 && 1.0 - 1e-3 <= est.hi);

        // A diverging envelope flags the same way it does under quadrature.
        let expo: Vec<f64> = (0..=40_000)
            .map(|k| ((2.0 * (2.0 * dt * k as f64 + 1.0)).sqrt() * 2.0).exp() - std::f64::consts::E)
            .collect();
        let est = estimate_l_from_samples(2.0 * dt, &expo, &Nonlinearity::logtype(), 1.0, 12)
            .unwrap();
        assert_eq!(est.class, LClass::Finite);
        assert!((est.value - 4.0).abs() < 0.08, "estimate {}", est.value);
    }

    #[test]
    fn grid_sample_estimate_rejects_degenerate_input() {
        let n = power(0.5);
        assert!(matches!(
            estimate_l_from_samples(0.0, &[1.0, 2.0], &n, 1.0, 8),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            estimate_l_from_samples(0.1, &[1.0], &n, 1.0, 8),
            Err(Error::InvalidGrid(_))
        ));
        // all-zero envelope: no usable ratio points
        let zeros = vec![0.0; 100];
        assert!(matches!(
            estimate_l_from_samples(0.1, &zeros, &n, 1.0, 8),
            Err(Error::InsufficientHorizon { .. })
        ));
    }

    #[test]
    fn bounded_envelope_gives_zero_trivially() {
        // constant-limit envelope: the denominator grows linearly
        let g = |_: f64| Ok(7.0);
        let est = estimate_l(&g, &power(0.5), 2.0, 1e6, 16).unwrap();
        assert_eq!(est.class, LClass::Zero);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn too_few_usable_points_is_an_error() {
        let g = |t: f64| Ok(1.0 + t);
        match estimate_l(&g, &power(0.5), 1.0, 100.0, 5) {
            Err(Error::InsufficientHorizon { got, need }) => {
                assert_eq!((got, need), (5, 6));
            }
            other => panic!("expected horizon error, got {other:?}"),
        }
    }

    #[test]
    fn scale_consistency_is_exact_algebra() {
        // r scales by c^{1−β} pointwise when γ scales by c
        let beta = 0.6;
        let c = 3.7f64;
        let g1 = |t: f64| Ok((1.0 + t).powi(2));
        let g2 = move |t: f64| Ok(c * (1.0 + t).powi(2));
        let e1 = estimate_l(&g1, &power(beta), 1.0, 1e4, 12).unwrap();
        let e2 = estimate_l(&g2, &power(beta), 1.0, 1e4, 12).unwrap();
        let factor = c.powf(1.0 - beta);
        for (r1, r2) in e1.trace.values.iter().zip(&e2.trace.values) {
            assert!(
                (r2 / r1 - factor).abs() <= 1e-8 * factor,
                "ratio {} vs {factor}",
                r2 / r1
            );
        }
    }

    #[test]
    fn majorant_clock_estimate_matches_functional_estimate() {
        // for a log-type envelope with L = 2 the majorant-clock ratio
        // Φ(γ(t))/(Mt) and the functional estimate must agree within
        // their combined intervals
        let n = Nonlinearity::logtype();
        let l = 2.0f64;
        let gamma = move |t: f64| (2.0 * l * (t + 1.0)).sqrt().exp() - std::f64::consts::E;
        let g = move |t: f64| Ok(gamma(t));
        let est = estimate_l(&g, &n, 1.0, 1e3, 12).unwrap();

        let mut times = Vec::new();
        let mut values = Vec::new();
        for j in (0..12).rev() {
            let t = 1e3 / 2f64.powi(j);
            times.push(t);
            values.push(n.phi_clock(gamma(t)).unwrap() / t);
        }
        let phi_est = ratio_tail_estimate(&RatioTrace { times, values }).unwrap();

        assert_eq!(est.class, LClass::Finite);
        assert_eq!(phi_est.class, LClass::Finite);
        let hw = (est.hi - est.lo) + (phi_est.hi - phi_est.lo);
        assert!(
            (est.value - phi_est.value).abs() <= hw.max(1e-3),
            "functional {} vs majorant-clock {}",
            est.value,
            phi_est.value
        );
        assert!((phi_est.value - l).abs() / l <= 0.02);
    }

    fn synthetic_trajectory(dt: f64, steps: usize, x: impl Fn(f64) -> f64) -> Trajectory<f64> {
        let values: Vec<f64> = (0..=steps).map(|k| x(dt * k as f64)).collect();
        let h_values = vec![0.0; steps + 1];
        let z_values = vec![0.0; steps + 1];
        Trajectory {
            dt,
            initial: values[0],
            values,
            h_values,
            z_values,
            truncated_at: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn clock_ratio_recovers_the_golden_limit() {
        let a = (3.0 + 5f64.sqrt()) / 2.0;
        let traj = synthetic_trajectory(0.5, 20_000, |t| a * (1.0 + t / 2.0).powi(2));
        let est = clock_ratio(&traj, &power(0.5), 1.0, 14).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_eq!(est.class, LClass::Finite);
        assert!(
            (est.value - phi).abs() <= 5e-3,
            "clock tail {} vs {phi}",
            est.value
        );
    }

    #[test]
    fn clock_ratio_flags_superexponential_growth() {
        let traj = synthetic_trajectory(0.5, 6_000, |t| {
            ((2.0 * (t + 1.0)).powf(0.75)).exp() - std::f64::consts::E
        });
        let est = clock_ratio(&traj, &Nonlinearity::logtype(), 1.0, 12).unwrap();
        assert_eq!(est.class, LClass::Infinite);
        assert!(est.value.is_infinite());
    }

    #[test]
    fn tail_limsup_handles_constant_monotone_and_oscillating_traces() {
        // constant
        let times: Vec<f64> = (1..=4096).map(|k| k as f64).collect();
        let constants = vec![2.5; times.len()];
        let stats = tail_limsup(&times, &constants).unwrap();
        assert_eq!((stats.limsup, stats.liminf), (2.5, 2.5));

        // monotone increasing: the limsup is the final value
        let rising: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        let stats = tail_limsup(&times, &rising).unwrap();
        assert_eq!(stats.limsup, *rising.last().unwrap());

        // sin(log t) with the horizon placed so a peak lands in the tail
        let t_end = 2e6;
        let n = 400_000;
        let osc_times: Vec<f64> = (1..=n).map(|k| t_end * k as f64 / n as f64).collect();
        let osc: Vec<f64> = osc_times.iter().map(|t| t.ln().sin()).collect();
        let stats = tail_limsup(&osc_times, &osc).unwrap();
        assert!((stats.limsup - 1.0).abs() < 1e-3, "limsup {}", stats.limsup);
    }

    #[test]
    fn tail_limsup_requires_every_window() {
        // samples confined to the last tenth leave early windows empty
        let times: Vec<f64> = (0..100).map(|k| 900.0 + k as f64).collect();
        let values = vec![1.0; times.len()];
        match tail_limsup(&times, &values) {
            Err(Error::InsufficientHorizon { got, need }) => {
                assert!(got < need);
                assert_eq!(need, 8);
            }
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn dense_clock_trace_is_flat_for_the_exact_ode_profile() {
        let traj = synthetic_trajectory(0.05, 40_000, |t| (1.0 + t / 2.0).powi(2));
        let trace = dense_clock_trace(&traj, &power(0.5), 1.0, 37).unwrap();
        let stats = tail_limsup_of(&trace).unwrap();
        assert!((stats.limsup - 1.0).abs() < 1e-9);
        assert!((stats.liminf - 1.0).abs() < 1e-9);
    }

    #[test]
    fn snapshot_traces_skip_undefined_points() {
        let mut traj = synthetic_trajectory(1.0, 20, |t| t + 1.0);
        traj.h_values = traj.values.iter().map(|x| x - 1.0).collect(); // H(0) = 0
        let xh = xh_trace(&traj, 8).unwrap();
        assert!(xh.values.iter().all(|v| v.is_finite()));

        let sigma = SigmaEnvelope::<f64>::constant(1.0).unwrap();
        // qv(t) = t ≤ e has no iterated-log envelope: those times drop out
        let xs = xsigma_trace(&traj, &sigma, 8).unwrap();
        assert!(xs.times.iter().all(|t| *t > std::f64::consts::E));
    }

    fn finite_l(value: f64, hw: f64) -> LEstimate<f64> {
        LEstimate::from_parts(value, value - hw, value + hw, LClass::Finite)
    }

    fn flat_trace(value: f64) -> RatioTrace<f64> {
        let times: Vec<f64> = (1..=12).map(|k| k as f64 * 100.0).collect();
        RatioTrace {
            values: vec![value; times.len()],
            times,
        }
    }

    #[test]
    fn classifier_checks_tracking_bounds_for_intermediate_high() {
        let l = finite_l(2.0, 0.05);
        let clock = flat_trace(2.0);
        let xh = flat_trace(1.94);
        let mut input = ClassifyInput::new(Mode::DeterministicPositive, &l);
        input.clock = Some(&clock);
        input.xh = Some(&xh);
        let report = classify(&input, &Tolerances::default());

        assert_eq!(report.regime, Regime::IntermediateHigh);
        let gl = report.g_lower.unwrap();
        let gu = report.g_upper.unwrap();
        assert!(((gl - 1.0) * 2.0 - 1.0).abs() < 1e-15);
        assert!((gu * (2.0 - 1.0) - 2.0).abs() < 1e-15);
        assert!(report.all_checks_pass(), "failed: {:?}", report.failed_checks());
    }

    #[test]
    fn classifier_reports_indeterminate_on_a_straddling_interval() {
        let l = finite_l(1.0, 0.05);
        let report = classify(
            &ClassifyInput::new(Mode::DeterministicPositive, &l),
            &Tolerances::default(),
        );
        assert_eq!(report.regime, Regime::Indeterminate);
        assert!(report.checks.is_empty());
        assert!(report.notes.iter().any(|n| n.contains("straddles 1")));
    }

    #[test]
    fn classifier_handles_flagged_classes() {
        let zero = LEstimate::from_parts(0.0, 0.0, 1e-4, LClass::Zero);
        let clock = flat_trace(1.0);
        let mut rising = flat_trace(0.0);
        for (k, v) in rising.values.iter_mut().enumerate() {
            *v = 12.0 + k as f64;
        }
        let mut input = ClassifyInput::new(Mode::DeterministicPositive, &zero);
        input.clock = Some(&clock);
        input.xh = Some(&rising);
        let report = classify(&input, &Tolerances::default());
        assert_eq!(report.regime, Regime::OdeDominated);
        assert!(report.all_checks_pass(), "failed: {:?}", report.failed_checks());

        let inf = LEstimate::from_parts(f64::INFINITY, 80.0, f64::INFINITY, LClass::Infinite);
        let xh = flat_trace(1.003);
        let mut clock_rising = flat_trace(0.0);
        for (k, v) in clock_rising.values.iter_mut().enumerate() {
            *v = 15.0 + k as f64;
        }
        let mut input = ClassifyInput::new(Mode::DeterministicPositive, &inf);
        input.clock = Some(&clock_rising);
        input.xh = Some(&xh);
        let report = classify(&input, &Tolerances::default());
        assert_eq!(report.regime, Regime::ForcingDominated);
        assert!(report.all_checks_pass(), "failed: {:?}", report.failed_checks());
    }

    #[test]
    fn classifier_brownian_large_noise_checks() {
        let inf = LEstimate::from_parts(f64::INFINITY, 900.0, f64::INFINITY, LClass::Infinite);
        let mut xsigma = flat_trace(0.5);
        // oscillation with tail extremes near ±1
        let n = xsigma.values.len();
        for (k, v) in xsigma.values.iter_mut().enumerate() {
            *v = if k % 2 == 0 { 0.97 } else { -1.02 };
        }
        xsigma.values[n - 1] = 0.97;
        let residual = flat_trace(0.03);
        let mut input = ClassifyInput::new(Mode::Brownian, &inf);
        input.xsigma = Some(&xsigma);
        input.residual_sigma = Some(&residual);
        let report = classify(&input, &Tolerances::default());
        assert_eq!(report.regime, Regime::ForcingDominated);
        assert!(report.all_checks_pass(), "failed: {:?}", report.failed_checks());

        // missing traces degrade to n/a, never to fail
        let input = ClassifyInput::new(Mode::Brownian, &inf);
        let report = classify(&input, &Tolerances::default());
        assert!(report.all_checks_pass());
        assert!(report
            .checks
            .iter()
            .all(|c| c.status == CheckStatus::NotApplicable));
    }

    #[test]
    fn classifier_stable_dichotomy() {
        let l = finite_l(10.0, 0.1);
        let env = flat_trace(0.08);
        let mut input = ClassifyInput::new(Mode::Stable, &l);
        input.envelope_ratio = Some(&env);
        input.integrability = Some(Integrability::Finite);
        let report = classify(&input, &Tolerances::default());
        assert_eq!(report.regime, Regime::IntermediateHigh);
        assert!(report.all_checks_pass(), "failed: {:?}", report.failed_checks());

        let mut input = ClassifyInput::new(Mode::Stable, &l);
        input.envelope_ratio = Some(&env);
        let report = classify(&input, &Tolerances::default());
        assert!(report
            .checks
            .iter()
            .all(|c| c.status == CheckStatus::NotApplicable));
    }

    #[test]
    fn report_renders_the_flat_key_value_contract() {
        let l = finite_l(2.0, 0.05);
        let clock = flat_trace(2.0);
        let xh = flat_trace(1.94);
        let mut input = ClassifyInput::new(Mode::DeterministicPositive, &l);
        input.clock = Some(&clock);
        input.xh = Some(&xh);
        let report = classify(&input, &Tolerances::default());
        let text = report.render();
        for key in ["mode = ", "regime = ", "L = ", "L_lo = ", "L_hi = ", "G_L = ", "G_U = "] {
            assert!(text.contains(key), "missing {key} in:\n{text}");
        }
        assert!(text.contains("checks.xh_ratio_within_bounds = pass"));
        assert!(text.contains("checks.clock_ratio_within_band = pass"));

        // bounds are omitted as n/a outside the tracking regime
        let zero = LEstimate::from_parts(0.0, 0.0, 1e-4, LClass::Zero);
        let report = classify(
            &ClassifyInput::new(Mode::DeterministicPositive, &zero),
            &Tolerances::default(),
        );
        assert!(report.render().contains("G_L = n/a"));
    }

    proptest! {
        /// Raising the whole L interval never moves the regime label
        /// leftward in the growth order. Intervals that straddle 1 map to
        /// the explicit indeterminate outcome, which sits outside the
        /// chain and is assumed away here.
        #[test]
        fn classify_is_monotone_in_l(
            center in 0.02f64..50.0,
            hw_rel in 0.0f64..0.4,
            shift in 0.0f64..30.0,
            zero_a in proptest::bool::ANY,
            inf_b in proptest::bool::ANY,
        ) {
            let hw = center * hw_rel;
            let a = if zero_a {
                LEstimate::from_parts(0.0, 0.0, 1e-4, LClass::Zero)
            } else {
                finite_l(center, hw)
            };
            let b = if inf_b {
                LEstimate::from_parts(f64::INFINITY, 1e3, f64::INFINITY, LClass::Infinite)
            } else {
                finite_l(center + shift, hw)
            };
            let tol = Tolerances::default();
            let ra = classify(&ClassifyInput::new(Mode::DeterministicPositive, &a), &tol);
            let rb = classify(&ClassifyInput::new(Mode::DeterministicPositive, &b), &tol);
            if let (Some(rank_a), Some(rank_b)) = (ra.regime.rank(), rb.regime.rank()) {
                prop_assert!(rank_b >= rank_a,
                    "L {:?} -> {} but larger L {:?} -> {}",
                    (a.lo, a.hi), ra.regime.name(), (b.lo, b.hi), rb.regime.name());
            }
        }
    }
}
