//! Time stepping for the integrated equations.
//!
//! The deterministic scheme is product-trapezoidal and implicit in the
//! diagonal: kernels may carry an atom at the origin, so the current value
//! feeds back into its own step and an explicit rule would shed order or
//! stability. The stochastic scheme is explicit with left-endpoint lags,
//! matching the predictable-integrand convention of the semimartingale
//! form. Exponential kernels collapse the convolution into an O(N)
//! recursion; everything else runs the generic O(N²) product weights.
//!
//! Overflow is not an error: superexponential forcings legitimately leave
//! the floating-point range inside the horizon, so the solver truncates,
//! records the cut, and returns the finite prefix.

use crate::error::{Error, Result};
use crate::forcing::ForcingTerm;
use crate::kernel::{self, GridWeights, MeasureKernel};
use crate::noise::NoisePath;
use crate::nonlinear::Nonlinearity;
use crate::scalar::Scalar;

/// One solved path on a uniform grid. `values[0]` is always the initial
/// state; a truncated run keeps every finite prefix value and notes the
/// last valid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S: Scalar> {
    pub dt: S,
    pub initial: S,
    pub values: Vec<S>,
    /// Integrated deterministic forcing at the grid times.
    pub h_values: Vec<S>,
    /// Noise at the grid times; zeros for deterministic runs.
    pub z_values: Vec<S>,
    pub truncated_at: Option<S>,
    pub warnings: Vec<String>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> S {
        self.dt * S::of(k as f64)
    }

    pub fn final_time(&self) -> S {
        self.time(self.values.len() - 1)
    }

    pub fn final_value(&self) -> S {
        *self.values.last().expect("trajectory never empty")
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_at.is_some()
    }
}

/// Convolution state: either the exponential recursion or stored product
/// weights.
enum ConvPath<S: Scalar> {
    Recursion {
        /// Total plateau weight m₀ + c/λ multiplying the plain integral.
        w_total: S,
        /// c/λ multiplying the exponentially discounted integral.
        scale: S,
        decay: S,
        /// Trapezoidal cell weights for the discounted integral.
        aw: S,
        bw: S,
        /// Left-rectangle cell weight for the discounted integral.
        nu_exp: S,
    },
    Generic(GridWeights<S>),
}

fn build_path<S: Scalar>(
    kernel: &MeasureKernel<S>,
    dt: S,
    steps: usize,
    force_generic: bool,
) -> Result<ConvPath<S>> {
    if !force_generic {
        if let Some(plan) = kernel.recursion_plan() {
            return Ok(match plan.exp {
                Some((coeff, rate)) => {
                    let theta = rate * dt;
                    ConvPath::Recursion {
                        w_total: plan.atom0 + coeff / rate,
                        scale: coeff / rate,
                        decay: (-theta).exp(),
                        aw: dt * kernel::g2(theta),
                        bw: dt * kernel::g3(theta),
                        nu_exp: dt * kernel::g1(theta),
                    }
                }
                None => ConvPath::Recursion {
                    w_total: plan.atom0,
                    scale: S::zero(),
                    decay: S::zero(),
                    aw: S::zero(),
                    bw: S::zero(),
                    nu_exp: S::zero(),
                },
            });
        }
    }
    Ok(ConvPath::Generic(kernel.grid_weights(dt, steps)?))
}

fn check_grid<S: Scalar>(dt: S, steps: usize) -> Result<()> {
    if !(dt > S::zero() && dt.is_finite()) || steps == 0 {
        return Err(Error::InvalidGrid(
            "need a positive step size and at least one step".into(),
        ));
    }
    Ok(())
}

/// Well-posedness gate: the existence theory needs local Lipschitz
/// continuity and a global linear bound; growth-regime diagnostics
/// additionally want positivity or asymptotic oddness, which is only
/// worth a warning.
fn check_hypotheses<S: Scalar>(n: &Nonlinearity<S>) -> Result<Vec<String>> {
    let h = n.hypotheses();
    if !h.locally_lipschitz {
        return Err(Error::InvalidNonlinearity(
            "solver needs a locally Lipschitz nonlinearity".into(),
        ));
    }
    if h.linear_bound.is_none() {
        return Err(Error::InvalidNonlinearity(
            "solver needs a registered global linear bound K + η|x|".into(),
        ));
    }
    let mut warnings = Vec::new();
    if !h.positive && !h.asymptotically_odd {
        warnings.push(
            "neither positivity nor asymptotic oddness declared; regime \
             diagnostics may not apply"
                .to_string(),
        );
    }
    Ok(warnings)
}

/// Resolve x = g_const + w·f(x): fixed-point sweep first, then damped
/// Newton. `guess` seeds both.
fn solve_diagonal<S: Scalar>(
    n: &Nonlinearity<S>,
    g_const: S,
    w: S,
    guess: S,
    t: S,
) -> Result<S> {
    let tol_at = |x: S| S::fixed_point_tol() * S::one().max(x.abs());
    let mut x = guess;
    for _ in 0..50 {
        let next = g_const + w * n.f(x);
        if !next.is_finite() {
            break;
        }
        if (next - x).abs() <= tol_at(next) {
            return Ok(next);
        }
        x = next;
    }

    if !x.is_finite() {
        x = guess;
    }
    let residual = |x: S| x - g_const - w * n.f(x);
    for _ in 0..60 {
        let r = residual(x);
        if r.abs() <= tol_at(x) {
            return Ok(x);
        }
        let d = S::one() - w * n.f_prime(x);
        if !d.is_finite() || d == S::zero() {
            break;
        }
        let mut step = r / d;
        let mut cand = x - step;
        let mut halvings = 0;
        while halvings < 40 {
            if cand.is_finite() && residual(cand).abs() < r.abs() {
                break;
            }
            step = step * S::of(0.5);
            cand = x - step;
            halvings += 1;
        }
        if halvings == 40 {
            break;
        }
        x = cand;
    }
    Err(Error::StepFailure {
        t: t.to_f64_lossy(),
    })
}

/// Integrate x(t) = ψ + ∫₀ᵗ M(t−s)f(x(s))ds + H(t) with the implicit
/// product-trapezoidal scheme; global order 2 on smooth problems.
pub fn solve_deterministic<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    forcing: &ForcingTerm<S>,
    psi: S,
    dt: S,
    steps: usize,
) -> Result<Trajectory<S>> {
    solve_deterministic_inner(kernel, n, forcing, psi, dt, steps, false)
}

/// Same equation through the stored O(N²) product weights regardless of
/// kernel shape; the reference the recursion is verified against.
pub fn solve_deterministic_reference<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    forcing: &ForcingTerm<S>,
    psi: S,
    dt: S,
    steps: usize,
) -> Result<Trajectory<S>> {
    solve_deterministic_inner(kernel, n, forcing, psi, dt, steps, true)
}

fn solve_deterministic_inner<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    forcing: &ForcingTerm<S>,
    psi: S,
    dt: S,
    steps: usize,
    force_generic: bool,
) -> Result<Trajectory<S>> {
    check_grid(dt, steps)?;
    let mut warnings = check_hypotheses(n)?;
    if !psi.is_finite() {
        return Err(Error::InvalidGrid("initial value must be finite".into()));
    }
    let path = build_path(kernel, dt, steps, force_generic)?;

    let mut values = vec![psi];
    let mut h_values = vec![forcing.evaluate(S::zero())?];
    let mut g = vec![n.f(psi)];
    let half = dt * S::of(0.5);
    let mut trap = S::zero();
    let mut exp_part = S::zero();
    let mut truncated_at = None;

    for k in 1..=steps {
        let t = dt * S::of(k as f64);
        // A forcing that stops being evaluable mid-run (a target that
        // overflowed, a sampled table that ran out) truncates the
        // trajectory; only the initial evaluation is a hard error.
        let h_k = match forcing.evaluate(t) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                truncated_at = Some(dt * S::of((k - 1) as f64));
                warnings.push(format!(
                    "forcing left the floating-point range at t = {}; returning \
                     the finite prefix",
                    t.to_f64_lossy()
                ));
                break;
            }
            Err(e) => {
                truncated_at = Some(dt * S::of((k - 1) as f64));
                warnings.push(format!(
                    "forcing not evaluable at t = {}: {e}; returning the finite \
                     prefix",
                    t.to_f64_lossy()
                ));
                break;
            }
        };
        let (g_const, w_diag) = match &path {
            ConvPath::Recursion {
                w_total,
                scale,
                decay,
                aw,
                bw,
                ..
            } => {
                let trap_left = trap + half * g[k - 1];
                let exp_left = *decay * exp_part + *aw * g[k - 1];
                (
                    psi + h_k + *w_total * trap_left - *scale * exp_left,
                    *w_total * half - *scale * *bw,
                )
            }
            ConvPath::Generic(w) => {
                g.push(S::zero());
                let base = w.convolve(&g, k);
                g.pop();
                (psi + h_k + base, w.a[0])
            }
        };

        if !g_const.is_finite() || !w_diag.is_finite() {
            truncated_at = Some(dt * S::of((k - 1) as f64));
            warnings.push(format!(
                "state left the floating-point range at t = {}; returning the \
                 finite prefix",
                t.to_f64_lossy()
            ));
            break;
        }

        let guess = if k >= 2 {
            values[k - 1] + (values[k - 1] - values[k - 2])
        } else {
            values[k - 1]
        };
        let x_k = solve_diagonal(n, g_const, w_diag, guess, t)?;
        if !x_k.is_finite() {
            truncated_at = Some(dt * S::of((k - 1) as f64));
            warnings.push(format!(
                "state left the floating-point range at t = {}; returning the \
                 finite prefix",
                t.to_f64_lossy()
            ));
            break;
        }

        let g_k = n.f(x_k);
        if let ConvPath::Recursion {
            decay, aw, bw, ..
        } = &path
        {
            trap = trap + half * (g[k - 1] + g_k);
            exp_part = *decay * exp_part + *aw * g[k - 1] + *bw * g_k;
        }
        values.push(x_k);
        g.push(g_k);
        h_values.push(h_k);
    }

    let z_values = vec![S::zero(); values.len()];
    Ok(Trajectory {
        dt,
        initial: psi,
        values,
        h_values,
        z_values,
        truncated_at,
        warnings,
    })
}

/// Integrate X(t) = ψ + ∫₀ᵗ M(t−s)f(X(s))ds + H₀(t) + Z(t) explicitly
/// with left-endpoint lag values. Strong order 1 for Brownian noise.
pub fn solve_stochastic<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    trend: Option<&ForcingTerm<S>>,
    noise: &NoisePath<S>,
    psi: S,
    dt: S,
    steps: usize,
) -> Result<Trajectory<S>> {
    solve_stochastic_inner(kernel, n, trend, noise, psi, dt, steps, false)
}

/// Reference path for the stochastic scheme, mirroring
/// [`solve_deterministic_reference`].
pub fn solve_stochastic_reference<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    trend: Option<&ForcingTerm<S>>,
    noise: &NoisePath<S>,
    psi: S,
    dt: S,
    steps: usize,
) -> Result<Trajectory<S>> {
    solve_stochastic_inner(kernel, n, trend, noise, psi, dt, steps, true)
}

#[allow(clippy::too_many_arguments)]
fn solve_stochastic_inner<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    trend: Option<&ForcingTerm<S>>,
    noise: &NoisePath<S>,
    psi: S,
    dt: S,
    steps: usize,
    force_generic: bool,
) -> Result<Trajectory<S>> {
    check_grid(dt, steps)?;
    let mut warnings = check_hypotheses(n)?;
    if !psi.is_finite() {
        return Err(Error::InvalidGrid("initial value must be finite".into()));
    }
    let grid_gap = (noise.dt - dt).abs();
    if grid_gap > dt * S::of(1e-12) || noise.steps() < steps {
        return Err(Error::InvalidNoise(
            "noise path must live on the solver grid and cover it".into(),
        ));
    }
    let path = build_path(kernel, dt, steps, force_generic)?;
    // left-endpoint product weights for the generic path
    let nu: Vec<S> = match &path {
        ConvPath::Generic(w) => (0..steps).map(|j| w.a[j] + w.b[j]).collect(),
        _ => Vec::new(),
    };

    let mut values = vec![psi];
    let mut h_values = vec![match trend {
        Some(f) => f.evaluate(S::zero())?,
        None => S::zero(),
    }];
    let mut g = vec![n.f(psi)];
    let mut plain = S::zero();
    let mut exp_part = S::zero();
    let mut truncated_at = None;

    for k in 1..=steps {
        let t = dt * S::of(k as f64);
        // same truncation convention as the deterministic scheme
        let h_k = match trend.map(|f| f.evaluate(t)).transpose() {
            Ok(v) => {
                let v = v.unwrap_or(S::zero());
                if v.is_finite() {
                    v
                } else {
                    truncated_at = Some(dt * S::of((k - 1) as f64));
                    warnings.push(format!(
                        "forcing left the floating-point range at t = {}; \
                         returning the finite prefix",
                        t.to_f64_lossy()
                    ));
                    break;
                }
            }
            Err(e) => {
                truncated_at = Some(dt * S::of((k - 1) as f64));
                warnings.push(format!(
                    "forcing not evaluable at t = {}: {e}; returning the finite \
                     prefix",
                    t.to_f64_lossy()
                ));
                break;
            }
        };
        let conv = match &path {
            ConvPath::Recursion {
                w_total,
                scale,
                decay,
                nu_exp,
                ..
            } => {
                plain = plain + dt * g[k - 1];
                exp_part = *decay * exp_part + *nu_exp * g[k - 1];
                *w_total * plain - *scale * exp_part
            }
            ConvPath::Generic(_) => {
                let mut acc = S::zero();
                for (j, w) in nu[..k].iter().enumerate() {
                    acc = acc + *w * g[k - 1 - j];
                }
                acc
            }
        };
        let x_k = psi + conv + h_k + noise.at(k);
        if !x_k.is_finite() {
            truncated_at = Some(dt * S::of((k - 1) as f64));
            warnings.push(format!(
                "state left the floating-point range at t = {}; returning the \
                 finite prefix",
                t.to_f64_lossy()
            ));
            break;
        }
        values.push(x_k);
        g.push(n.f(x_k));
        h_values.push(h_k);
    }

    let z_values = noise.values[..values.len()].to_vec();
    Ok(Trajectory {
        dt,
        initial: psi,
        values,
        h_values,
        z_values,
        truncated_at,
        warnings,
    })
}

/// Grid-refinement study: solve at Δt, Δt/2, Δt/4, … and report the
/// successive differences on the shared coarse nodes plus the observed
/// orders. Stochastic problems refine a fixed noise path by linear
/// interpolation so every level sees the same realization.
#[derive(Debug, Clone)]
pub struct ConvergenceReport<S: Scalar> {
    pub dts: Vec<S>,
    pub max_diffs: Vec<S>,
    pub orders: Vec<S>,
}

pub fn refine_linear<S: Scalar>(path: &NoisePath<S>, factor: usize) -> NoisePath<S> {
    assert!(factor >= 1);
    let steps = path.steps();
    let mut values = Vec::with_capacity(steps * factor + 1);
    for k in 0..steps {
        let lo = path.values[k];
        let hi = path.values[k + 1];
        for j in 0..factor {
            let frac = S::of(j as f64 / factor as f64);
            values.push(lo + frac * (hi - lo));
        }
    }
    values.push(path.values[steps]);
    NoisePath {
        dt: path.dt / S::of(factor as f64),
        values,
        seed: path.seed,
        stream: path.stream,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn refine_and_compare<S: Scalar>(
    kernel: &MeasureKernel<S>,
    n: &Nonlinearity<S>,
    forcing: &ForcingTerm<S>,
    noise: Option<&NoisePath<S>>,
    psi: S,
    dt: S,
    steps: usize,
    levels: usize,
) -> Result<ConvergenceReport<S>> {
    if levels < 3 {
        return Err(Error::InvalidGrid(
            "a convergence study needs at least three levels".into(),
        ));
    }
    let mut dts = Vec::with_capacity(levels);
    let mut solutions = Vec::with_capacity(levels);
    for level in 0..levels {
        let factor = 1usize << level;
        let dt_l = dt / S::of(factor as f64);
        let traj = match noise {
            Some(path) => {
                let fine = refine_linear(path, factor);
                solve_stochastic(kernel, n, Some(forcing), &fine, psi, dt_l, steps * factor)?
            }
            None => solve_deterministic(kernel, n, forcing, psi, dt_l, steps * factor)?,
        };
        if traj.is_truncated() {
            return Err(Error::StepFailure {
                t: traj.final_time().to_f64_lossy(),
            });
        }
        dts.push(dt_l);
        solutions.push(traj.values);
    }

    let mut max_diffs = Vec::with_capacity(levels - 1);
    for level in 0..levels - 1 {
        let coarse = &solutions[level];
        let fine = &solutions[level + 1];
        let mut d = S::zero();
        for (k, c) in coarse.iter().enumerate() {
            d = d.max((*c - fine[2 * k]).abs());
        }
        max_diffs.push(d);
    }
    let mut orders = Vec::with_capacity(max_diffs.len().saturating_sub(1));
    for pair in max_diffs.windows(2) {
        orders.push((pair[0] / pair[1]).ln() / S::of(std::f64::consts::LN_2));
    }
    Ok(ConvergenceReport {
        dts,
        max_diffs,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::noise::{NoiseModel, SigmaEnvelope};
    use crate::nonlinear::Hypotheses;

    fn exp_kernel() -> MeasureKernel<f64> {
        MeasureKernel::exponential()
    }

    fn golden_target(t: f64) -> f64 {
        let a = (3.0 + 5.0f64.sqrt()) / 2.0;
        a * (t / 2.0) * (t / 2.0)
    }

    #[test]
    fn memoryless_kernel_reproduces_the_square_ode() {
        // δ₀ kernel, f = √x, ψ = 1: x(t) = (t/2 + 1)²
        let k = MeasureKernel::<f64>::delta_zero();
        let n = Nonlinearity::power(0.5).unwrap();
        let traj =
            solve_deterministic(&k, &n, &ForcingTerm::zero(), 1.0, 1e-3, 2000).unwrap();
        assert_eq!(traj.values[0], 1.0);
        assert!((traj.final_value() - 4.0).abs() < 1e-4);
        assert!(!traj.is_truncated());
    }

    #[test]
    fn reverse_engineered_forcing_makes_the_target_the_solution() {
        let n = Nonlinearity::power(0.5).unwrap();
        let dt = 0.05;
        let steps = 20_000;
        let f = ForcingTerm::example(&exp_kernel(), &n, golden_target, dt, steps).unwrap();
        let traj = solve_deterministic(&exp_kernel(), &n, &f, 0.0, dt, steps).unwrap();
        let mut worst = 0.0f64;
        for k in 1..=steps {
            let target = golden_target(dt * k as f64);
            let rel = (traj.values[k] - target).abs() / target.max(1.0);
            worst = worst.max(rel);
        }
        // the identity is discrete-exact, so only roundoff and the
        // diagonal tolerance remain; far below the scheme-order bound
        assert!(worst < 1e-8, "worst relative deviation {worst}");
        assert!(worst < 10.0 * dt * dt);
    }

    #[test]
    fn recursion_and_generic_weights_agree_to_high_precision() {
        let n: Nonlinearity<f64> = Nonlinearity::logtype();
        let f = ForcingTerm::<f64>::builtin("log1p", &[]).unwrap();
        let fast =
            solve_deterministic(&exp_kernel(), &n, &f, 1.0, 0.01, 1000).unwrap();
        let slow = solve_deterministic_reference(&exp_kernel(), &n, &f, 1.0, 0.01, 1000)
            .unwrap();
        let mut worst = 0.0f64;
        for k in 0..=1000 {
            let d = (fast.values[k] - slow.values[k]).abs()
                / fast.values[k].abs().max(1.0);
            worst = worst.max(d);
        }
        assert!(worst < 1e-10, "paths diverge by {worst}");
    }

    #[test]
    fn stochastic_recursion_matches_generic_reference() {
        let n = Nonlinearity::power(0.5).unwrap();
        let m = NoiseModel::brownian(SigmaEnvelope::constant(1.0).unwrap());
        let z = m.sample(0.01, 1000, 7, 0).unwrap();
        let a = solve_stochastic(&exp_kernel(), &n, None, &z, 0.5, 0.01, 1000).unwrap();
        let b = solve_stochastic_reference(&exp_kernel(), &n, None, &z, 0.5, 0.01, 1000)
            .unwrap();
        let mut worst = 0.0f64;
        for k in 0..=1000 {
            worst = worst.max((a.values[k] - b.values[k]).abs());
        }
        assert!(worst < 1e-10, "paths diverge by {worst}");
    }

    #[test]
    fn unperturbed_growth_follows_the_clock_for_both_families() {
        // H = 0, ψ = 1: F(x(T))/(MT) → 1
        let t_max = 1e4;
        let dt = 0.25;
        let steps = (t_max / dt) as usize;
        for n in [Nonlinearity::power(0.5).unwrap(), Nonlinearity::logtype()] {
            let traj = solve_deterministic(
                &exp_kernel(),
                &n,
                &ForcingTerm::zero(),
                1.0,
                dt,
                steps,
            )
            .unwrap();
            let ratio = n.clock(traj.final_value()).unwrap() / t_max;
            assert!(
                (0.9..=1.1).contains(&ratio),
                "{}: clock ratio {ratio}",
                n.family_name()
            );
        }
    }

    #[test]
    fn positive_regime_growth_and_forcing_floor() {
        let n: Nonlinearity<f64> = Nonlinearity::logtype();
        let f = ForcingTerm::<f64>::builtin("log1p", &[]).unwrap();
        let dt = 0.01;
        let traj = solve_deterministic(&exp_kernel(), &n, &f, 1.0, dt, 2000).unwrap();
        let floor_slack = 10.0 * dt * dt;
        for k in 1..traj.len() {
            assert!(traj.values[k] >= traj.values[k - 1] - 1e-9, "k = {k}");
            assert!(
                traj.values[k] >= traj.initial + traj.h_values[k] - floor_slack,
                "forcing floor violated at k = {k}"
            );
        }
        assert!(traj.warnings.is_empty());
    }

    #[test]
    fn zero_noise_degenerates_to_the_deterministic_solution() {
        let n: Nonlinearity<f64> = Nonlinearity::logtype();
        let f = ForcingTerm::<f64>::builtin("log1p", &[]).unwrap();
        let dt = 0.01;
        let steps = 1000;
        let z = NoiseModel::<f64>::None.sample(dt, steps, 0, 0).unwrap();
        let xs = solve_stochastic(&exp_kernel(), &n, Some(&f), &z, 1.0, dt, steps).unwrap();
        let xd = solve_deterministic(&exp_kernel(), &n, &f, 1.0, dt, steps).unwrap();
        for k in 0..=steps {
            let t = dt * k as f64;
            let gap = (xs.values[k] - xd.values[k]).abs();
            assert!(gap <= 2.0 * dt * t + 1e-12, "t = {t}: gap {gap}");
        }
    }

    #[test]
    fn superexponential_forcing_truncates_instead_of_failing() {
        let n: Nonlinearity<f64> = Nonlinearity::logtype();
        let f = ForcingTerm::builtin("exp_power", &[0.75]).unwrap();
        let traj = solve_deterministic(&exp_kernel(), &n, &f, 1.0, 0.5, 8000).unwrap();
        let cut = traj.truncated_at.expect("must truncate inside the horizon");
        assert!((3000.0..3400.0).contains(&cut), "cut at {cut}");
        assert_eq!(traj.len(), (cut / 0.5) as usize + 1);
        assert!(traj.values.iter().all(|v| v.is_finite()));
        assert!(traj.warnings.iter().any(|w| w.contains("floating-point")));
        // right up to the cut the state tracks the forcing
        let last = traj.len() - 1;
        let ratio = traj.values[last] / traj.h_values[last];
        assert!((ratio - 1.0).abs() < 0.05, "x/H at the cut: {ratio}");
    }

    #[test]
    fn identical_inputs_give_identical_trajectories() {
        let n = Nonlinearity::power(0.4).unwrap();
        let f = ForcingTerm::builtin("power", &[1.5]).unwrap();
        let a = solve_deterministic(&exp_kernel(), &n, &f, 2.0, 0.02, 500).unwrap();
        let b = solve_deterministic(&exp_kernel(), &n, &f, 2.0, 0.02, 500).unwrap();
        assert_eq!(a, b);
        let m = NoiseModel::<f64>::stable(1.5, 1.0, 0.0).unwrap();
        let z = m.sample(0.02, 500, 3, 1).unwrap();
        let s1 = solve_stochastic(&exp_kernel(), &n, None, &z, 2.0, 0.02, 500).unwrap();
        let s2 = solve_stochastic(&exp_kernel(), &n, None, &z, 2.0, 0.02, 500).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn deterministic_refinement_shows_second_order() {
        // ODE case; β = 0.3 keeps s ↦ f(x(s)) curved, so the trapezoid
        // error is genuinely O(Δt²) rather than pure rounding noise
        let k = MeasureKernel::<f64>::delta_zero();
        let n = Nonlinearity::power(0.3).unwrap();
        let r = refine_and_compare(&k, &n, &ForcingTerm::zero(), None, 1.0, 0.05, 40, 4)
            .unwrap();
        for o in &r.orders {
            assert!((1.8..=2.2).contains(o), "order {o}");
        }
        // smooth kernel, slowly varying family
        let r2 = refine_and_compare(
            &exp_kernel(),
            &Nonlinearity::logtype(),
            &ForcingTerm::zero(),
            None,
            1.0,
            0.05,
            40,
            4,
        )
        .unwrap();
        for o in &r2.orders {
            assert!((1.8..=2.2).contains(o), "order {o}");
        }
    }

    #[test]
    fn zero_nonlinearity_reduces_to_forcing_plus_initial() {
        let zero_f: Nonlinearity<f64> = Nonlinearity::custom(
            Expr::parse("0 * x").unwrap(),
            Expr::parse("sqrt(x)").unwrap(),
            None,
            Hypotheses {
                positive: false,
                asymptotically_odd: false,
                majorized: false,
                monotone_decay: true,
                locally_lipschitz: true,
                linear_bound: Some((0.0, 0.0)),
            },
        )
        .unwrap();
        let f = ForcingTerm::<f64>::builtin("log1p", &[]).unwrap();
        let traj = solve_deterministic(&exp_kernel(), &zero_f, &f, 2.0, 0.1, 100).unwrap();
        for k in 0..=100 {
            let exact = 2.0 + (1.0 + 0.1 * k as f64).ln();
            assert!((traj.values[k] - exact).abs() < 1e-12);
        }
        let r = refine_and_compare(&exp_kernel(), &zero_f, &f, None, 2.0, 0.1, 50, 3)
            .unwrap();
        assert!(r.max_diffs.iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn brownian_refinement_keeps_at_least_first_order() {
        let n = Nonlinearity::power(0.5).unwrap();
        let m = NoiseModel::brownian(SigmaEnvelope::constant(1.0).unwrap());
        let z = m.sample(0.02, 500, 12, 0).unwrap();
        let f = ForcingTerm::<f64>::zero();
        let r = refine_and_compare(&exp_kernel(), &n, &f, Some(&z), 1.0, 0.02, 500, 4)
            .unwrap();
        for o in &r.orders {
            assert!(*o >= 0.9, "stochastic order {o}");
        }
    }

    #[test]
    fn hypothesis_gate_rejects_unregistered_nonlinearities() {
        let no_lipschitz: Nonlinearity<f64> = Nonlinearity::custom(
            Expr::parse("sqrt(x)").unwrap(),
            Expr::parse("sqrt(x)").unwrap(),
            None,
            Hypotheses {
                locally_lipschitz: false,
                linear_bound: Some((1.0, 1.0)),
                ..Hypotheses::all_unset()
            },
        )
        .unwrap();
        assert!(matches!(
            solve_deterministic(
                &exp_kernel(),
                &no_lipschitz,
                &ForcingTerm::zero(),
                1.0,
                0.1,
                10
            ),
            Err(Error::InvalidNonlinearity(_))
        ));

        let no_bound: Nonlinearity<f64> = Nonlinearity::custom(
            Expr::parse("sqrt(x)").unwrap(),
            Expr::parse("sqrt(x)").unwrap(),
            None,
            Hypotheses {
                locally_lipschitz: true,
                ..Hypotheses::all_unset()
            },
        )
        .unwrap();
        assert!(solve_deterministic(
            &exp_kernel(),
            &no_bound,
            &ForcingTerm::zero(),
            1.0,
            0.1,
            10
        )
        .is_err());

        // declared but neither positive nor asymptotically odd: warn only
        let warned: Nonlinearity<f64> = Nonlinearity::custom(
            Expr::parse("sqrt(abs(x))").unwrap(),
            Expr::parse("sqrt(x)").unwrap(),
            None,
            Hypotheses {
                locally_lipschitz: true,
                linear_bound: Some((1.0, 1.0)),
                ..Hypotheses::all_unset()
            },
        )
        .unwrap();
        let traj = solve_deterministic(
            &exp_kernel(),
            &warned,
            &ForcingTerm::zero(),
            1.0,
            0.1,
            10,
        )
        .unwrap();
        assert_eq!(traj.warnings.len(), 1);
    }

    #[test]
    fn noise_grid_mismatch_is_rejected() {
        let n = Nonlinearity::power(0.5).unwrap();
        let m = NoiseModel::brownian(SigmaEnvelope::constant(1.0).unwrap());
        let z = m.sample(0.02, 100, 1, 0).unwrap();
        assert!(solve_stochastic(&exp_kernel(), &n, None, &z, 1.0, 0.01, 100).is_err());
        assert!(solve_stochastic(&exp_kernel(), &n, None, &z, 1.0, 0.02, 200).is_err());
        assert!(solve_stochastic(&exp_kernel(), &n, None, &z, 1.0, 0.02, 100).is_ok());
    }

    #[test]
    fn overflowing_target_truncates_instead_of_failing() {
        // exp((2(t+1))^{3/4}) − e leaves f64 range near t ≈ 3.2·10³; the
        // forcing table keeps its finite prefix and the solve truncates
        // there with the prefix intact.
        let n = Nonlinearity::logtype();
        let dt = 0.5;
        let steps = 8000;
        let target =
            |t: f64| ((2.0 * (t + 1.0)).powf(0.75)).exp() - std::f64::consts::E;
        let forcing = ForcingTerm::example(&exp_kernel(), &n, target, dt, steps).unwrap();
        let psi = target(0.0);
        let traj = solve_deterministic(&exp_kernel(), &n, &forcing, psi, dt, steps).unwrap();
        assert!(traj.is_truncated());
        let t_star = traj.final_time();
        assert!((3000.0..3400.0).contains(&t_star), "truncated at {t_star}");
        assert!(traj.values.iter().all(|x| x.is_finite()));
        assert!(traj
            .warnings
            .iter()
            .any(|w| w.contains("returning the finite prefix")));
        // the finite prefix still tracks the target
        let k = traj.len() - 1;
        let rel = (traj.values[k] - target(t_star)).abs() / target(t_star);
        assert!(rel < 1e-6, "prefix drifted: rel {rel}");
    }

    #[test]
    fn linear_noise_refinement_is_exact_on_shared_nodes() {
        let m = NoiseModel::brownian(SigmaEnvelope::<f64>::constant(1.0).unwrap());
        let z = m.sample(0.1, 50, 5, 2).unwrap();
        let fine = refine_linear(&z, 4);
        assert_eq!(fine.steps(), 200);
        assert!((fine.dt - 0.025).abs() < 1e-15);
        for k in 0..=50 {
            assert_eq!(fine.values[4 * k], z.values[k]);
        }
        let mid = 0.5 * (z.values[0] + z.values[1]);
        assert!((fine.values[2] - mid).abs() < 1e-15);
    }
}
