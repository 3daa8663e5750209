//! Nonlinearities, their monotone majorants, and the growth clocks.
//!
//! The clock of a nonlinearity f is F(x) = ∫₁ˣ du/f(u); its inverse turns
//! elapsed "mass time" back into state scale. A second clock Φ uses the
//! smooth majorant φ instead of f. Built-in families register closed forms
//! where they exist; everything else goes through adaptive quadrature and
//! safeguarded root-finding, both at tolerances well below any diagnostic
//! tolerance used downstream.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad;
use crate::rootfind;
use crate::scalar::Scalar;

/// Hypothesis switches carried by a nonlinearity. Constructors of the
/// built-in families set them; custom nonlinearities declare them.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses<S: Scalar> {
    /// f > 0 on (0, ∞), so positive data stays positive.
    pub positive: bool,
    /// |f(x)|/φ(|x|) → 1 as |x| → ∞ (two-sided growth matching).
    pub asymptotically_odd: bool,
    /// |f(x)| ≤ φ(|x|) for large |x|.
    pub majorized: bool,
    /// φ is C¹ increasing with φ′ eventually nonincreasing and φ′ → 0.
    pub monotone_decay: bool,
    /// f locally Lipschitz away from the origin.
    pub locally_lipschitz: bool,
    /// |f(x)| ≤ K + η|x| with the registered (K, η).
    pub linear_bound: Option<(S, S)>,
}

impl<S: Scalar> Hypotheses<S> {
    pub fn all_unset() -> Self {
        Hypotheses {
            positive: false,
            asymptotically_odd: false,
            majorized: false,
            monotone_decay: false,
            locally_lipschitz: false,
            linear_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family<S: Scalar> {
    /// f(x) = sgn(x)|x|^β, β ∈ (0, 1); φ(x) = x^β on x ≥ 0.
    Power { beta: S },
    /// f(x) = (x+e)/log(x+e); φ identical. Positive regime only.
    LogType,
    /// User-supplied expressions; φ′ optional, finite differences otherwise.
    Custom {
        f: Expr,
        phi: Expr,
        phi_prime: Option<Expr>,
    },
}

/// A nonlinearity f together with its majorant φ and growth clocks.
/// Immutable after construction and shareable across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity<S: Scalar> {
    family: Family<S>,
    hypotheses: Hypotheses<S>,
}

impl<S: Scalar> Nonlinearity<S> {
    /// Odd power law f(x) = sgn(x)|x|^β with β ∈ (0, 1).
    pub fn power(beta: S) -> Result<Self> {
        if !(beta > S::zero() && beta < S::one()) {
            return Err(Error::InvalidNonlinearity(format!(
                "power exponent must lie in (0, 1), got {}",
                beta.to_f64_lossy()
            )));
        }
        Ok(Nonlinearity {
            family: Family::Power { beta },
            hypotheses: Hypotheses {
                positive: true,
                asymptotically_odd: true,
                majorized: true,
                monotone_decay: true,
                locally_lipschitz: true,
                // |x|^β ≤ 1 + |x| for every real x
                linear_bound: Some((S::one(), S::one())),
            },
        })
    }

    /// f(x) = (x+e)/log(x+e), the slowly varying family with clock
    /// F(x) on the order of log²x. Defined for x + e > 1.
    pub fn logtype() -> Self {
        Nonlinearity {
            family: Family::LogType,
            hypotheses: Hypotheses {
                positive: true,
                asymptotically_odd: false,
                majorized: true,
                monotone_decay: true,
                locally_lipschitz: true,
                // log(x+e) ≥ 1 for x ≥ 0, so f(x) ≤ x + e there
                linear_bound: Some((S::of(std::f64::consts::E), S::one())),
            },
        }
    }

    /// Expression-defined nonlinearity. The caller supplies φ (and may
    /// supply φ′; otherwise central differences with step x·10⁻⁶ are
    /// used) and declares which hypotheses the pair satisfies.
    pub fn custom(
        f: Expr,
        phi: Expr,
        phi_prime: Option<Expr>,
        hypotheses: Hypotheses<S>,
    ) -> Result<Self> {
        let n = Nonlinearity {
            family: Family::Custom { f, phi, phi_prime },
            hypotheses,
        };
        // coarse sanity: φ positive and increasing on a few decades
        let mut prev = S::neg_infinity();
        for &x in &[1.0, 10.0, 100.0, 1e4, 1e6] {
            let p = n.phi(S::of(x));
            if !(p.is_finite() && p > S::zero()) {
                return Err(Error::InvalidNonlinearity(format!(
                    "majorant not positive and finite at x = {x}"
                )));
            }
            if p <= prev {
                return Err(Error::InvalidNonlinearity(format!(
                    "majorant not increasing near x = {x}"
                )));
            }
            prev = p;
        }
        Ok(n)
    }

    pub fn hypotheses(&self) -> &Hypotheses<S> {
        &self.hypotheses
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Power { .. } => "power",
            Family::LogType => "logtype",
            Family::Custom { .. } => "custom",
        }
    }

    pub fn f(&self, x: S) -> S {
        match &self.family {
            Family::Power { beta } => {
                if x == S::zero() {
                    S::zero()
                } else {
                    x.signum() * x.abs().powf(*beta)
                }
            }
            Family::LogType => {
                let shifted = x + S::of(std::f64::consts::E);
                shifted / shifted.ln()
            }
            Family::Custom { f, .. } => f.eval(x),
        }
    }

    /// Derivative of f, used by the implicit stepper's Newton fallback.
    pub fn f_prime(&self, x: S) -> S {
        match &self.family {
            Family::Power { beta } => *beta * x.abs().powf(*beta - S::one()),
            Family::LogType => {
                let l = (x + S::of(std::f64::consts::E)).ln();
                (l - S::one()) / (l * l)
            }
            Family::Custom { f, .. } => {
                let h = x.abs().max(S::one()) * S::of(1e-6);
                (f.eval(x + h) - f.eval(x - h)) / (h + h)
            }
        }
    }

    pub fn phi(&self, x: S) -> S {
        match &self.family {
            Family::Power { beta } => x.powf(*beta),
            Family::LogType => {
                let shifted = x + S::of(std::f64::consts::E);
                shifted / shifted.ln()
            }
            Family::Custom { phi, .. } => phi.eval(x),
        }
    }

    pub fn phi_prime(&self, x: S) -> S {
        match &self.family {
            Family::Power { beta } => *beta * x.powf(*beta - S::one()),
            Family::LogType => {
                let l = (x + S::of(std::f64::consts::E)).ln();
                (l - S::one()) / (l * l)
            }
            Family::Custom {
                phi, phi_prime, ..
            } => match phi_prime {
                Some(e) => e.eval(x),
                None => {
                    let h = x.abs().max(S::of(1e-3)) * S::of(1e-6);
                    (phi.eval(x + h) - phi.eval(x - h)) / (h + h)
                }
            },
        }
    }

    /// Growth clock F(x) = ∫₁ˣ du/f(u). Negative for x < 1; requires
    /// f > 0 between 1 and x.
    pub fn clock(&self, x: S) -> Result<S> {
        if !(x > S::zero()) {
            return Err(Error::OutOfRange {
                value: x.to_f64_lossy(),
                infimum: 0.0,
            });
        }
        if let Family::Power { beta } = self.family {
            let one_minus = S::one() - beta;
            return Ok((x.powf(one_minus) - S::one()) / one_minus);
        }
        self.integrate_reciprocal(x, |u| self.f(u), "clock integrand 1/f")
    }

    /// Majorant clock Φ(x) = ∫₁ˣ du/φ(u).
    pub fn phi_clock(&self, x: S) -> Result<S> {
        if !(x > S::zero()) {
            return Err(Error::OutOfRange {
                value: x.to_f64_lossy(),
                infimum: 0.0,
            });
        }
        if let Family::Power { beta } = self.family {
            let one_minus = S::one() - beta;
            return Ok((x.powf(one_minus) - S::one()) / one_minus);
        }
        self.integrate_reciprocal(x, |u| self.phi(u), "clock integrand 1/phi")
    }

    fn integrate_reciprocal(
        &self,
        x: S,
        denom: impl Fn(S) -> S,
        context: &str,
    ) -> Result<S> {
        if x >= S::one() {
            // Substituting u = eᵛ keeps the bisection depth logarithmic in x;
            // the raw interval [1, x] can span hundreds of decades.
            let g = |v: S| {
                let u = v.exp();
                u / denom(u)
            };
            quad::integrate(&g, S::zero(), x.ln(), S::quad_rel_tol(), context)
        } else {
            let g = |u: S| S::one() / denom(u);
            Ok(-quad::integrate(&g, x, S::one(), S::quad_rel_tol(), context)?)
        }
    }

    /// Inverse clock: the x > 0 with F(x) = y, to residual
    /// 10⁻⁸·max(1, |y|). Closed form for the power family, bracketed
    /// safeguarded Newton otherwise.
    pub fn clock_inv(&self, y: S) -> Result<S> {
        if let Family::Power { beta } = self.family {
            let one_minus = S::one() - beta;
            let base = S::one() + one_minus * y;
            if base <= S::zero() {
                return Err(Error::OutOfRange {
                    value: y.to_f64_lossy(),
                    infimum: (-S::one() / one_minus).to_f64_lossy(),
                });
            }
            return Ok(base.powf(S::one() / one_minus));
        }
        let g = |x: S| self.clock(x).map(|v| v - y);
        let tol = S::invert_tol() * S::one().max(y.abs());
        let (lo, hi) = if y >= S::zero() {
            (S::one(), rootfind::expand_upward(&g, S::one(), S::of(1e300))?)
        } else {
            let lo = rootfind::expand_downward(&g, S::one(), y.to_f64_lossy())
                .map_err(|e| match e {
                    // report the clock infimum, not the shifted residual
                    Error::OutOfRange { value, infimum } => Error::OutOfRange {
                        value,
                        infimum: infimum + y.to_f64_lossy(),
                    },
                    other => other,
                })?;
            (lo, S::one())
        };
        let dg = |x: S| Ok(S::one() / self.f(x));
        rootfind::solve_increasing(&g, &dg, lo, hi, tol)
    }

    /// Whether F and F⁻¹ evaluate through registered closed forms.
    pub fn has_closed_clock(&self) -> bool {
        matches!(self.family, Family::Power { .. })
    }

    /// Sampled check of the majorant properties behind the clock
    /// comparison lemma: on the tail half of a log grid up to `horizon`,
    /// x φ′(x)/φ(x) and φ(Λx)/(Λ φ(x)) must stay below 1 + slack and φ′
    /// must drain away, not merely plateau.
    pub fn check_phi_props(&self, horizon: S, lambda: S, slack: S) -> PhiPropertyReport<S> {
        const POINTS: usize = 200;
        let lo = S::one();
        let ratio = (horizon / lo).powf(S::of(1.0 / (POINTS - 1) as f64));
        let mut xs = Vec::with_capacity(POINTS);
        let mut x = lo;
        for _ in 0..POINTS {
            xs.push(x);
            x = x * ratio;
        }
        let tail = &xs[POINTS / 2..];

        let mut derivative_ratio_max = S::neg_infinity();
        let mut scaling_ratio_max = S::neg_infinity();
        let mut nonincreasing = true;
        let mut prev_dp = S::infinity();
        for &x in tail {
            let p = self.phi(x);
            let dp = self.phi_prime(x);
            derivative_ratio_max = derivative_ratio_max.max(x * dp / p);
            scaling_ratio_max = scaling_ratio_max.max(self.phi(lambda * x) / (lambda * p));
            if dp > prev_dp * (S::one() + S::of(1e-9)) {
                nonincreasing = false;
            }
            prev_dp = dp;
        }
        let first_dp = self.phi_prime(tail[0]);
        let last_dp = self.phi_prime(*tail.last().unwrap());
        let derivative_decays = nonincreasing && last_dp <= first_dp * S::of(0.99);

        let bound = S::one() + slack;
        PhiPropertyReport {
            derivative_ratio_max,
            scaling_ratio_max,
            derivative_decays,
            slack,
            pass: derivative_ratio_max <= bound
                && scaling_ratio_max <= bound
                && derivative_decays,
        }
    }

    /// Verify |f(x)| ≤ K + η|x| for the registered pair on a sampled
    /// grid spanning [lo, hi]. None when no bound is registered.
    pub fn check_linear_bound(&self, lo: S, hi: S) -> Option<bool> {
        let (k, eta) = self.hypotheses.linear_bound?;
        let n = 400;
        let step = (hi - lo) / S::of(n as f64);
        let mut x = lo;
        for _ in 0..=n {
            if self.f(x).abs() > k + eta * x.abs() + S::of(1e-12) {
                return Some(false);
            }
            x = x + step;
        }
        Some(true)
    }

    /// Sampled check of two-sided growth matching |f(±x)|/φ(x) → 1.
    pub fn check_asymptotic_oddness(&self, horizon: S, tol: S) -> bool {
        let mut x = horizon.powf(S::of(0.5));
        while x <= horizon {
            let p = self.phi(x);
            let up = (self.f(x).abs() / p - S::one()).abs();
            let down = (self.f(-x).abs() / p - S::one()).abs();
            if up > tol || down > tol {
                return false;
            }
            x = x * S::of(3.1622776601683795); // half-decade steps
        }
        true
    }
}

/// Outcome of [`Nonlinearity::check_phi_props`]. Diagnostic only; never
/// an error.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPropertyReport<S: Scalar> {
    pub derivative_ratio_max: S,
    pub scaling_ratio_max: S,
    pub derivative_decays: bool,
    pub slack: S,
    pub pass: bool,
}
