//! Deterministic forcing terms H (with densities h where available) and
//! growth envelopes γ.
//!
//! Forcings come in three flavors: named closed forms used by the canned
//! scenarios, user expressions, and reverse-engineered forcings that make a
//! prescribed target the exact solution of the equation on a given grid.
//! Every builder fixes H(0) = 0; named forms whose natural expression is
//! nonzero at the origin are shifted by their value there.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::kernel::{self, MeasureKernel};
use crate::nonlinear::Nonlinearity;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum ForcingKind<S: Scalar> {
    Zero,
    Log1p,
    Power { p: S },
    /// exp(√(2L(t+1))) shifted to vanish at t = 0.
    ExpSqrt { l: S },
    /// exp((2(t+1))^α) shifted to vanish at t = 0.
    ExpPower { alpha: S },
    CustomExpr { big_h: Expr, h: Option<Expr> },
    /// Grid samples of a reverse-engineered forcing; linear off-grid.
    Sampled { dt: S, values: Vec<S> },
}

/// Integrated forcing H with optional density h. Immutable and shareable.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTerm<S: Scalar> {
    kind: ForcingKind<S>,
    positive: bool,
}

impl<S: Scalar> ForcingTerm<S> {
    pub fn zero() -> Self {
        ForcingTerm {
            kind: ForcingKind::Zero,
            positive: true,
        }
    }

    /// Named closed-form forcings used by the canned scenarios:
    /// `zero`, `log1p`, `power` (one parameter p > 0), `exp_sqrt` (one
    /// parameter L > 0), `exp_power` (one parameter α ∈ (1/2, 1)).
    pub fn builtin(name: &str, params: &[S]) -> Result<Self> {
        let one_param = |what: &str| -> Result<S> {
            params.first().copied().ok_or_else(|| {
                Error::InvalidForcing(format!("{name} needs a parameter: {what}"))
            })
        };
        let kind = match name {
            "zero" => ForcingKind::Zero,
            "log1p" => ForcingKind::Log1p,
            "power" => {
                let p = one_param("exponent p")?;
                if !(p > S::zero()) {
                    return Err(Error::InvalidForcing(
                        "power forcing needs p > 0".into(),
                    ));
                }
                ForcingKind::Power { p }
            }
            "exp_sqrt" => {
                let l = one_param("growth index L")?;
                if !(l > S::zero()) {
                    return Err(Error::InvalidForcing(
                        "exp_sqrt forcing needs L > 0".into(),
                    ));
                }
                ForcingKind::ExpSqrt { l }
            }
            "exp_power" => {
                let alpha = one_param("exponent alpha")?;
                if !(alpha > S::of(0.5) && alpha < S::one()) {
                    return Err(Error::InvalidForcing(
                        "exp_power forcing needs alpha in (1/2, 1)".into(),
                    ));
                }
                ForcingKind::ExpPower { alpha }
            }
            other => {
                return Err(Error::InvalidForcing(format!(
                    "unknown builtin forcing `{other}`"
                )))
            }
        };
        Ok(ForcingTerm {
            kind,
            positive: true,
        })
    }

    /// Expression-defined forcing. The expression must vanish at t = 0;
    /// positivity is probed on a sample grid to set the (A+) flag.
    pub fn custom_expr(big_h: Expr, h: Option<Expr>) -> Result<Self> {
        let at_zero: S = big_h.eval(S::zero());
        if !(at_zero.abs() <= S::of(1e-9)) {
            return Err(Error::InvalidForcing(format!(
                "integrated forcing must vanish at t = 0, got {}",
                at_zero.to_f64_lossy()
            )));
        }
        let mut positive = true;
        for i in 0..=400 {
            let t = S::of(i as f64 * 0.25);
            let v: S = big_h.eval(t);
            if !v.is_finite() {
                return Err(Error::InvalidForcing(format!(
                    "forcing expression not finite at t = {}",
                    t.to_f64_lossy()
                )));
            }
            if v < S::zero() {
                positive = false;
            }
        }
        Ok(ForcingTerm {
            kind: ForcingKind::CustomExpr { big_h, h },
            positive,
        })
    }

    /// Reverse-engineer the forcing that makes `target` the exact
    /// solution on the given grid, using the discrete form of
    /// H = x − x(0) − W·∫f(x) + (c/λ)·∫e^{−λ(t−s)}f(x(s))ds.
    ///
    /// Only kernels driving the O(N) recursion (an atom at the origin
    /// plus an exponential density) admit this identity; the density
    /// part must be present. The target must be finite, nondecreasing
    /// and nonconstant on the grid.
    pub fn example(
        kernel: &MeasureKernel<S>,
        n: &Nonlinearity<S>,
        target: impl Fn(S) -> S,
        dt: S,
        steps: usize,
    ) -> Result<Self> {
        let plan = kernel.recursion_plan().ok_or_else(|| {
            Error::Unsupported(
                "reverse-engineered forcing needs an exponential-kernel recursion".into(),
            )
        })?;
        let (coeff, rate) = plan.exp.ok_or_else(|| {
            Error::Unsupported(
                "reverse-engineered forcing needs an exponential density part".into(),
            )
        })?;
        if steps == 0 || !(dt > S::zero()) {
            return Err(Error::InvalidGrid("need dt > 0 and at least one step".into()));
        }

        let mut xs: Vec<S> = (0..=steps).map(|k| target(dt * S::of(k as f64))).collect();
        // A target may overflow inside the horizon by design (the
        // forcing-dominated examples do); keep the finite prefix and let
        // the solver truncate where the table ends.
        if let Some(first_bad) = xs.iter().position(|x| !x.is_finite()) {
            if first_bad < 9 {
                return Err(Error::InvalidForcing(format!(
                    "target not finite at t = {}",
                    (dt * S::of(first_bad as f64)).to_f64_lossy()
                )));
            }
            xs.truncate(first_bad);
        }
        let steps = xs.len() - 1;
        for pair in xs.windows(2) {
            if pair[1] < pair[0] || pair[0] < S::zero() {
                return Err(Error::InvalidForcing(
                    "target must be nonnegative and nondecreasing".into(),
                ));
            }
        }
        if xs[steps] <= xs[0] {
            return Err(Error::InvalidForcing(
                "target must grow over the grid, constants carry no forcing".into(),
            ));
        }

        // same weights the solver uses, so the identity is exact there
        let w_total = plan.atom0 + coeff / rate;
        let scale = coeff / rate;
        let theta = rate * dt;
        let decay = (-theta).exp();
        let aw = dt * kernel::g2(theta);
        let bw = dt * kernel::g3(theta);

        let g: Vec<S> = xs.iter().map(|&x| n.f(x)).collect();
        let mut values = Vec::with_capacity(steps + 1);
        values.push(S::zero());
        let half = dt * S::of(0.5);
        let mut trap = S::zero();
        let mut exp_part = S::zero();
        for k in 1..=steps {
            trap = trap + half * (g[k - 1] + g[k]);
            exp_part = decay * exp_part + aw * g[k - 1] + bw * g[k];
            values.push(xs[k] - xs[0] - (w_total * trap - scale * exp_part));
        }

        let positive = values.iter().all(|v| *v >= S::zero());
        Ok(ForcingTerm {
            kind: ForcingKind::Sampled { dt, values },
            positive,
        })
    }

    /// Whether H stays nonnegative (hypothesis flag for the positive
    /// regime).
    pub fn is_positive(&self) -> bool {
        self.positive
    }

    /// H(t). Errors on negative time and outside a sampled grid.
    pub fn evaluate(&self, t: S) -> Result<S> {
        if t < S::zero() {
            return Err(Error::NegativeTime(t.to_f64_lossy()));
        }
        Ok(match &self.kind {
            ForcingKind::Zero => S::zero(),
            ForcingKind::Log1p => t.ln_1p(),
            ForcingKind::Power { p } => t.powf(*p),
            ForcingKind::ExpSqrt { l } => {
                let two_l = *l + *l;
                (two_l * (t + S::one())).sqrt().exp() - two_l.sqrt().exp()
            }
            ForcingKind::ExpPower { alpha } => {
                let two = S::of(2.0);
                (two * (t + S::one())).powf(*alpha).exp() - two.powf(*alpha).exp()
            }
            ForcingKind::CustomExpr { big_h, .. } => big_h.eval(t),
            ForcingKind::Sampled { dt, values } => {
                let pos = t / *dt;
                let idx = pos.floor().to_f64_lossy() as usize;
                if idx + 1 >= values.len() {
                    let last = values.len() - 1;
                    if pos <= S::of(last as f64) * (S::one() + S::of(1e-9)) {
                        return Ok(values[last]);
                    }
                    return Err(Error::InvalidForcing(format!(
                        "sampled forcing queried past its grid at t = {}",
                        t.to_f64_lossy()
                    )));
                }
                let frac = pos - S::of(idx as f64);
                values[idx] + frac * (values[idx + 1] - values[idx])
            }
        })
    }

    /// Density h = H′ where a closed form exists.
    pub fn density(&self, t: S) -> Option<S> {
        match &self.kind {
            ForcingKind::Zero => Some(S::zero()),
            ForcingKind::Log1p => Some(S::one() / (S::one() + t)),
            ForcingKind::Power { p } => Some(*p * t.powf(*p - S::one())),
            ForcingKind::ExpSqrt { l } => {
                let root = ((*l + *l) * (t + S::one())).sqrt();
                Some(root.exp() * *l / root)
            }
            ForcingKind::ExpPower { alpha } => {
                let two = S::of(2.0);
                let base = two * (t + S::one());
                let pw = base.powf(*alpha);
                Some(pw.exp() * *alpha * two * pw / base)
            }
            ForcingKind::CustomExpr { h, .. } => h.as_ref().map(|e| e.eval(t)),
            ForcingKind::Sampled { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeRole {
    Gamma,
    GammaPlus,
    GammaMinus,
}

impl EnvelopeRole {
    pub fn name(&self) -> &'static str {
        match self {
            EnvelopeRole::Gamma => "gamma",
            EnvelopeRole::GammaPlus => "gamma_plus",
            EnvelopeRole::GammaMinus => "gamma_minus",
        }
    }
}

#[derive(Debug, Clone)]
enum EnvelopeForm<S: Scalar> {
    /// c·(1+t)^ε with the exponent kept visible for integrability tests.
    Power { coeff: S, eps: S },
    Expr(Expr),
    /// Inverse growth clock at rate·t, the shape of the critical
    /// comparison envelope.
    ClockInverse { n: Nonlinearity<S>, rate: S },
}

/// Increasing comparison envelope γ with a role tag and a scalar
/// normalization factor.
#[derive(Debug, Clone)]
pub struct Envelope<S: Scalar> {
    role: EnvelopeRole,
    form: EnvelopeForm<S>,
    scale: S,
}

impl<S: Scalar> Envelope<S> {
    pub fn power(role: EnvelopeRole, coeff: S, eps: S) -> Result<Self> {
        if !(coeff > S::zero() && eps > S::zero()) {
            return Err(Error::InvalidForcing(
                "power envelope needs positive coefficient and exponent".into(),
            ));
        }
        Ok(Envelope {
            role,
            form: EnvelopeForm::Power { coeff, eps },
            scale: S::one(),
        })
    }

    pub fn expr(role: EnvelopeRole, e: Expr) -> Self {
        Envelope {
            role,
            form: EnvelopeForm::Expr(e),
            scale: S::one(),
        }
    }

    /// γ(t) = F⁻¹(rate·t), the envelope sitting exactly on the growth
    /// clock; `rate` is the product of the comparison fraction and the
    /// kernel mass.
    pub fn clock_inverse(role: EnvelopeRole, n: Nonlinearity<S>, rate: S) -> Result<Self> {
        if !(rate > S::zero()) {
            return Err(Error::InvalidForcing(
                "clock envelope needs a positive rate".into(),
            ));
        }
        Ok(Envelope {
            role,
            form: EnvelopeForm::ClockInverse { n, rate },
            scale: S::one(),
        })
    }

    pub fn role(&self) -> EnvelopeRole {
        self.role
    }

    pub fn value(&self, t: S) -> Result<S> {
        if t < S::zero() {
            return Err(Error::NegativeTime(t.to_f64_lossy()));
        }
        let raw = match &self.form {
            EnvelopeForm::Power { coeff, eps } => *coeff * (S::one() + t).powf(*eps),
            EnvelopeForm::Expr(e) => e.eval(t),
            EnvelopeForm::ClockInverse { n, rate } => n.clock_inv(*rate * t)?,
        };
        Ok(self.scale * raw)
    }

    /// Exponent metadata when γ has the pure power shape c(1+t)^ε.
    pub fn power_form(&self) -> Option<(S, S)> {
        match &self.form {
            EnvelopeForm::Power { coeff, eps } => Some((self.scale * *coeff, *eps)),
            _ => None,
        }
    }

    /// Sampled sanity check: strictly increasing up to the horizon and
    /// grown by a factor ≥ 2 across it (a bounded γ cannot normalize a
    /// diverging forcing).
    pub fn check_increasing(&self, horizon: S) -> Result<bool> {
        let n = 128;
        let step = horizon / S::of(n as f64);
        let mut prev = self.value(S::zero())?;
        let first = prev;
        for i in 1..=n {
            let v = self.value(step * S::of(i as f64))?;
            if v <= prev || !v.is_finite() {
                return Ok(false);
            }
            prev = v;
        }
        Ok(prev >= first * S::of(2.0))
    }

    /// Rescale so that the empirical limsup of |signal|/γ over the tail
    /// half of the samples becomes 1.
    pub fn normalized_against(&self, times: &[S], signal: &[S]) -> Result<Self> {
        if times.len() != signal.len() || times.len() < 4 {
            return Err(Error::InvalidForcing(
                "normalization needs matched samples, at least four".into(),
            ));
        }
        let mut peak = S::zero();
        for i in times.len() / 2..times.len() {
            let g = self.value(times[i])?;
            if !(g > S::zero()) {
                return Err(Error::InvalidForcing(
                    "envelope must be positive where it is normalized".into(),
                ));
            }
            peak = peak.max(signal[i].abs() / g);
        }
        if !(peak > S::zero() && peak.is_finite()) {
            return Err(Error::InvalidForcing(
                "signal has no usable tail magnitude to normalize against".into(),
            ));
        }
        let mut out = self.clone();
        out.scale = self.scale * peak;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_kernel() -> MeasureKernel<f64> {
        MeasureKernel::exponential()
    }

    #[test]
    fn builtin_values_and_vanishing_at_origin() {
        let e = std::f64::consts::E;
        let zero = ForcingTerm::<f64>::builtin("zero", &[]).unwrap();
        assert_eq!(zero.evaluate(7.0).unwrap(), 0.0);
        let log1p = ForcingTerm::<f64>::builtin("log1p", &[]).unwrap();
        assert!((log1p.evaluate(e - 1.0).unwrap() - 1.0).abs() < 1e-14);
        let pw = ForcingTerm::<f64>::builtin("power", &[2.0]).unwrap();
        assert!((pw.evaluate(3.0).unwrap() - 9.0).abs() < 1e-14);
        let es = ForcingTerm::<f64>::builtin("exp_sqrt", &[2.0]).unwrap();
        assert!((es.evaluate(3.0).unwrap() - 47.209093934213584).abs() < 1e-10);
        let ep = ForcingTerm::<f64>::builtin("exp_power", &[0.75]).unwrap();
        assert!((ep.evaluate(10.0).unwrap() - 25796.58852499821).abs() < 1e-8);
        for f in [zero, log1p, pw, es, ep] {
            assert_eq!(f.evaluate(0.0).unwrap(), 0.0);
            assert!(f.is_positive());
        }
    }

    #[test]
    fn builtin_rejects_unknown_names_and_bad_parameters() {
        assert!(ForcingTerm::<f64>::builtin("sinh", &[]).is_err());
        assert!(ForcingTerm::<f64>::builtin("power", &[]).is_err());
        assert!(ForcingTerm::<f64>::builtin("power", &[-1.0]).is_err());
        assert!(ForcingTerm::<f64>::builtin("exp_power", &[0.4]).is_err());
        assert!(ForcingTerm::<f64>::builtin("exp_power", &[1.0]).is_err());
    }

    #[test]
    fn densities_differentiate_the_integrated_forms() {
        let terms = [
            ForcingTerm::<f64>::builtin("log1p", &[]).unwrap(),
            ForcingTerm::<f64>::builtin("power", &[1.7]).unwrap(),
            ForcingTerm::<f64>::builtin("exp_sqrt", &[2.0]).unwrap(),
            ForcingTerm::<f64>::builtin("exp_power", &[0.6]).unwrap(),
        ];
        for f in &terms {
            for &t in &[0.5f64, 2.0, 9.0] {
                let h = 1e-6 * t.max(1.0);
                let fd =
                    (f.evaluate(t + h).unwrap() - f.evaluate(t - h).unwrap()) / (2.0 * h);
                let d = f.density(t).unwrap();
                assert!((d - fd).abs() / fd.abs() < 1e-6, "t = {t}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn custom_expression_must_vanish_at_origin() {
        let ok = ForcingTerm::<f64>::custom_expr(
            Expr::parse("t * t").unwrap(),
            Some(Expr::parse("2 * t").unwrap()),
        )
        .unwrap();
        assert!(ok.is_positive());
        assert!((ok.density(3.0).unwrap() - 6.0).abs() < 1e-14);
        let bad: Result<ForcingTerm<f64>> =
            ForcingTerm::custom_expr(Expr::parse("t + 1").unwrap(), None);
        assert!(bad.is_err());
    }

    #[test]
    fn reverse_engineered_golden_forcing_approaches_square_growth() {
        // target A(t/2)^2 under the square-root nonlinearity; A − √A = 1
        // makes the leading coefficient of H exactly 1/4
        let a = (3.0 + 5.0f64.sqrt()) / 2.0;
        let n = Nonlinearity::power(0.5).unwrap();
        let f = ForcingTerm::example(
            &exp_kernel(),
            &n,
            |t: f64| a * (t / 2.0) * (t / 2.0),
            0.02,
            2000,
        )
        .unwrap();
        assert_eq!(f.evaluate(0.0).unwrap(), 0.0);
        assert!(f.is_positive());
        let r20 = f.evaluate(20.0).unwrap() / (20.0f64 / 2.0).powi(2);
        let r40 = f.evaluate(40.0).unwrap() / (40.0f64 / 2.0).powi(2);
        assert!((r40 - 1.0).abs() < (r20 - 1.0).abs(), "{r20} -> {r40}");
        assert!((r40 - 1.0).abs() < 0.1, "ratio {r40}");
    }

    #[test]
    fn reverse_engineered_slow_exponential_forcing_has_the_expected_share() {
        // target e^{√(2L(t+1))} − e with the logtype nonlinearity; the
        // forcing carries the (L−1)/L share of the growth
        let l = 2.0f64;
        let n: Nonlinearity<f64> = Nonlinearity::logtype();
        let target = move |t: f64| (2.0 * l * (t + 1.0)).sqrt().exp() - std::f64::consts::E;
        let f = ForcingTerm::example(&exp_kernel(), &n, target, 0.05, 4000).unwrap();
        let share = |t: f64| {
            f.evaluate(t).unwrap() * l / ((l - 1.0) * (2.0 * l * (t + 1.0)).sqrt().exp())
        };
        let r100 = share(100.0);
        let r200 = share(200.0);
        assert!((r200 - 1.0).abs() < (r100 - 1.0).abs(), "{r100} -> {r200}");
        assert!((r200 - 1.0).abs() < 0.15, "share {r200}");
    }

    #[test]
    fn reverse_engineering_rejects_flat_targets_and_wrong_kernels() {
        let n = Nonlinearity::power(0.5).unwrap();
        let constant = ForcingTerm::example(&exp_kernel(), &n, |_t: f64| 3.0, 0.1, 100);
        assert!(matches!(constant, Err(Error::InvalidForcing(_))));

        let delta = MeasureKernel::<f64>::delta_zero();
        let no_density = ForcingTerm::example(&delta, &n, |t: f64| t + 1.0, 0.1, 100);
        assert!(matches!(no_density, Err(Error::Unsupported(_))));

        let shifted = MeasureKernel::new(
            vec![(2.0, 1.0)],
            crate::kernel::Density::Exponential { coeff: 1.0, rate: 1.0 },
            f64::INFINITY,
        )
        .unwrap();
        let off_origin = ForcingTerm::example(&shifted, &n, |t: f64| t + 1.0, 0.1, 100);
        assert!(matches!(off_origin, Err(Error::Unsupported(_))));
    }

    #[test]
    fn sampled_forcing_interpolates_and_guards_its_range() {
        let n = Nonlinearity::power(0.5).unwrap();
        let f = ForcingTerm::example(&exp_kernel(), &n, |t: f64| t * t + t, 0.5, 10)
            .unwrap();
        let mid = f.evaluate(0.25).unwrap();
        let lo = f.evaluate(0.0).unwrap();
        let hi = f.evaluate(0.5).unwrap();
        assert!((mid - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!(f.evaluate(5.0).is_ok());
        assert!(f.evaluate(5.1).is_err());
        assert!(f.evaluate(-0.5).is_err());
        assert!(f.density(1.0).is_none());
    }

    #[test]
    fn clock_envelope_matches_the_closed_inverse() {
        // β = 1/2 power clock inverse is (1 + y/2)²; rate αM = 1/2
        let n = Nonlinearity::<f64>::power(0.5).unwrap();
        let env = Envelope::clock_inverse(EnvelopeRole::GammaPlus, n, 0.5).unwrap();
        assert!((env.value(8.0).unwrap() - 9.0).abs() < 1e-10);
        assert_eq!(env.role().name(), "gamma_plus");
        assert!(env.check_increasing(100.0).unwrap());
    }

    #[test]
    fn power_envelope_normalizes_to_unit_limsup() {
        let env = Envelope::power(EnvelopeRole::Gamma, 1.0, 0.5).unwrap();
        let times: Vec<f64> = (0..=64).map(|i| i as f64).collect();
        let signal: Vec<f64> = times.iter().map(|t| 3.0 * (1.0 + t).sqrt()).collect();
        let scaled = env.normalized_against(&times, &signal).unwrap();
        let (coeff, eps) = scaled.power_form().unwrap();
        assert!((coeff - 3.0).abs() < 1e-12);
        assert!((eps - 0.5).abs() < 1e-15);
        // after normalization the tail ratio peaks at one
        let peak = times[32..]
            .iter()
            .zip(&signal[32..])
            .map(|(&t, &s)| s / scaled.value(t).unwrap())
            .fold(0.0f64, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_envelope_fails_the_divergence_check() {
        let env: Envelope<f64> = Envelope::expr(
            EnvelopeRole::Gamma,
            Expr::parse("3 - 1 / (1 + t)").unwrap(),
        );
        assert!(!env.check_increasing(1e4).unwrap());
        assert!(env.power_form().is_none());
    }

    #[test]
    fn envelope_rejects_degenerate_parameters() {
        assert!(Envelope::<f64>::power(EnvelopeRole::Gamma, 0.0, 1.0).is_err());
        assert!(Envelope::<f64>::power(EnvelopeRole::Gamma, 1.0, -0.5).is_err());
        let n = Nonlinearity::power(0.5).unwrap();
        assert!(Envelope::clock_inverse(EnvelopeRole::Gamma, n, 0.0).is_err());
    }
}
