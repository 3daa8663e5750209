//! Finite Borel measures on [0, ∞) driving the convolution term.
//!
//! A kernel is a list of atoms plus an optional density. The solver consumes
//! it through two views: the cumulative function `M(t) = μ([0, t])`, and
//! per-lag product-quadrature weights that integrate M exactly against a
//! piecewise-linear reconstruction of `f(x(·))`. Kernels whose density is a
//! single exponential (and whose atoms sit only at zero) additionally admit
//! an O(N) stepping recursion; `recursion_plan` reports it.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Density<S: Scalar> {
    None,
    /// `coeff * exp(-rate * s)` on all of [0, ∞).
    Exponential { coeff: S, rate: S },
    /// Arbitrary nonnegative expression in `s`, supported on [0, cutoff].
    Custom(Expr),
}

#[derive(Debug, Clone)]
pub struct MeasureKernel<S: Scalar> {
    atoms: Vec<(S, S)>,
    density: Density<S>,
    cutoff: S,
    mass: S,
}

/// O(N) stepping data for kernels of the form `m0·δ0 + c·e^{-λs} ds`.
#[derive(Debug, Clone, Copy)]
pub struct RecursionPlan<S: Scalar> {
    pub atom0: S,
    /// (c, λ) of the exponential density part, if present.
    pub exp: Option<(S, S)>,
}

impl<S: Scalar> MeasureKernel<S> {
    /// Validates and builds a kernel. Total mass must be finite and positive;
    /// a custom density needs a finite cutoff and must be nonnegative.
    pub fn new(atoms: Vec<(S, S)>, density: Density<S>, cutoff: S) -> Result<Self> {
        for &(loc, m) in &atoms {
            if !(loc.is_finite() && loc >= S::zero()) {
                return Err(Error::InvalidKernel(format!(
                    "atom location {loc} must be finite and nonnegative"
                )));
            }
            if !(m.is_finite() && m > S::zero()) {
                return Err(Error::InvalidKernel(format!(
                    "atom mass {m} must be finite and positive"
                )));
            }
        }
        match &density {
            Density::None => {}
            Density::Exponential { coeff, rate } => {
                if !(*coeff > S::zero() && coeff.is_finite()) {
                    return Err(Error::InvalidKernel(
                        "exponential density coefficient must be positive".into(),
                    ));
                }
                if !(*rate > S::zero() && rate.is_finite()) {
                    return Err(Error::InvalidKernel(
                        "exponential density rate must be positive".into(),
                    ));
                }
            }
            Density::Custom(e) => {
                if !cutoff.is_finite() || cutoff <= S::zero() {
                    return Err(Error::InvalidKernel(
                        "custom density requires a finite positive cutoff".into(),
                    ));
                }
                if let Some(v) = e.var_name() {
                    if v != "s" {
                        return Err(Error::InvalidKernel(format!(
                            "density variable must be 's', found '{v}'"
                        )));
                    }
                }
                let n = 256;
                for i in 0..=n {
                    let s = cutoff * S::of(i as f64 / n as f64);
                    let d = e.eval(s);
                    if !d.is_finite() || d < S::zero() {
                        return Err(Error::InvalidKernel(format!(
                            "density must be finite and nonnegative; got {d} at s = {s}"
                        )));
                    }
                }
            }
        }
        let mut k = MeasureKernel {
            atoms,
            density,
            cutoff,
            mass: S::zero(),
        };
        k.atoms
            .sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite locations"));
        let atom_mass = k
            .atoms
            .iter()
            .fold(S::zero(), |acc, &(_, m)| acc + m);
        let density_mass = k.density_cumulative(S::infinity())?;
        let mass = atom_mass + density_mass;
        if !(mass.is_finite() && mass > S::zero()) {
            return Err(Error::InvalidKernel(format!(
                "total mass must lie in (0, ∞); got {mass}"
            )));
        }
        k.mass = mass;
        Ok(k)
    }

    /// Single unit atom at zero: the memoryless (ODE) kernel.
    pub fn delta_zero() -> Self {
        Self::new(vec![(S::zero(), S::one())], Density::None, S::infinity())
            .expect("static kernel")
    }

    /// Density `e^{-s}` with no atoms: the standard smoothing kernel with
    /// total mass one.
    pub fn exponential() -> Self {
        Self::new(
            Vec::new(),
            Density::Exponential {
                coeff: S::one(),
                rate: S::one(),
            },
            S::infinity(),
        )
        .expect("static kernel")
    }

    pub fn atoms(&self) -> &[(S, S)] {
        &self.atoms
    }

    pub fn density(&self) -> &Density<S> {
        &self.density
    }

    pub fn cutoff(&self) -> S {
        self.cutoff
    }

    pub fn total_mass(&self) -> S {
        self.mass
    }

    pub fn atom_at_zero(&self) -> S {
        self.atoms
            .iter()
            .take_while(|&&(loc, _)| loc == S::zero())
            .fold(S::zero(), |acc, &(_, m)| acc + m)
    }

    fn density_cumulative(&self, t: S) -> Result<S> {
        let upper = t.min(self.cutoff);
        match &self.density {
            Density::None => Ok(S::zero()),
            Density::Exponential { coeff, rate } => {
                if upper.is_infinite() {
                    return Ok(*coeff / *rate);
                }
                // c/λ (1 - e^{-λ t}) via expm1 for small exponents
                let x = -(*rate * upper);
                Ok(-(*coeff / *rate) * x.exp_m1())
            }
            Density::Custom(e) => {
                if upper <= S::zero() {
                    return Ok(S::zero());
                }
                quad::integrate(&|s| e.eval(s), S::zero(), upper, S::quad_rel_tol(), "density")
            }
        }
    }

    /// `M(t) = μ([0, t])`. Atoms exactly at `t` are included.
    pub fn cumulative(&self, t: S) -> Result<S> {
        if t < S::zero() {
            return Err(Error::NegativeTime(t.to_f64_lossy()));
        }
        let atom_part = self
            .atoms
            .iter()
            .take_while(|&&(loc, _)| loc <= t)
            .fold(S::zero(), |acc, &(_, m)| acc + m);
        Ok(atom_part + self.density_cumulative(t)?)
    }

    /// Upper bound on the mass not yet seen by time `t`:
    /// `total_mass - cumulative(t) <= mass_tail_bound(t)`.
    pub fn mass_tail_bound(&self, t: S) -> S {
        let atom_tail = self
            .atoms
            .iter()
            .skip_while(|&&(loc, _)| loc <= t)
            .fold(S::zero(), |acc, &(_, m)| acc + m);
        let density_tail = match &self.density {
            Density::None => S::zero(),
            Density::Exponential { coeff, rate } => {
                (*coeff / *rate) * (-(*rate) * t.min(self.cutoff)).exp()
            }
            Density::Custom(_) => {
                if t >= self.cutoff {
                    S::zero()
                } else {
                    // conservative: everything past t could still be ahead
                    self.density_cumulative(S::infinity())
                        .unwrap_or(S::zero())
                        - self.density_cumulative(t).unwrap_or(S::zero())
                }
            }
        };
        atom_tail + density_tail
    }

    /// O(N) stepping plan, available when atoms sit only at zero and the
    /// density is absent or a single exponential.
    pub fn recursion_plan(&self) -> Option<RecursionPlan<S>> {
        let atoms_ok = self.atoms.iter().all(|&(loc, _)| loc == S::zero());
        if !atoms_ok {
            return None;
        }
        let exp = match &self.density {
            Density::None => None,
            Density::Exponential { coeff, rate } => Some((*coeff, *rate)),
            Density::Custom(_) => return None,
        };
        Some(RecursionPlan {
            atom0: self.atom_at_zero(),
            exp,
        })
    }

    /// Product-quadrature weights on a uniform grid with `steps` cells of
    /// width `dt`. The returned table integrates `M` exactly (atoms; closed
    /// forms for exponential densities; high-order cell quadrature otherwise)
    /// against the piecewise-linear interpolant of the integrand samples.
    pub fn grid_weights(&self, dt: S, steps: usize) -> Result<GridWeights<S>> {
        if !(dt.is_finite() && dt > S::zero()) {
            return Err(Error::InvalidGrid(format!("step {dt} must be positive")));
        }
        let mut a = vec![S::zero(); steps];
        let mut b = vec![S::zero(); steps];
        let half = S::of(0.5);

        // Atom steps integrate the hat weights in closed form.
        for &(loc, m) in &self.atoms {
            let start_cell = (loc / dt).to_f64_lossy().floor() as usize;
            for k in start_cell..steps {
                let t_k = dt * S::of(k as f64);
                let t_k1 = t_k + dt;
                if loc <= t_k {
                    a[k] = a[k] + m * dt * half;
                    b[k] = b[k] + m * dt * half;
                } else if loc < t_k1 {
                    let alpha = (loc - t_k) / dt;
                    let one = S::one();
                    a[k] = a[k] + m * dt * half * (one - alpha) * (one - alpha);
                    b[k] = b[k] + m * dt * half * (one - alpha * alpha);
                }
            }
        }

        match &self.density {
            Density::None => {}
            Density::Exponential { coeff, rate } => {
                let theta = *rate * dt;
                let g1v = g1(theta);
                let g2v = g2(theta);
                let scale = *coeff / *rate;
                // ∫ M_d(τ) (1-u) dτ = (c/λ)(dt/2 - e^{-λ t_k} P),  P = dt(g1-g2)
                // ∫ M_d(τ)  u    dτ = (c/λ)(dt/2 - e^{-λ t_k} Q),  Q = dt·g2
                let p = dt * (g1v - g2v);
                let q = dt * g2v;
                let decay = (-theta).exp();
                let mut attenuation = S::one(); // e^{-λ t_k}
                for k in 0..steps {
                    a[k] = a[k] + scale * (dt * half - attenuation * p);
                    b[k] = b[k] + scale * (dt * half - attenuation * q);
                    attenuation = attenuation * decay;
                }
            }
            Density::Custom(e) => {
                // cumulative density at quarter points, then Boole's rule on
                // the product with the linear hat weights
                let quarter = dt * S::of(0.25);
                let mut md = S::zero(); // density cumulative at cell start
                let mut tau = S::zero();
                let wa = [S::one(), S::of(0.75), S::of(0.5), S::of(0.25), S::zero()];
                let boole = [S::of(7.0), S::of(32.0), S::of(12.0), S::of(32.0), S::of(7.0)];
                for k in 0..steps {
                    let mut vals = [S::zero(); 5];
                    vals[0] = md;
                    for q in 1..5 {
                        let lo = tau + quarter * S::of((q - 1) as f64);
                        let hi = tau + quarter * S::of(q as f64);
                        let inc = if lo >= self.cutoff {
                            S::zero()
                        } else {
                            quad::integrate(
                                &|s| e.eval(s),
                                lo,
                                hi.min(self.cutoff),
                                S::quad_rel_tol(),
                                "density cell",
                            )?
                        };
                        vals[q] = vals[q - 1] + inc;
                    }
                    let scale = dt / S::of(90.0);
                    let mut acc_a = S::zero();
                    let mut acc_b = S::zero();
                    for i in 0..5 {
                        acc_a = acc_a + boole[i] * vals[i] * wa[i];
                        acc_b = acc_b + boole[i] * vals[i] * (S::one() - wa[i]);
                    }
                    a[k] = a[k] + scale * acc_a;
                    b[k] = b[k] + scale * acc_b;
                    md = vals[4];
                    tau = tau + dt;
                }
            }
        }

        Ok(GridWeights {
            dt,
            a,
            b,
            order: 2,
            has_recursion: self.recursion_plan().is_some(),
        })
    }
}

/// Per-lag convolution weights. At step n the discrete convolution reads
/// `C_n = Σ_{k=0}^{n-1} a[k]·g_{n-k} + b[k]·g_{n-k-1}` where `g_j = f(x_j)`.
#[derive(Debug, Clone)]
pub struct GridWeights<S: Scalar> {
    pub dt: S,
    pub a: Vec<S>,
    pub b: Vec<S>,
    /// Consistency order of the underlying product rule.
    pub order: u32,
    /// Whether the kernel also admits the O(N) exponential recursion.
    pub has_recursion: bool,
}

impl<S: Scalar> GridWeights<S> {
    /// Collapsed weight of `g_{n-j}` for a convolution evaluated at step `n`.
    pub fn combined(&self, n: usize) -> Vec<S> {
        let mut w = vec![S::zero(); n + 1];
        if n == 0 {
            return w;
        }
        w[0] = self.a[0];
        for j in 1..n {
            w[j] = self.a[j] + self.b[j - 1];
        }
        w[n] = self.b[n - 1];
        w
    }

    /// Evaluate the convolution at step `n` from integrand samples `g[0..=n]`.
    pub fn convolve(&self, g: &[S], n: usize) -> S {
        let mut acc = S::zero();
        for k in 0..n {
            acc = acc + self.a[k] * g[n - k] + self.b[k] * g[n - k - 1];
        }
        acc
    }
}

/// (1 - e^{-θ}) / θ, stable for small θ.
pub(crate) fn g1<S: Scalar>(theta: S) -> S {
    if theta < S::of(1e-4) {
        let t = theta;
        S::one() - t / S::of(2.0) + t * t / S::of(6.0) - t * t * t / S::of(24.0)
    } else {
        -(-theta).exp_m1() / theta
    }
}

/// (1 - (1+θ) e^{-θ}) / θ², stable for small θ.
pub(crate) fn g2<S: Scalar>(theta: S) -> S {
    if theta < S::of(1e-3) {
        let t = theta;
        S::of(0.5) - t / S::of(3.0) + t * t / S::of(8.0) - t * t * t / S::of(30.0)
    } else {
        ((-theta).exp_m1() + theta * (-theta).exp()).neg() / (theta * theta)
    }
}

/// (θ - 1 + e^{-θ}) / θ², stable for small θ.
pub(crate) fn g3<S: Scalar>(theta: S) -> S {
    if theta < S::of(1e-3) {
        let t = theta;
        S::of(0.5) - t / S::of(6.0) + t * t / S::of(24.0) - t * t * t / S::of(120.0)
    } else {
        (theta + (-theta).exp_m1()) / (theta * theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_kernel() -> MeasureKernel<f64> {
        MeasureKernel::exponential()
    }

    #[test]
    fn cumulative_exponential_density() {
        let k = exp_kernel();
        // oracle: M(t) = 1 - e^{-t}
        assert!((k.cumulative(2.0).unwrap() - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert!((k.cumulative(2.0).unwrap() - 0.8646647167633873).abs() < 1e-15);
        assert_eq!(k.cumulative(0.0).unwrap(), 0.0);
        assert!((k.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cumulative_with_interior_atom() {
        let k = MeasureKernel::new(
            vec![(1.0, 0.5)],
            Density::Exponential { coeff: 1.0, rate: 1.0 },
            f64::INFINITY,
        )
        .unwrap();
        // before the atom: density only
        assert!((k.cumulative(0.5).unwrap() - 0.3934693402873666).abs() < 1e-15);
        // at the atom location the atom is included
        let at_one = 1.0 - (-1.0f64).exp() + 0.5;
        assert!((k.cumulative(1.0).unwrap() - at_one).abs() < 1e-14);
        assert!((k.total_mass() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn unit_atom_at_zero() {
        let k = MeasureKernel::<f64>::delta_zero();
        assert_eq!(k.cumulative(0.0).unwrap(), 1.0);
        assert_eq!(k.cumulative(5.0).unwrap(), 1.0);
        assert_eq!(k.total_mass(), 1.0);
        assert_eq!(k.atom_at_zero(), 1.0);
    }

    #[test]
    fn custom_density_mass_and_cumulative() {
        let k = MeasureKernel::<f64>::new(
            Vec::new(),
            Density::Custom(Expr::parse("1/(1+s)^2").unwrap()),
            10.0,
        )
        .unwrap();
        // oracle: ∫0^t (1+s)^-2 ds = t/(1+t)
        assert!((k.total_mass() - 10.0 / 11.0).abs() < 1e-10);
        assert!((k.cumulative(1.0).unwrap() - 0.5).abs() < 1e-10);
        // past the cutoff nothing accrues
        assert!((k.cumulative(50.0).unwrap() - k.total_mass()).abs() < 1e-10);
        assert!(k.recursion_plan().is_none());
    }

    #[test]
    fn rejects_degenerate_kernels() {
        assert!(MeasureKernel::<f64>::new(Vec::new(), Density::None, f64::INFINITY).is_err());
        assert!(MeasureKernel::<f64>::new(vec![(0.0, -1.0)], Density::None, f64::INFINITY).is_err());
        assert!(MeasureKernel::<f64>::new(vec![(-1.0, 1.0)], Density::None, f64::INFINITY).is_err());
        // custom density needs finite cutoff
        assert!(MeasureKernel::<f64>::new(
            Vec::new(),
            Density::Custom(Expr::parse("1/(1+s)^2").unwrap()),
            f64::INFINITY,
        )
        .is_err());
        // negative density rejected
        assert!(MeasureKernel::<f64>::new(
            Vec::new(),
            Density::Custom(Expr::parse("s - 1").unwrap()),
            10.0,
        )
        .is_err());
        assert!(MeasureKernel::<f64>::new(vec![(0.0, 1.0)], Density::None, f64::INFINITY).is_ok());
    }

    #[test]
    fn negative_time_rejected() {
        let k = exp_kernel();
        assert!(matches!(k.cumulative(-0.5), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn recursion_detection() {
        assert!(MeasureKernel::<f64>::delta_zero().recursion_plan().is_some());
        let both = MeasureKernel::new(
            vec![(0.0, 0.5)],
            Density::Exponential { coeff: 2.0, rate: 3.0 },
            f64::INFINITY,
        )
        .unwrap();
        let plan = both.recursion_plan().unwrap();
        assert_eq!(plan.atom0, 0.5);
        assert_eq!(plan.exp, Some((2.0, 3.0)));
        // positive-location atom disables the fast path
        let delayed = MeasureKernel::new(
            vec![(1.0, 0.5)],
            Density::Exponential { coeff: 1.0, rate: 1.0 },
            f64::INFINITY,
        )
        .unwrap();
        assert!(delayed.recursion_plan().is_none());
    }

    #[test]
    fn atom_weights_reduce_to_trapezoid() {
        let k = MeasureKernel::<f64>::delta_zero();
        let w = k.grid_weights(0.1, 5).unwrap();
        assert!(w.has_recursion);
        assert_eq!(w.order, 2);
        let combined = w.combined(5);
        assert!((combined[0] - 0.05).abs() < 1e-15);
        for j in 1..5 {
            assert!((combined[j] - 0.1).abs() < 1e-15, "lag {j}");
        }
        assert!((combined[5] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn interior_atom_splits_between_neighbors() {
        // atom at 0.25 with dt = 0.1 lands inside cell 2 at fraction 1/2
        let k = MeasureKernel::new(vec![(0.25, 2.0)], Density::None, f64::INFINITY).unwrap();
        let w = k.grid_weights(0.1, 4).unwrap();
        // mass conservation per cell: a_k + b_k = m·(length of [loc, t_{k+1}])
        assert_eq!(w.a[0], 0.0);
        assert_eq!(w.a[1], 0.0);
        assert!((w.a[2] + w.b[2] - 2.0 * 0.05).abs() < 1e-15);
        assert!((w.a[3] + w.b[3] - 2.0 * 0.1).abs() < 1e-15);
        // inside the straddled cell the split is the linear one
        assert!((w.a[2] - 2.0 * 0.1 * 0.5 * 0.25).abs() < 1e-15);
        assert!((w.b[2] - 2.0 * 0.1 * 0.5 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn weights_converge_to_continuous_convolution() {
        // kernel with exponential density; smooth integrand g; oracle is
        // adaptive quadrature of ∫ M(t-s) g(s) ds
        let k = exp_kernel();
        let g = |s: f64| (s).cos() + 2.0;
        let t_end = 2.0;
        let oracle = quad::integrate(
            &|s: f64| (1.0 - (-(t_end - s)).exp()) * g(s),
            0.0,
            t_end,
            1e-13,
            "oracle",
        )
        .unwrap();

        let mut errs = Vec::new();
        for &n in &[10usize, 20, 40] {
            let dt = t_end / n as f64;
            let w = k.grid_weights(dt, n).unwrap();
            let samples: Vec<f64> = (0..=n).map(|i| g(dt * i as f64)).collect();
            let disc = w.convolve(&samples, n);
            errs.push((disc - oracle).abs());
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 1.8 && s1 < 2.2, "slope {s1}");
        assert!(s2 > 1.8 && s2 < 2.2, "slope {s2}");
    }

    #[test]
    fn custom_density_weights_match_exponential_closed_form() {
        // same measure expressed two ways; weights must agree closely
        let closed = exp_kernel();
        let custom = MeasureKernel::new(
            Vec::new(),
            Density::Custom(Expr::parse("exp(-s)").unwrap()),
            60.0,
        )
        .unwrap();
        let wc = closed.grid_weights(0.05, 40).unwrap();
        let wx = custom.grid_weights(0.05, 40).unwrap();
        for k in 0..40 {
            assert!((wc.a[k] - wx.a[k]).abs() < 1e-11, "a[{k}]");
            assert!((wc.b[k] - wx.b[k]).abs() < 1e-11, "b[{k}]");
        }
        assert!(!wx.has_recursion);
        assert!(wc.has_recursion);
    }

    #[test]
    fn tail_bound_covers_remaining_mass() {
        let k = MeasureKernel::new(
            vec![(0.0, 0.3), (2.5, 0.2)],
            Density::Exponential { coeff: 1.0, rate: 2.0 },
            f64::INFINITY,
        )
        .unwrap();
        for &t in &[0.0, 1.0, 2.5, 4.0, 30.0] {
            let seen = k.cumulative(t).unwrap();
            let bound = k.mass_tail_bound(t);
            assert!(
                k.total_mass() - seen <= bound + 1e-12,
                "t = {t}: remaining {} > bound {bound}",
                k.total_mass() - seen
            );
        }
    }

    #[test]
    fn small_theta_helpers_match_direct_formulas() {
        // direct formulas cancel catastrophically below theta ~ 1e-3, so the
        // comparison only makes sense where both sides are well conditioned
        for &theta in &[0.5f64, 0.05, 0.01] {
            let direct1 = (1.0 - (-theta).exp()) / theta;
            let direct2 = (1.0 - (1.0 + theta) * (-theta).exp()) / (theta * theta);
            let direct3 = (theta - 1.0 + (-theta).exp()) / (theta * theta);
            assert!((g1(theta) - direct1).abs() / direct1 < 1e-9);
            assert!((g2(theta) - direct2).abs() / direct2 < 1e-9);
            assert!((g3(theta) - direct3).abs() / direct3 < 1e-9);
        }
        // identity used by the recursion: g2 + g3 = g1, both branches
        for &theta in &[0.5f64, 0.01, 2e-3, 1e-3, 5e-4, 1e-5, 1e-9] {
            assert!((g2(theta) + g3(theta) - g1(theta)).abs() < 1e-12, "{theta}");
        }
        // just above the branch cutoff the direct formulas still agree with
        // the series expansion, so the two branches join consistently
        let theta = 2e-3f64;
        let series2 = 0.5 - theta / 3.0 + theta * theta / 8.0 - theta.powi(3) / 30.0;
        let series3 = 0.5 - theta / 6.0 + theta * theta / 24.0 - theta.powi(3) / 120.0;
        assert!((g2(theta) - series2).abs() / series2 < 1e-10);
        assert!((g3(theta) - series3).abs() / series3 < 1e-10);
    }
}
