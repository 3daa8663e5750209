//! Flat `section.key = value` run files. Parsing is strict: unknown and
//! duplicate keys are errors, every number must parse, and a config that
//! parses serializes back to an equivalent config.

use std::collections::BTreeMap;
use std::path::Path;

use volterra::error::{Error, Result};
use volterra::expr::Expr;
use volterra::forcing::{Envelope, EnvelopeRole, ForcingTerm};
use volterra::kernel::{Density, MeasureKernel};
use volterra::noise::{NoiseModel, SigmaEnvelope};
use volterra::nonlinear::{Hypotheses, Nonlinearity};
use volterra::{Envelope64, Forcing64, Kernel64, Noise64, Nonlinearity64};

#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    None,
    Exponential { coeff: f64, rate: f64 },
    Expr(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub atoms: Vec<(f64, f64)>,
    pub density: DensitySpec,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearitySpec {
    Power { beta: f64 },
    LogType,
    Custom {
        f: String,
        phi: String,
        assume: Vec<String>,
        linear_bound: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    Zero,
    Builtin { name: String, params: Vec<f64> },
    Expr(String),
    /// Reverse-engineer H so the solution tracks this expression in t;
    /// the initial state is the target's value at zero.
    Target(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    Const(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    Brownian { sigma: SigmaSpec },
    Stable { alpha: f64, scale: f64, skew: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeSpec {
    Power { coeff: f64, eps: f64 },
    Expr(String),
    ClockInverse { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleSpec {
    Exact,
    Plus,
    Minus,
}

impl RoleSpec {
    pub fn to_role(self) -> EnvelopeRole {
        match self {
            RoleSpec::Exact => EnvelopeRole::Gamma,
            RoleSpec::Plus => EnvelopeRole::GammaPlus,
            RoleSpec::Minus => EnvelopeRole::GammaMinus,
        }
    }

    fn name(self) -> &'static str {
        match self {
            RoleSpec::Exact => "exact",
            RoleSpec::Plus => "plus",
            RoleSpec::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    pub nonlinearity: NonlinearitySpec,
    pub forcing: ForcingSpec,
    pub noise: NoiseSpec,
    pub envelope: Option<(RoleSpec, EnvelopeSpec)>,
    pub t_max: f64,
    pub dt: f64,
    pub psi: Option<f64>,
    pub seed: u64,
    pub paths: usize,
    pub snapshots: usize,
    pub out_dir: Option<String>,
}

/// Raw key-value store with duplicate detection and leftover reporting.
struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(Fields { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn finish(self) -> Result<()> {
        if self.map.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.map.keys().map(|k| k.as_str()).collect();
        Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{s}'")))
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got '{s}'")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got '{s}'")))
}

fn parse_pair(key: &str, s: &str) -> Result<(f64, f64)> {
    let Some((a, b)) = s.split_once(':') else {
        return Err(Error::Config(format!("{key}: expected 'a:b', got '{s}'")));
    };
    Ok((parse_f64(key, a.trim())?, parse_f64(key, b.trim())?))
}

fn parse_float_list(key: &str, s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| parse_f64(key, item.trim()))
        .collect()
}

/// Parse a time expression and insist its free variable (if any) is `t`.
fn parse_time_expr(key: &str, src: &str) -> Result<Expr> {
    let e = Expr::parse(src)?;
    if let Some(v) = e.var_name() {
        if v != "t" {
            return Err(Error::Config(format!(
                "{key}: time expressions use the variable 't', found '{v}'"
            )));
        }
    }
    Ok(e)
}

fn parse_state_expr(key: &str, src: &str) -> Result<Expr> {
    let e = Expr::parse(src)?;
    if let Some(v) = e.var_name() {
        if v != "x" {
            return Err(Error::Config(format!(
                "{key}: state expressions use the variable 'x', found '{v}'"
            )));
        }
    }
    Ok(e)
}

const ASSUME_FLAGS: &[&str] = &["positive", "odd", "majorized", "decay", "lipschitz"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::from_text(text)?;

        let atoms = match f.take("kernel.atoms") {
            Some(s) if !s.is_empty() => s
                .split(',')
                .map(|item| parse_pair("kernel.atoms", item.trim()))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let density = match f.take("kernel.density").as_deref() {
            None | Some("none") => DensitySpec::None,
            Some(s) => {
                if let Some(rest) = s.strip_prefix("exp:") {
                    let (coeff, rate) = parse_pair("kernel.density", rest)?;
                    DensitySpec::Exponential { coeff, rate }
                } else if let Some(rest) = s.strip_prefix("expr:") {
                    parse_time_expr("kernel.density", rest)?;
                    DensitySpec::Expr(rest.trim().to_string())
                } else {
                    return Err(Error::Config(format!(
                        "kernel.density: expected none, exp:C:R or expr:..., got '{s}'"
                    )));
                }
            }
        };
        let cutoff = f
            .take("kernel.cutoff")
            .map(|s| parse_f64("kernel.cutoff", &s))
            .transpose()?;
        let kernel = KernelSpec {
            atoms,
            density,
            cutoff,
        };

        let nonlinearity = match f.take("nonlinearity.family").as_deref() {
            Some("power") => {
                let beta_s = f.take("nonlinearity.beta").ok_or_else(|| {
                    Error::Config("nonlinearity.beta is required for the power family".into())
                })?;
                NonlinearitySpec::Power {
                    beta: parse_f64("nonlinearity.beta", &beta_s)?,
                }
            }
            Some("logtype") => NonlinearitySpec::LogType,
            Some("custom") => {
                let f_src = f.take("nonlinearity.f").ok_or_else(|| {
                    Error::Config("nonlinearity.f is required for a custom family".into())
                })?;
                let phi_src = f.take("nonlinearity.phi").ok_or_else(|| {
                    Error::Config("nonlinearity.phi is required for a custom family".into())
                })?;
                parse_state_expr("nonlinearity.f", &f_src)?;
                parse_state_expr("nonlinearity.phi", &phi_src)?;
                let assume = match f.take("nonlinearity.assume") {
                    Some(s) if !s.is_empty() => {
                        let flags: Vec<String> =
                            s.split(',').map(|x| x.trim().to_string()).collect();
                        for flag in &flags {
                            if !ASSUME_FLAGS.contains(&flag.as_str()) {
                                return Err(Error::Config(format!(
                                    "nonlinearity.assume: unknown flag '{flag}' (known: {})",
                                    ASSUME_FLAGS.join(", ")
                                )));
                            }
                        }
                        flags
                    }
                    _ => Vec::new(),
                };
                let linear_bound = f
                    .take("nonlinearity.linear_bound")
                    .map(|s| parse_pair("nonlinearity.linear_bound", &s))
                    .transpose()?;
                NonlinearitySpec::Custom {
                    f: f_src,
                    phi: phi_src,
                    assume,
                    linear_bound,
                }
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "nonlinearity.family: expected power, logtype or custom, got '{other}'"
                )));
            }
            None => {
                return Err(Error::Config("nonlinearity.family is required".into()));
            }
        };

        let forcing = match f.take("forcing.kind").as_deref() {
            None | Some("zero") => ForcingSpec::Zero,
            Some("builtin") => {
                let name = f.take("forcing.name").ok_or_else(|| {
                    Error::Config("forcing.name is required for a builtin forcing".into())
                })?;
                let params = match f.take("forcing.params") {
                    Some(s) => parse_float_list("forcing.params", &s)?,
                    None => Vec::new(),
                };
                ForcingSpec::Builtin { name, params }
            }
            Some("expr") => {
                let src = f.take("forcing.expr").ok_or_else(|| {
                    Error::Config("forcing.expr is required for an expression forcing".into())
                })?;
                parse_time_expr("forcing.expr", &src)?;
                ForcingSpec::Expr(src)
            }
            Some("target") => {
                let src = f.take("forcing.target").ok_or_else(|| {
                    Error::Config("forcing.target is required for a target forcing".into())
                })?;
                parse_time_expr("forcing.target", &src)?;
                ForcingSpec::Target(src)
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "forcing.kind: expected zero, builtin, expr or target, got '{other}'"
                )));
            }
        };

        let noise = match f.take("noise.kind").as_deref() {
            None | Some("none") => NoiseSpec::None,
            Some("brownian") => {
                let s = f.take("noise.sigma").ok_or_else(|| {
                    Error::Config("noise.sigma is required for brownian noise".into())
                })?;
                let sigma = if let Some(rest) = s.strip_prefix("const:") {
                    SigmaSpec::Const(parse_f64("noise.sigma", rest.trim())?)
                } else if let Some(rest) = s.strip_prefix("expr:") {
                    parse_time_expr("noise.sigma", rest)?;
                    SigmaSpec::Expr(rest.trim().to_string())
                } else {
                    return Err(Error::Config(format!(
                        "noise.sigma: expected const:X or expr:..., got '{s}'"
                    )));
                };
                NoiseSpec::Brownian { sigma }
            }
            Some("stable") => {
                let alpha_s = f.take("noise.alpha").ok_or_else(|| {
                    Error::Config("noise.alpha is required for stable noise".into())
                })?;
                let alpha = parse_f64("noise.alpha", &alpha_s)?;
                let scale = match f.take("noise.scale") {
                    Some(s) => parse_f64("noise.scale", &s)?,
                    None => 1.0,
                };
                let skew = match f.take("noise.skew") {
                    Some(s) => parse_f64("noise.skew", &s)?,
                    None => 0.0,
                };
                NoiseSpec::Stable { alpha, scale, skew }
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "noise.kind: expected none, brownian or stable, got '{other}'"
                )));
            }
        };

        let envelope = match f.take("envelope.kind").as_deref() {
            None => None,
            Some(kind) => {
                let role = match f.take("envelope.role").as_deref() {
                    Some("exact") => RoleSpec::Exact,
                    Some("plus") => RoleSpec::Plus,
                    Some("minus") => RoleSpec::Minus,
                    Some(other) => {
                        return Err(Error::Config(format!(
                            "envelope.role: expected exact, plus or minus, got '{other}'"
                        )));
                    }
                    None => {
                        return Err(Error::Config(
                            "envelope.role is required when an envelope is given".into(),
                        ));
                    }
                };
                let spec = match kind {
                    "power" => {
                        let coeff = match f.take("envelope.coeff") {
                            Some(s) => parse_f64("envelope.coeff", &s)?,
                            None => 1.0,
                        };
                        let eps_s = f.take("envelope.eps").ok_or_else(|| {
                            Error::Config("envelope.eps is required for a power envelope".into())
                        })?;
                        EnvelopeSpec::Power {
                            coeff,
                            eps: parse_f64("envelope.eps", &eps_s)?,
                        }
                    }
                    "expr" => {
                        let src = f.take("envelope.expr").ok_or_else(|| {
                            Error::Config(
                                "envelope.expr is required for an expression envelope".into(),
                            )
                        })?;
                        parse_time_expr("envelope.expr", &src)?;
                        EnvelopeSpec::Expr(src)
                    }
                    "clock_inverse" => {
                        let rate_s = f.take("envelope.rate").ok_or_else(|| {
                            Error::Config(
                                "envelope.rate is required for a clock-inverse envelope".into(),
                            )
                        })?;
                        EnvelopeSpec::ClockInverse {
                            rate: parse_f64("envelope.rate", &rate_s)?,
                        }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "envelope.kind: expected power, expr or clock_inverse, got '{other}'"
                        )));
                    }
                };
                Some((role, spec))
            }
        };

        let t_max_s = f
            .take("grid.t_max")
            .ok_or_else(|| Error::Config("grid.t_max is required".into()))?;
        let t_max = parse_f64("grid.t_max", &t_max_s)?;
        let dt_s = f
            .take("grid.dt")
            .ok_or_else(|| Error::Config("grid.dt is required".into()))?;
        let dt = parse_f64("grid.dt", &dt_s)?;
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::Config("grid.t_max must be positive and finite".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config("grid.dt must be positive and finite".into()));
        }
        if dt > t_max {
            return Err(Error::Config("grid.dt must not exceed grid.t_max".into()));
        }

        let psi = f
            .take("run.psi")
            .map(|s| parse_f64("run.psi", &s))
            .transpose()?;
        let seed = match f.take("run.seed") {
            Some(s) => parse_u64("run.seed", &s)?,
            None => 0,
        };
        let paths = match f.take("run.paths") {
            Some(s) => parse_usize("run.paths", &s)?,
            None => 1,
        };
        if paths == 0 {
            return Err(Error::Config("run.paths must be at least 1".into()));
        }
        let snapshots = match f.take("run.snapshots") {
            Some(s) => parse_usize("run.snapshots", &s)?,
            None => 12,
        };
        if snapshots < 6 {
            return Err(Error::Config(
                "run.snapshots must be at least 6; tail extrapolation needs six points".into(),
            ));
        }
        let out_dir = f.take("output.dir");

        f.finish()?;

        let cfg = RunConfig {
            kernel,
            nonlinearity,
            forcing,
            noise,
            envelope,
            t_max,
            dt,
            psi,
            seed,
            paths,
            snapshots,
            out_dir,
        };
        if cfg.steps() < 8 {
            return Err(Error::Config(
                "grid too coarse: t_max/dt must give at least 8 steps".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };

        if !self.kernel.atoms.is_empty() {
            let atoms: Vec<String> = self
                .kernel
                .atoms
                .iter()
                .map(|(t, w)| format!("{t}:{w}"))
                .collect();
            push("kernel.atoms", atoms.join(", "));
        }
        match &self.kernel.density {
            DensitySpec::None => push("kernel.density", "none".into()),
            DensitySpec::Exponential { coeff, rate } => {
                push("kernel.density", format!("exp:{coeff}:{rate}"))
            }
            DensitySpec::Expr(src) => push("kernel.density", format!("expr:{src}")),
        }
        if let Some(c) = self.kernel.cutoff {
            push("kernel.cutoff", format!("{c}"));
        }

        match &self.nonlinearity {
            NonlinearitySpec::Power { beta } => {
                push("nonlinearity.family", "power".into());
                push("nonlinearity.beta", format!("{beta}"));
            }
            NonlinearitySpec::LogType => push("nonlinearity.family", "logtype".into()),
            NonlinearitySpec::Custom {
                f,
                phi,
                assume,
                linear_bound,
            } => {
                push("nonlinearity.family", "custom".into());
                push("nonlinearity.f", f.clone());
                push("nonlinearity.phi", phi.clone());
                if !assume.is_empty() {
                    push("nonlinearity.assume", assume.join(", "));
                }
                if let Some((k, eta)) = linear_bound {
                    push("nonlinearity.linear_bound", format!("{k}:{eta}"));
                }
            }
        }

        match &self.forcing {
            ForcingSpec::Zero => push("forcing.kind", "zero".into()),
            ForcingSpec::Builtin { name, params } => {
                push("forcing.kind", "builtin".into());
                push("forcing.name", name.clone());
                if !params.is_empty() {
                    let items: Vec<String> = params.iter().map(|p| format!("{p}")).collect();
                    push("forcing.params", items.join(", "));
                }
            }
            ForcingSpec::Expr(src) => {
                push("forcing.kind", "expr".into());
                push("forcing.expr", src.clone());
            }
            ForcingSpec::Target(src) => {
                push("forcing.kind", "target".into());
                push("forcing.target", src.clone());
            }
        }

        match &self.noise {
            NoiseSpec::None => push("noise.kind", "none".into()),
            NoiseSpec::Brownian { sigma } => {
                push("noise.kind", "brownian".into());
                match sigma {
                    SigmaSpec::Const(c) => push("noise.sigma", format!("const:{c}")),
                    SigmaSpec::Expr(src) => push("noise.sigma", format!("expr:{src}")),
                }
            }
            NoiseSpec::Stable { alpha, scale, skew } => {
                push("noise.kind", "stable".into());
                push("noise.alpha", format!("{alpha}"));
                push("noise.scale", format!("{scale}"));
                push("noise.skew", format!("{skew}"));
            }
        }

        if let Some((role, spec)) = &self.envelope {
            match spec {
                EnvelopeSpec::Power { coeff, eps } => {
                    push("envelope.kind", "power".into());
                    push("envelope.coeff", format!("{coeff}"));
                    push("envelope.eps", format!("{eps}"));
                }
                EnvelopeSpec::Expr(src) => {
                    push("envelope.kind", "expr".into());
                    push("envelope.expr", src.clone());
                }
                EnvelopeSpec::ClockInverse { rate } => {
                    push("envelope.kind", "clock_inverse".into());
                    push("envelope.rate", format!("{rate}"));
                }
            }
            push("envelope.role", role.name().into());
        }

        push("grid.t_max", format!("{}", self.t_max));
        push("grid.dt", format!("{}", self.dt));
        if let Some(psi) = self.psi {
            push("run.psi", format!("{psi}"));
        }
        push("run.seed", format!("{}", self.seed));
        push("run.paths", format!("{}", self.paths));
        push("run.snapshots", format!("{}", self.snapshots));
        if let Some(dir) = &self.out_dir {
            push("output.dir", dir.clone());
        }
        out
    }

    pub fn build_kernel(&self) -> Result<Kernel64> {
        let density = match &self.kernel.density {
            DensitySpec::None => Density::None,
            DensitySpec::Exponential { coeff, rate } => Density::Exponential {
                coeff: *coeff,
                rate: *rate,
            },
            DensitySpec::Expr(src) => Density::Custom(parse_time_expr("kernel.density", src)?),
        };
        let cutoff = self.kernel.cutoff.unwrap_or(f64::INFINITY);
        MeasureKernel::new(self.kernel.atoms.clone(), density, cutoff)
    }

    pub fn build_nonlinearity(&self) -> Result<Nonlinearity64> {
        match &self.nonlinearity {
            NonlinearitySpec::Power { beta } => Nonlinearity::power(*beta),
            NonlinearitySpec::LogType => Ok(Nonlinearity::logtype()),
            NonlinearitySpec::Custom {
                f,
                phi,
                assume,
                linear_bound,
            } => {
                let mut hyp = Hypotheses::all_unset();
                for flag in assume {
                    match flag.as_str() {
                        "positive" => hyp.positive = true,
                        "odd" => hyp.asymptotically_odd = true,
                        "majorized" => hyp.majorized = true,
                        "decay" => hyp.monotone_decay = true,
                        "lipschitz" => hyp.locally_lipschitz = true,
                        other => {
                            return Err(Error::Config(format!(
                                "nonlinearity.assume: unknown flag '{other}'"
                            )));
                        }
                    }
                }
                hyp.linear_bound = *linear_bound;
                Nonlinearity::custom(
                    parse_state_expr("nonlinearity.f", f)?,
                    parse_state_expr("nonlinearity.phi", phi)?,
                    None,
                    hyp,
                )
            }
        }
    }

    /// Build the forcing term and resolve the initial state. A target
    /// forcing derives ψ from the target's value at zero and refuses a
    /// conflicting run.psi.
    pub fn build_forcing(
        &self,
        kernel: &Kernel64,
        n: &Nonlinearity64,
    ) -> Result<(Forcing64, f64)> {
        match &self.forcing {
            ForcingSpec::Zero => Ok((ForcingTerm::zero(), self.require_psi()?)),
            ForcingSpec::Builtin { name, params } => Ok((
                ForcingTerm::builtin(name, params)?,
                self.require_psi()?,
            )),
            ForcingSpec::Expr(src) => Ok((
                ForcingTerm::custom_expr(parse_time_expr("forcing.expr", src)?, None)?,
                self.require_psi()?,
            )),
            ForcingSpec::Target(src) => {
                let target = parse_time_expr("forcing.target", src)?;
                let psi = target.eval(0.0);
                if let Some(given) = self.psi {
                    if (given - psi).abs() > 1e-9 * psi.abs().max(1.0) {
                        return Err(Error::Config(format!(
                            "run.psi = {given} conflicts with the target's value {psi} at t = 0"
                        )));
                    }
                }
                let forcing =
                    ForcingTerm::example(kernel, n, |t| target.eval(t), self.dt, self.steps())?;
                Ok((forcing, psi))
            }
        }
    }

    fn require_psi(&self) -> Result<f64> {
        self.psi.ok_or_else(|| {
            Error::Config(
                "run.psi is required unless the forcing is reverse-engineered from a target"
                    .into(),
            )
        })
    }

    pub fn build_noise(&self) -> Result<Noise64> {
        match &self.noise {
            NoiseSpec::None => Ok(NoiseModel::None),
            NoiseSpec::Brownian { sigma } => {
                let env = match sigma {
                    SigmaSpec::Const(c) => SigmaEnvelope::constant(*c)?,
                    SigmaSpec::Expr(src) => {
                        SigmaEnvelope::expr(parse_time_expr("noise.sigma", src)?)
                    }
                };
                Ok(NoiseModel::brownian(env))
            }
            NoiseSpec::Stable { alpha, scale, skew } => NoiseModel::stable(*alpha, *scale, *skew),
        }
    }

    pub fn build_envelope(&self, n: &Nonlinearity64) -> Result<Option<Envelope64>> {
        let Some((role, spec)) = &self.envelope else {
            return Ok(None);
        };
        let role = role.to_role();
        let env = match spec {
            EnvelopeSpec::Power { coeff, eps } => Envelope::power(role, *coeff, *eps)?,
            EnvelopeSpec::Expr(src) => {
                Envelope::expr(role, parse_time_expr("envelope.expr", src)?)
            }
            EnvelopeSpec::ClockInverse { rate } => {
                Envelope::clock_inverse(role, n.clone(), *rate)?
            }
        };
        Ok(Some(env))
    }
}
