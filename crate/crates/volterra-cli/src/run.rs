//! Single-run orchestration: build the domain objects from a config,
//! integrate, attach the asymptotic diagnostics, classify, and write the
//! trajectory and report artifacts.

use std::fmt::Write as _;
use std::path::Path;

use volterra::asymptotics::{
    classify, clock_ratio, envelope_ratio_trace, estimate_l, estimate_l_from_samples,
    residual_sigma_trace, xh_trace, xsigma_trace, ClassifyInput, LClass, LEstimate, Mode,
    RatioTrace, Tolerances,
};
use volterra::error::{Error, Result};
use volterra::noise::{envelope_integrability, NoiseModel};
use volterra::solver::{solve_deterministic, solve_stochastic};
use volterra::{Kernel64, Nonlinearity64, Report64, Sigma64, Trajectory64};

use crate::config::{ForcingSpec, RunConfig};

pub struct RunArtifacts {
    pub trajectory: Trajectory64,
    pub report: Report64,
    pub kernel: Kernel64,
    pub nonlinearity: Nonlinearity64,
    pub sigma: Option<Sigma64>,
    pub clock: Option<RatioTrace<f64>>,
    pub xh: Option<RatioTrace<f64>>,
    pub xsigma: Option<RatioTrace<f64>>,
    pub residual: Option<RatioTrace<f64>>,
    pub envelope_ratio: Option<RatioTrace<f64>>,
    pub l: LEstimate<f64>,
    pub psi: f64,
}

/// A trace below two points cannot support any tail statistic; treat it
/// as absent so its checks degrade to n/a instead of panicking.
fn usable(trace: RatioTrace<f64>) -> Option<RatioTrace<f64>> {
    if trace.len() >= 2 {
        Some(trace)
    } else {
        None
    }
}

fn skippable(err: Error) -> Result<Option<RatioTrace<f64>>> {
    match err {
        Error::InsufficientHorizon { .. } => Ok(None),
        other => Err(other),
    }
}

/// Iterated-log envelope of the noise at every grid time, from the
/// trapezoid quadratic variation. Early times where the variation has
/// not yet cleared e are pinned to a tiny positive constant; the tail
/// statistic never looks at them.
fn sigma_grid(sigma: &Sigma64, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let floor = std::f64::consts::E * (1.0 + 1e-6);
    let mut out = Vec::with_capacity(steps + 1);
    let mut qv = 0.0;
    let mut prev = sigma.sigma(0.0);
    out.push(sigma.envelope_from_qv(floor)?);
    for k in 1..=steps {
        let s = sigma.sigma(dt * k as f64);
        qv += 0.5 * dt * (prev * prev + s * s);
        prev = s;
        out.push(sigma.envelope_from_qv(qv.max(floor))?);
    }
    Ok(out)
}

/// Integrate one path and assemble every diagnostic the classifier can
/// consume for this mode. `stream` selects the noise substream; single
/// runs use 0, ensembles use the path index.
pub fn execute(cfg: &RunConfig, seed: u64, stream: u64) -> Result<RunArtifacts> {
    let kernel = cfg.build_kernel()?;
    let n = cfg.build_nonlinearity()?;
    let noise = cfg.build_noise()?;
    let envelope = cfg.build_envelope(&n)?;
    let (forcing, psi) = cfg.build_forcing(&kernel, &n)?;
    let dt = cfg.dt;
    let steps = cfg.steps();
    let snapshots = cfg.snapshots;
    let mass = kernel.total_mass();

    let trajectory = match &noise {
        NoiseModel::None => solve_deterministic(&kernel, &n, &forcing, psi, dt, steps)?,
        model => {
            let path = model.sample(dt, steps, seed, stream)?;
            let trend = match cfg.forcing {
                ForcingSpec::Zero => None,
                _ => Some(&forcing),
            };
            solve_stochastic(&kernel, &n, trend, &path, psi, dt, steps)?
        }
    };

    let clock_est = clock_ratio(&trajectory, &n, mass, snapshots)?;
    let mut sigma = None;
    let mut xh = None;
    let mut xsigma = None;
    let mut residual = None;
    let mut env_ratio = None;
    let mut integrability = None;

    let (mode, l) = match (&noise, &envelope) {
        (NoiseModel::None, None) => {
            xh = xh_trace(&trajectory, snapshots).map(usable).or_else(skippable)?;
            let l = match cfg.forcing {
                ForcingSpec::Zero => LEstimate::from_parts(0.0, 0.0, 0.0, LClass::Zero),
                _ => estimate_l_from_samples(dt, &trajectory.h_values, &n, mass, snapshots)?,
            };
            (Mode::DeterministicPositive, l)
        }
        (NoiseModel::None, Some(env)) => {
            xh = xh_trace(&trajectory, snapshots).map(usable).or_else(skippable)?;
            env_ratio = envelope_ratio_trace(&trajectory, &|t| env.value(t), snapshots)
                .map(usable)
                .or_else(skippable)?;
            let l = estimate_l(&|t| env.value(t), &n, mass, cfg.t_max, snapshots)?;
            (Mode::DeterministicSigned, l)
        }
        (NoiseModel::Brownian { sigma: env }, _) => {
            sigma = Some(env.clone());
            xsigma = xsigma_trace(&trajectory, env, snapshots).map(usable).or_else(skippable)?;
            residual = residual_sigma_trace(&trajectory, env, snapshots)
                .map(usable)
                .or_else(skippable)?;
            let grid = sigma_grid(env, dt, steps)?;
            let l = estimate_l_from_samples(dt, &grid, &n, mass, snapshots)?;
            (Mode::Brownian, l)
        }
        (NoiseModel::Stable { alpha, .. }, Some(env)) => {
            env_ratio = envelope_ratio_trace(&trajectory, &|t| env.value(t), snapshots)
                .map(usable)
                .or_else(skippable)?;
            integrability = Some(envelope_integrability(env, *alpha, cfg.t_max)?);
            let l = estimate_l(&|t| env.value(t), &n, mass, cfg.t_max, snapshots)?;
            (Mode::Stable, l)
        }
        // Without an envelope the jump-regime comparison has no reference
        // curve, so the run still solves and reports the clock, nothing more.
        (NoiseModel::Stable { .. }, None) => {
            let l = LEstimate::from_parts(0.0, 0.0, 0.0, LClass::Zero);
            (Mode::Stable, l)
        }
    };

    let mut input = ClassifyInput::new(mode, &l);
    input.clock = Some(&clock_est.trace);
    input.xh = xh.as_ref();
    input.xsigma = xsigma.as_ref();
    input.residual_sigma = residual.as_ref();
    input.envelope_ratio = env_ratio.as_ref();
    input.envelope_role = envelope.as_ref().map(|e| e.role());
    input.integrability = integrability;
    let mut report = classify(&input, &Tolerances::default());
    if matches!(noise, NoiseModel::Stable { .. }) && envelope.is_none() {
        report
            .notes
            .push("no envelope supplied; stable-noise checks are informational only".into());
    }

    Ok(RunArtifacts {
        trajectory,
        report,
        kernel,
        nonlinearity: n,
        sigma,
        clock: Some(clock_est.trace),
        xh,
        xsigma,
        residual,
        envelope_ratio: env_ratio,
        l,
        psi,
    })
}

fn fmt_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Write the trajectory as CSV. Rows are thinned to at most 1024 unless
/// `full` is set; inapplicable diagnostics are left empty.
pub fn write_csv(
    path: &Path,
    art: &RunArtifacts,
    full: bool,
) -> Result<()> {
    let traj = &art.trajectory;
    let mass = art.kernel.total_mass();
    let last = traj.len() - 1;
    let stride = if full { 1 } else { (last / 1024).max(1) };
    let mut out = String::from("t,x,H,Z,M_t,clock_ratio,xh_ratio,xsigma_ratio\n");
    let mut k = 0;
    while k <= last {
        let t = traj.time(k);
        let x = traj.values[k];
        let h = traj.h_values[k];
        let z = traj.z_values[k];
        let m_t = art.kernel.cumulative(t)?;
        let clock = if t > 0.0 {
            match art.nonlinearity.clock(x.abs()) {
                Ok(f) => fmt_field(f / (mass * t)),
                Err(_) => String::new(),
            }
        } else {
            String::new()
        };
        let xh = if h > 0.0 { fmt_field(x / h) } else { String::new() };
        let xsigma = match &art.sigma {
            Some(sig) => match sig.envelope(t) {
                Ok(env) => fmt_field(x / env),
                Err(_) => String::new(),
            },
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t, x, h, z, m_t, clock, xh, xsigma
        )
        .expect("writing to a string cannot fail");
        if k == last {
            break;
        }
        k = (k + stride).min(last);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write the flat-text run report: a small header describing the grid
/// and the final state, then the classifier's rendering.
pub fn write_report(path: &Path, cfg: &RunConfig, art: &RunArtifacts) -> Result<()> {
    let mut out = String::new();
    let traj = &art.trajectory;
    let _ = writeln!(out, "dt = {}", traj.dt);
    let _ = writeln!(out, "steps = {}", traj.len() - 1);
    let _ = writeln!(out, "t_max = {}", cfg.t_max);
    let _ = writeln!(out, "psi = {}", art.psi);
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "final_t = {}", traj.final_time());
    let _ = writeln!(out, "final_x = {}", traj.final_value());
    match traj.truncated_at {
        Some(t) => {
            let _ = writeln!(out, "truncated_at = {t}");
        }
        None => {
            let _ = writeln!(out, "truncated_at = none");
        }
    }
    for w in &traj.warnings {
        let _ = writeln!(out, "warning = {w}");
    }
    out.push('\n');
    out.push_str(&art.report.render());
    std::fs::write(path, out)?;
    Ok(())
}
