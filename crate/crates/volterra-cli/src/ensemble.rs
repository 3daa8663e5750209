//! Seed-streamed ensembles: N independent paths from one master seed,
//! solved in parallel, aggregated into per-path tail statistics and an
//! order-independent summary report.

use std::fmt::Write as _;

use rayon::prelude::*;
use volterra::asymptotics::{dense_clock_trace, dense_xsigma_trace, tail_limsup_of, Tolerances};
use volterra::error::{Error, Result};
use volterra::noise::NoiseModel;
use volterra::solver::solve_stochastic;

use crate::config::{ForcingSpec, RunConfig};

/// Tail statistics of one path. `None` means the statistic was not
/// defined on this path (trace too short, envelope not yet alive), and
/// such paths count against every fraction they appear in.
#[derive(Debug, Clone)]
pub struct PathStats {
    pub stream: u64,
    pub clock_tail: Option<f64>,
    pub max_abs_x: f64,
    pub xsigma_limsup: Option<f64>,
    pub xsigma_liminf: Option<f64>,
    pub residual_at_horizon: Option<f64>,
    pub truncated: bool,
}

pub struct EnsembleReport {
    pub seed: u64,
    pub brownian: bool,
    pub stats: Vec<PathStats>,
}

impl EnsembleReport {
    pub fn fraction(&self, pred: impl Fn(&PathStats) -> bool) -> f64 {
        let hits = self.stats.iter().filter(|s| pred(s)).count();
        hits as f64 / self.stats.len() as f64
    }

    /// Ensemble tail statistic: the extreme of the per-path tails.
    pub fn clock_tail_max(&self) -> Option<f64> {
        fold_max(self.stats.iter().map(|s| s.clock_tail))
    }

    pub fn xsigma_limsup_max(&self) -> Option<f64> {
        fold_max(self.stats.iter().map(|s| s.xsigma_limsup))
    }

    pub fn xsigma_liminf_min(&self) -> Option<f64> {
        fold_max(self.stats.iter().map(|s| s.xsigma_liminf.map(|v| -v))).map(|v| -v)
    }

    /// Flat key-value summary. Thresholds are the default tolerances;
    /// byte-identical across runs with the same seed and across worker
    /// counts.
    pub fn render(&self) -> String {
        let tol = Tolerances::<f64>::default();
        let mut out = String::new();
        let _ = writeln!(out, "paths = {}", self.stats.len());
        let _ = writeln!(out, "seed = {}", self.seed);
        let truncated = self.stats.iter().filter(|s| s.truncated).count();
        let _ = writeln!(out, "truncated_paths = {truncated}");

        let clock_cap = 1.0 + tol.clock;
        let _ = writeln!(out, "threshold.clock_tail = {clock_cap}");
        let _ = writeln!(
            out,
            "fraction.clock_tail_at_most_threshold = {}",
            self.fraction(|s| s.clock_tail.is_some_and(|v| v <= clock_cap))
        );
        let _ = writeln!(out, "threshold.escape = {}", tol.divergence_floor);
        let _ = writeln!(
            out,
            "fraction.max_abs_at_least_threshold = {}",
            self.fraction(|s| s.max_abs_x >= tol.divergence_floor)
        );
        let _ = writeln!(out, "ensemble.clock_tail_max = {}", fmt_opt(self.clock_tail_max()));

        if self.brownian {
            let _ = writeln!(out, "threshold.residual = {}", tol.residual);
            let _ = writeln!(
                out,
                "fraction.residual_at_most_threshold = {}",
                self.fraction(|s| s.residual_at_horizon.is_some_and(|v| v.abs() <= tol.residual))
            );
            let _ = writeln!(
                out,
                "ensemble.xsigma_limsup_max = {}",
                fmt_opt(self.xsigma_limsup_max())
            );
            let _ = writeln!(
                out,
                "ensemble.xsigma_liminf_min = {}",
                fmt_opt(self.xsigma_liminf_min())
            );
        }
        out
    }
}

fn fold_max(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.flatten().fold(None, |acc: Option<f64>, v| {
        Some(match acc {
            Some(a) => a.max(v),
            None => v,
        })
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "n/a".into(),
    }
}

/// Run `cfg.paths` independent paths with substreams 0..N of `seed`.
/// Workers only hand back immutable per-path stats; aggregation is a
/// sequential fold, so the report is independent of the worker count.
pub fn run_ensemble(cfg: &RunConfig, seed: u64) -> Result<EnsembleReport> {
    if cfg.paths < 2 {
        return Err(Error::Config(
            "an ensemble needs run.paths >= 2; use the solve command for one path".into(),
        ));
    }
    let kernel = cfg.build_kernel()?;
    let n = cfg.build_nonlinearity()?;
    let noise = cfg.build_noise()?;
    if noise.is_none() {
        return Err(Error::Config(
            "an ensemble needs a stochastic noise model (noise.kind != none)".into(),
        ));
    }
    let (forcing, psi) = cfg.build_forcing(&kernel, &n)?;
    let trend = match cfg.forcing {
        ForcingSpec::Zero => None,
        _ => Some(&forcing),
    };
    let sigma = match &noise {
        NoiseModel::Brownian { sigma } => Some(sigma.clone()),
        _ => None,
    };
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mass = kernel.total_mass();
    let stride = (steps / 2048).max(1);

    let stats = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|stream| -> Result<PathStats> {
            let path = noise.sample(dt, steps, seed, stream)?;
            let traj = solve_stochastic(&kernel, &n, trend, &path, psi, dt, steps)?;

            let clock_tail = match dense_clock_trace(&traj, &n, mass, stride) {
                Ok(trace) => tail_limsup_of(&trace).ok().map(|s| s.limsup),
                Err(Error::InsufficientHorizon { .. }) => None,
                Err(e) => return Err(e),
            };
            let max_abs_x = traj.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));

            let (mut xsigma_limsup, mut xsigma_liminf, mut residual) = (None, None, None);
            if let Some(sig) = &sigma {
                if let Ok(trace) = dense_xsigma_trace(&traj, sig, stride) {
                    if let Ok(tails) = tail_limsup_of(&trace) {
                        xsigma_limsup = Some(tails.limsup);
                        xsigma_liminf = Some(tails.liminf);
                    }
                }
                let t_end = traj.final_time();
                let k_end = traj.len() - 1;
                if let Ok(env) = sig.envelope(t_end) {
                    residual = Some((traj.values[k_end] - traj.z_values[k_end]) / env);
                }
            }

            Ok(PathStats {
                stream,
                clock_tail,
                max_abs_x,
                xsigma_limsup,
                xsigma_liminf,
                residual_at_horizon: residual,
                truncated: traj.is_truncated(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EnsembleReport {
        seed,
        brownian: sigma.is_some(),
        stats,
    })
}
