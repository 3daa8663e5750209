//! `volterra`: integrate perturbed sublinear-growth equations and report
//! the asymptotic diagnostics. Exit codes: 0 run complete and every check
//! passed, 2 run complete but some check failed, 1 invalid input or error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use volterra::error::{Error, Result};
use volterra::noise::NoiseModel;
use volterra::solver::refine_and_compare;

use volterra_cli::config::RunConfig;
use volterra_cli::ensemble::run_ensemble;
use volterra_cli::run::{execute, write_csv, write_report};
use volterra_cli::scenario::{self, assertions_text, Payload};

#[derive(Parser)]
#[command(
    name = "volterra",
    version,
    about = "numerical laboratory for perturbed sublinear Volterra growth equations"
)]
struct Cli {
    /// Output directory (overrides output.dir from the config; default `.`)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides both the config and VOLTERRA_SEED)
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Write every grid point to trajectory.csv instead of ~1024 rows
    #[arg(long, global = true)]
    full_dump: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one path and write trajectory.csv + report.txt
    Solve { config: PathBuf },
    /// Run a canned experiment by id and check its known limits
    Reproduce { id: String },
    /// Integrate run.paths independent paths and aggregate their statistics
    Ensemble { config: PathBuf },
    /// Re-run on successively halved grids and report observed orders
    Convergence { config: PathBuf },
}

fn main() -> ExitCode {
    // clap's own error exit code is 2, which this tool reserves for failed
    // checks; route usage errors through 1 and help/version through 0.
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// `--seed` beats VOLTERRA_SEED beats the config's run.seed.
fn seed_override(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("VOLTERRA_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("VOLTERRA_SEED must be a u64, got {raw:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Error::Config("VOLTERRA_SEED is not valid unicode".into()))
        }
    }
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.cmd {
        Cmd::Solve { config } => cmd_solve(cli, config),
        Cmd::Reproduce { id } => cmd_reproduce(cli, id),
        Cmd::Ensemble { config } => cmd_ensemble(cli, config),
        Cmd::Convergence { config } => cmd_convergence(cli, config),
    }
}

fn cmd_solve(cli: &Cli, config: &Path) -> Result<bool> {
    let cfg = RunConfig::from_file(config)?;
    let seed = seed_override(cli.seed)?.unwrap_or(cfg.seed);
    // The whole run happens before any file is touched, so a failure
    // anywhere leaves the output directory exactly as it was.
    let art = execute(&cfg, seed, 0)?;
    let dir = out_dir(cli, &cfg);
    std::fs::create_dir_all(&dir)?;
    write_csv(&dir.join("trajectory.csv"), &art, cli.full_dump)?;
    write_report(&dir.join("report.txt"), &cfg, &art)?;
    print!("{}", art.report.render());
    println!("wrote {}", dir.join("trajectory.csv").display());
    println!("wrote {}", dir.join("report.txt").display());
    Ok(art.report.all_checks_pass())
}

fn cmd_reproduce(cli: &Cli, id: &str) -> Result<bool> {
    let sc = scenario::find(id).ok_or_else(|| {
        let known: Vec<&str> = scenario::SCENARIOS.iter().map(|s| s.id).collect();
        Error::Config(format!(
            "unknown example id '{id}'; known ids: {}",
            known.join(", ")
        ))
    })?;
    let outcome = scenario::run_scenario(sc, seed_override(cli.seed)?)?;
    let dir = out_dir(cli, &outcome.config);
    std::fs::create_dir_all(&dir)?;
    let text = assertions_text(&outcome.assertions);
    match &outcome.payload {
        Payload::Single(art) => {
            write_csv(&dir.join("trajectory.csv"), art, cli.full_dump)?;
            write_report(&dir.join("report.txt"), &outcome.config, art)?;
        }
        Payload::Ensemble(rep) => {
            std::fs::write(dir.join("ensemble.txt"), rep.render())?;
        }
    }
    std::fs::write(dir.join("assertions.txt"), &text)?;
    println!("{} -- {}", sc.id, sc.summary);
    print!("{text}");
    Ok(outcome.assertions.iter().all(|a| a.pass))
}

fn cmd_ensemble(cli: &Cli, config: &Path) -> Result<bool> {
    let cfg = RunConfig::from_file(config)?;
    let seed = seed_override(cli.seed)?.unwrap_or(cfg.seed);
    let rep = run_ensemble(&cfg, seed)?;
    let dir = out_dir(cli, &cfg);
    std::fs::create_dir_all(&dir)?;
    let text = rep.render();
    std::fs::write(dir.join("ensemble.txt"), &text)?;
    print!("{text}");
    Ok(true)
}

fn cmd_convergence(cli: &Cli, config: &Path) -> Result<bool> {
    let cfg = RunConfig::from_file(config)?;
    let seed = seed_override(cli.seed)?.unwrap_or(cfg.seed);
    let kernel = cfg.build_kernel()?;
    let n = cfg.build_nonlinearity()?;
    let (forcing, psi) = cfg.build_forcing(&kernel, &n)?;
    let noise = cfg.build_noise()?;
    let path = match &noise {
        NoiseModel::None => None,
        model => Some(model.sample(cfg.dt, cfg.steps(), seed, 0)?),
    };
    let rep = refine_and_compare(&kernel, &n, &forcing, path.as_ref(), psi, cfg.dt, cfg.steps(), 4)?;
    let mut text = String::new();
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(text, "levels = {}", rep.dts.len());
    let _ = writeln!(text, "dts = {}", join(&rep.dts));
    let _ = writeln!(text, "max_diffs = {}", join(&rep.max_diffs));
    let _ = writeln!(text, "orders = {}", join(&rep.orders));
    let dir = out_dir(cli, &cfg);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("convergence.txt"), &text)?;
    print!("{text}");
    Ok(true)
}
