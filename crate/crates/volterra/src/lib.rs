//! Numerical laboratory for perturbed nonlinear Volterra equations.
//!
//! The crate integrates equations of the form
//! `x'(t) = ∫ μ(ds) f(x(t-s)) + h(t)` (deterministic forcing) and their
//! stochastically forced counterparts driven by Brownian or α-stable paths,
//! then measures growth diagnostics (clock ratios, forcing ratios,
//! iterated-log envelopes, the L-functional) and classifies trajectories
//! into growth/fluctuation regimes.

pub mod asymptotics;
pub mod error;
pub mod expr;
pub mod forcing;
pub mod kernel;
pub mod noise;
pub mod nonlinear;
pub mod quad;
pub mod solver;
pub mod rootfind;
pub mod scalar;

pub use error::{Error, Result};
pub use expr::Expr;
pub use scalar::Scalar;

pub type Kernel64 = kernel::MeasureKernel<f64>;
pub type Nonlinearity64 = nonlinear::Nonlinearity<f64>;
pub type Forcing64 = forcing::ForcingTerm<f64>;
pub type Envelope64 = forcing::Envelope<f64>;
pub type Noise64 = noise::NoiseModel<f64>;
pub type Sigma64 = noise::SigmaEnvelope<f64>;
pub type Trajectory64 = solver::Trajectory<f64>;
pub type Report64 = asymptotics::RegimeReport<f64>;
