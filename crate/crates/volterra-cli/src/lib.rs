//! Orchestration layer behind the `volterra` binary: flat-file run
//! configuration, single-run execution with diagnostics, seed-streamed
//! ensembles, and the canned reference experiments.

pub mod config;
pub mod ensemble;
pub mod run;
pub mod scenario;
