//! Coupling of regime-switching diffusions by correlation control.

pub mod analytic;
pub mod battery;
pub mod cli;
pub mod config;
pub mod counterexamples;
pub mod coupling;
pub mod ctmc;
pub mod hjb;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;
