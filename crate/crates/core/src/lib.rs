//! dq-frame simulation of a grid-forming converter with a quadratic-program
//! safety filter for current limiting, three conventional current-limiting
//! baselines, and a sampling-based verifier for the polynomial safety
//! certificates.

pub mod clc;
pub mod frames;
pub mod gfm;
pub mod plant;
pub mod runner;
pub mod sfilter;
pub mod verifier;

pub use frames::{DqVector, Impedance};
pub use runner::{load_config, run_scenario, Metrics, ScenarioConfig, SimTrace};
pub use sfilter::{CertificateSet, FilterParams, SafetyFilter};
