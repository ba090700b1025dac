//! Scenario orchestration: manifests, sweeps, and the artifact runner.

pub mod bundled;
pub mod manifest;
pub mod runner;
pub mod sweeps;

pub use manifest::{Drives, RunKind, RunManifest, Scenario};
pub use runner::{run, RunReport, ScenarioReport, Status};
pub use sweeps::CovSettings;
