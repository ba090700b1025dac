//! Built-in scenarios reproducing the reference figure set.

use crate::fluctuations::DriftVariant;
use crate::{SystemParams, REFERENCE_DEFAULTS};

use super::manifest::{Drives, RunKind, RunManifest, Scenario};
use super::sweeps::CovSettings;

pub const NAMES: [&str; 8] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

fn scenario(name: &str, description: &str, runs: Vec<RunKind>) -> Scenario {
    Scenario { name: name.into(), description: description.into(), params: REFERENCE_DEFAULTS, runs }
}

fn cov(drives: Vec<f64>) -> RunKind {
    RunKind::Covariance { drives: drives.into(), settings: CovSettings::default() }
}

/// The named built-in scenario, or `None`.
pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    let s = match name {
        "fig2" => scenario(
            "fig2",
            "classical trajectories below and above threshold, amplitude scan",
            vec![
                RunKind::Classical { drives: vec![100.0, 500.0].into(), t_end: 5000.0, dt_out: 0.1 },
                RunKind::AmplitudeScan { drives: Drives::range(300.0, 700.0, 10.0), t_end: 5000.0, window: 500.0, dt_out: 0.1 },
            ],
        ),
        "fig3" => scenario(
            "fig3",
            "fixed-point stability against drive for three damping pairs",
            vec![RunKind::StabilityScan {
                drives: Drives::range(0.0, 800.0, 10.0),
                dampings: vec![[1e-2, 1e-4], [1e-3, 1e-4], [1e-4, 1e-4]],
                variant: DriftVariant::default(),
            }],
        ),
        "fig4" => scenario("fig4", "synchronization and entanglement time series", vec![cov(vec![100.0, 500.0, 600.0])]),
        "fig5" => scenario(
            "fig5",
            "mechanical Wigner functions across drive",
            vec![RunKind::WignerPanel {
                drives: Drives::range(100.0, 800.0, 100.0),
                times: vec![5000.0],
                points: 201,
                extent_sigma: 6.0,
                settings: CovSettings::default(),
            }],
        ),
        "fig6" => scenario(
            "fig6",
            "Wigner functions at E = 600 over time",
            vec![RunKind::WignerPanel {
                drives: vec![600.0].into(),
                times: vec![3000.0, 4000.0, 5000.0],
                points: 201,
                extent_sigma: 6.0,
                settings: CovSettings::default(),
            }],
        ),
        "fig7" => scenario("fig7", "metric series near and above the exceptional point", vec![cov(vec![400.0, 500.0, 600.0])]),
        "fig8" => scenario(
            "fig8",
            "frequency-mismatch sweep",
            vec![RunKind::MismatchSweep {
                mismatches: vec![0.002, 0.004, 0.006, 0.008],
                drives: Drives::range(500.0, 800.0, 10.0),
                settings: CovSettings::default(),
            }],
        ),
        "fig9" => scenario(
            "fig9",
            "thermal occupancy sweep at E = 600",
            vec![RunKind::ThermalSweep { n_thermal: vec![0.0, 10.0, 20.0], drive: 600.0, settings: CovSettings::default() }],
        ),
        _ => return None,
    };
    Some(s)
}

/// Every built-in scenario with its description.
pub fn list() -> Vec<(&'static str, String)> {
    NAMES.iter().map(|n| (*n, scenario_by_name(n).unwrap().description)).collect()
}

/// A manifest containing the named built-in scenario with overrides applied.
pub fn manifest(name: &str, output_dir: impl Into<std::path::PathBuf>, params: Option<SystemParams>) -> Option<RunManifest> {
    let mut s = scenario_by_name(name)?;
    if let Some(p) = params {
        s.params = p;
    }
    Some(RunManifest::new(vec![s], output_dir))
}
