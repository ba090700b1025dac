use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::fluctuations::DriftVariant;
use crate::model::Finding;
use crate::{Error, Result, SystemParams};

use super::sweeps::CovSettings;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Drive values, either listed or as an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Drives {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Drives {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Self::Range { start, stop, step }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Vec::new();
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
        }
    }
}

impl From<Vec<f64>> for Drives {
    fn from(v: Vec<f64>) -> Self {
        Self::List(v)
    }
}

fn default_classical_t_end() -> f64 {
    5000.0
}
fn default_classical_dt() -> f64 {
    0.1
}
fn default_window() -> f64 {
    500.0
}
fn default_grid_points() -> usize {
    201
}
fn default_extent() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunKind {
    /// Mean-field trajectories, one CSV per drive.
    Classical {
        drives: Drives,
        #[serde(default = "default_classical_t_end")]
        t_end: f64,
        #[serde(default = "default_classical_dt")]
        dt_out: f64,
    },
    /// Covariance and metric series per drive.
    Covariance {
        drives: Drives,
        #[serde(default)]
        settings: CovSettings,
    },
    /// Rightmost drift eigenvalue at the fixed point for each damping pair.
    StabilityScan {
        drives: Drives,
        /// `[γₘ₁, γₘ₂]` pairs; the scenario's own values when empty.
        #[serde(default)]
        dampings: Vec<[f64; 2]>,
        #[serde(default)]
        variant: DriftVariant,
    },
    /// Regime and amplitude per drive, with thresholds.
    AmplitudeScan {
        drives: Drives,
        #[serde(default = "default_classical_t_end")]
        t_end: f64,
        #[serde(default = "default_window")]
        window: f64,
        #[serde(default = "default_classical_dt")]
        dt_out: f64,
    },
    PowerSweep {
        drives: Drives,
        #[serde(default)]
        settings: CovSettings,
    },
    MismatchSweep {
        /// Fractions of `ωₘ₁`.
        mismatches: Vec<f64>,
        drives: Drives,
        #[serde(default)]
        settings: CovSettings,
    },
    ThermalSweep {
        n_thermal: Vec<f64>,
        drive: f64,
        #[serde(default)]
        settings: CovSettings,
    },
    WignerPanel {
        drives: Drives,
        times: Vec<f64>,
        #[serde(default = "default_grid_points")]
        points: usize,
        /// Grid half-width in standard deviations of the widest quadrature.
        #[serde(default = "default_extent")]
        extent_sigma: f64,
        #[serde(default)]
        settings: CovSettings,
    },
}

impl RunKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Classical { .. } => "classical",
            Self::Covariance { .. } => "covariance",
            Self::StabilityScan { .. } => "stability_scan",
            Self::AmplitudeScan { .. } => "amplitude_scan",
            Self::PowerSweep { .. } => "power_sweep",
            Self::MismatchSweep { .. } => "mismatch_sweep",
            Self::ThermalSweep { .. } => "thermal_sweep",
            Self::WignerPanel { .. } => "wigner_panel",
        }
    }

    fn check(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: &str| out.push(Finding { field: field.into(), message: message.into() });
        let drives = match self {
            Self::Classical { drives, .. }
            | Self::Covariance { drives, .. }
            | Self::StabilityScan { drives, .. }
            | Self::AmplitudeScan { drives, .. }
            | Self::PowerSweep { drives, .. }
            | Self::MismatchSweep { drives, .. }
            | Self::WignerPanel { drives, .. } => drives.values(),
            Self::ThermalSweep { drive, .. } => vec![*drive],
        };
        if drives.is_empty() {
            bad("drives", "no drive values");
        }
        if drives.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            bad("drives", "drives must be finite and non-negative");
        }
        match self {
            Self::Classical { t_end, dt_out, .. } | Self::AmplitudeScan { t_end, dt_out, .. } => {
                if !(*t_end > 0.0 && *dt_out > 0.0 && dt_out <= t_end) {
                    bad("t_end", "need 0 < dt_out <= t_end");
                }
            }
            _ => {}
        }
        if let Self::AmplitudeScan { drives: d, t_end, window, .. } = self {
            if d.values().windows(2).any(|w| w[1] <= w[0]) {
                bad("drives", "amplitude scan drives must be strictly ascending");
            }
            if !(*window > 0.0 && 3.0 * window <= *t_end) {
                bad("window", "need 0 < 3 * window <= t_end");
            }
        }
        if let Self::MismatchSweep { mismatches, .. } = self {
            if mismatches.is_empty() {
                bad("mismatches", "no mismatch values");
            }
        }
        if let Self::ThermalSweep { n_thermal, .. } = self {
            if n_thermal.is_empty() || n_thermal.iter().any(|n| !(*n >= 0.0)) {
                bad("n_thermal", "need at least one non-negative occupancy");
            }
        }
        if let Self::WignerPanel { times, points, settings, .. } = self {
            if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && *t <= settings.t_end)) {
                bad("times", "snapshot times must lie in [0, settings.t_end]");
            }
            if *points < 2 {
                bad("points", "need at least two grid points");
            }
        }
        match self {
            Self::Covariance { settings, .. }
            | Self::PowerSweep { settings, .. }
            | Self::MismatchSweep { settings, .. }
            | Self::ThermalSweep { settings, .. }
            | Self::WignerPanel { settings, .. } => out.extend(settings.check()),
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: SystemParams,
    pub runs: Vec<RunKind>,
}

impl Scenario {
    /// Parameter and option problems, each prefixed with the offending field.
    pub fn problems(&self) -> Vec<Finding> {
        let mut out: Vec<Finding> = self
            .params
            .validate()
            .errors
            .into_iter()
            .map(|f| Finding { field: format!("params.{}", f.field), message: f.message })
            .collect();
        if self.runs.is_empty() {
            out.push(Finding { field: "runs".into(), message: "no runs".into() });
        }
        for (i, run) in self.runs.iter().enumerate() {
            for f in run.check() {
                out.push(Finding { field: format!("runs[{i}].{}", f.field), message: f.message });
            }
        }
        out
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tool_version: Option<String>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

impl RunManifest {
    pub fn new(scenarios: Vec<Scenario>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            output_dir: output_dir.into(),
            seed: 0,
            tool_version: Some(env!("CARGO_PKG_VERSION").to_string()),
            scenarios,
        }
    }

    /// Parses TOML and checks the schema version and scenario-name
    /// uniqueness. Per-scenario parameter problems are left to [`Self::problems`].
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for s in &m.scenarios {
            if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
                return Err(Error::Config(format!("invalid scenario name {:?}", s.name)));
            }
            if !seen.insert(&s.name) {
                return Err(Error::Config(format!("duplicate scenario name {:?}", s.name)));
            }
        }
        Ok(m)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// `(scenario, problems)` for every scenario with problems.
    pub fn problems(&self) -> Vec<(String, Vec<Finding>)> {
        self.scenarios
            .iter()
            .map(|s| (s.name.clone(), s.problems()))
            .filter(|(_, p)| !p.is_empty())
            .collect()
    }

    /// Applies `key=value` parameter overrides to every scenario.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for s in &mut self.scenarios {
            for o in overrides {
                s.params.apply_override(o)?;
            }
        }
        Ok(())
    }
}
