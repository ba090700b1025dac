//! Physical parameters and their validation.
//!
//! Every quantity is expressed in units of the reference mechanical
//! frequency `ω_m` (so `omega_m1 = 1` by convention) and time is measured in
//! `τ = 1/ω_m`. `ħ = 1`; the thermal bath enters only through the mean phonon
//! occupancy `n_thermal`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Physical constants of the two coupled optomechanical cavities.
///
/// Cavity 1 is red detuned (loss), cavity 2 blue detuned (gain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub omega_m1: f64,
    pub omega_m2: f64,
    /// Laser detuning `Δ₁ = ω_o1 − ω_L`.
    pub delta1: f64,
    pub delta2: f64,
    /// Cavity amplitude decay rate.
    pub kappa: f64,
    pub gamma_m1: f64,
    pub gamma_m2: f64,
    /// Single-photon optomechanical coupling, shared by both cavities.
    pub g0: f64,
    /// Phonon-tunnelling coupling between the mechanical oscillators.
    pub j_coupling: f64,
    /// Laser drive amplitude, shared by both cavities.
    pub drive: f64,
    /// Mean thermal phonon occupancy of both mechanical baths.
    pub n_thermal: f64,
}

/// Reference parameter set of the resolved-sideband gain-loss configuration.
///
/// The drive is left at zero; scenarios set it explicitly.
pub const REFERENCE_DEFAULTS: SystemParams = SystemParams {
    omega_m1: 1.0,
    omega_m2: 1.008,
    delta1: -1.0,
    delta2: 1.0,
    kappa: 0.1,
    gamma_m1: 1e-2,
    gamma_m2: 1e-4,
    g0: 1e-4,
    j_coupling: 0.03,
    drive: 0.0,
    n_thermal: 0.0,
};

impl Default for SystemParams {
    fn default() -> Self {
        REFERENCE_DEFAULTS
    }
}

/// Names accepted by [`SystemParams::set`], in declaration order.
pub const PARAM_KEYS: [&str; 11] = [
    "omega_m1",
    "omega_m2",
    "delta1",
    "delta2",
    "kappa",
    "gamma_m1",
    "gamma_m2",
    "g0",
    "j_coupling",
    "drive",
    "n_thermal",
];

impl SystemParams {
    pub fn with_drive(mut self, drive: f64) -> Self {
        self.drive = drive;
        self
    }

    pub fn with_n_thermal(mut self, n_thermal: f64) -> Self {
        self.n_thermal = n_thermal;
        self
    }

    /// Sets `omega_m2 = omega_m1 · (1 + fraction)`.
    pub fn with_mismatch(mut self, fraction: f64) -> Self {
        self.omega_m2 = self.omega_m1 * (1.0 + fraction);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "omega_m1" => self.omega_m1,
            "omega_m2" => self.omega_m2,
            "delta1" => self.delta1,
            "delta2" => self.delta2,
            "kappa" => self.kappa,
            "gamma_m1" => self.gamma_m1,
            "gamma_m2" => self.gamma_m2,
            "g0" => self.g0,
            "j_coupling" => self.j_coupling,
            "drive" => self.drive,
            "n_thermal" => self.n_thermal,
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), Error> {
        let slot = match key {
            "omega_m1" => &mut self.omega_m1,
            "omega_m2" => &mut self.omega_m2,
            "delta1" => &mut self.delta1,
            "delta2" => &mut self.delta2,
            "kappa" => &mut self.kappa,
            "gamma_m1" => &mut self.gamma_m1,
            "gamma_m2" => &mut self.gamma_m2,
            "g0" => &mut self.g0,
            "j_coupling" => &mut self.j_coupling,
            "drive" => &mut self.drive,
            "n_thermal" => &mut self.n_thermal,
            _ => return Err(Error::UnknownParam(key.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Applies a `key=value` override, as given on the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), Error> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("override `{spec}`: value is not a number")))?;
        self.set(key, value)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for key in PARAM_KEYS {
            let v = self.get(key).unwrap_or(f64::NAN);
            if !v.is_finite() {
                report.error(key, format!("{key} must be finite"));
            }
        }
        let positive = [
            ("kappa", self.kappa),
            ("gamma_m1", self.gamma_m1),
            ("gamma_m2", self.gamma_m2),
            ("omega_m1", self.omega_m1),
            ("omega_m2", self.omega_m2),
        ];
        for (key, v) in positive {
            if v <= 0.0 {
                report.error(key, format!("{key} must be positive"));
            }
        }
        let non_negative = [
            ("g0", self.g0),
            ("drive", self.drive),
            ("n_thermal", self.n_thermal),
        ];
        for (key, v) in non_negative {
            if v < 0.0 {
                report.error(key, format!("{key} must be non-negative"));
            }
        }
        if self.j_coupling.abs() > 0.1 * self.omega_m1 {
            report.warn("j_coupling", "J not small relative to omega_m1".to_string());
        }
        if self.omega_m1 > 0.0 && (self.omega_m1 - self.omega_m2).abs() > 0.05 * self.omega_m1 {
            report.warn(
                "omega_m2",
                "mechanical frequency mismatch exceeds 5% of omega_m1".to_string(),
            );
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

/// Hard errors and soft warnings found by [`SystemParams::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    fn error(&mut self, field: &str, message: String) {
        self.errors.push(Finding { field: field.to_string(), message });
    }

    fn warn(&mut self, field: &str, message: String) {
        self.warnings.push(Finding { field: field.to_string(), message });
    }

    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {}: {}", e.field, e.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {}: {}", w.field, w.message)?;
        }
        Ok(())
    }
}

/// Versioned parameter file: `schema_version` plus a `[params]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub schema_version: u32,
    #[serde(default)]
    pub params: SystemParams,
}

pub const SCHEMA_VERSION: u32 = 1;

impl ParamsFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let file: ParamsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters always serialize")
    }
}
