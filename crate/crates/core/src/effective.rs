//! Effective two-mode description of the mechanical oscillators after the
//! cavities are eliminated.
//!
//! Oscillator 1 (red-detuned cavity) is damped at `Γₘ₁ = γₘ₁ + γₒ₁`;
//! oscillator 2 (blue-detuned cavity) is amplified at the net gain
//! `Γₘ₂ = γₒ₂ − γₘ₂`, with `γₒⱼ = 4Gⱼ²/κ` and `Gⱼ = g₀|⟨aⱼ⟩|`. The coupled
//! eigenfrequencies are
//!
//! ```text
//! ω± = (Ωₘ₁ + Ωₘ₂)/2 − i(Γₘ₁ − Γₘ₂)/4 ± √(J² − ((Γₘ₁ + Γₘ₂)/4)²)
//! ```
//!
//! and the exceptional point sits where the discriminant vanishes.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::classical::{self, ClassicalState, ClassicalTrajectory};
use crate::{Result, SystemParams};

pub const EP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRates {
    /// `Gⱼ = g₀|⟨aⱼ⟩|`.
    pub g1: f64,
    pub g2: f64,
    /// `γₒⱼ = 4Gⱼ²/κ`.
    pub gamma_o1: f64,
    pub gamma_o2: f64,
    /// Net loss of oscillator 1.
    pub gamma_eff1: f64,
    /// Net gain of oscillator 2 (negative when intrinsic damping wins).
    pub gamma_eff2: f64,
    /// Effective frequencies; the optical spring shift is neglected.
    pub omega_eff1: f64,
    pub omega_eff2: f64,
}

pub fn effective_rates(params: &SystemParams, a1: Complex<f64>, a2: Complex<f64>) -> EffectiveRates {
    let g1 = params.g0 * a1.norm();
    let g2 = params.g0 * a2.norm();
    let gamma_o1 = 4.0 * g1 * g1 / params.kappa;
    let gamma_o2 = 4.0 * g2 * g2 / params.kappa;
    EffectiveRates {
        g1,
        g2,
        gamma_o1,
        gamma_o2,
        gamma_eff1: params.gamma_m1 + gamma_o1,
        gamma_eff2: gamma_o2 - params.gamma_m2,
        omega_eff1: params.omega_m1,
        omega_eff2: params.omega_m2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSpectrum {
    pub omega_plus: Complex<f64>,
    pub omega_minus: Complex<f64>,
    /// `J² − ((Γₘ₁ + Γₘ₂)/4)²`: positive in the strong-coupling regime.
    pub discriminant: f64,
    pub at_ep: bool,
}

pub fn spectrum(rates: &EffectiveRates, j_coupling: f64) -> EffectiveSpectrum {
    let mean = Complex::new(
        0.5 * (rates.omega_eff1 + rates.omega_eff2),
        -0.25 * (rates.gamma_eff1 - rates.gamma_eff2),
    );
    let c = 0.25 * (rates.gamma_eff1 + rates.gamma_eff2);
    let discriminant = j_coupling * j_coupling - c * c;
    let root = Complex::new(discriminant, 0.0).sqrt();
    EffectiveSpectrum {
        omega_plus: mean + root,
        omega_minus: mean - root,
        discriminant,
        at_ep: discriminant.abs() < EP_TOLERANCE,
    }
}

/// Which intracavity field value parameterizes the effective rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    /// Algebraic fixed point of the mean-field equations.
    FixedPoint,
    /// Time average of `|⟨aⱼ⟩|` over the trailing window of a trajectory.
    #[default]
    TrailingAverage,
}

/// Effective rates from the algebraic fixed point.
pub fn rates_at_fixed_point(params: &SystemParams) -> Result<EffectiveRates> {
    let fp: ClassicalState = classical::fixed_point(params)?;
    Ok(effective_rates(params, fp.field(classical::Osc::One), fp.field(classical::Osc::Two)))
}

/// Effective rates from the trailing-window mean of `|⟨aⱼ⟩|`.
pub fn rates_from_trajectory(params: &SystemParams, traj: &ClassicalTrajectory, window: f64) -> EffectiveRates {
    let [m1, m2] = classical::trailing_field_magnitudes(traj, window);
    effective_rates(params, Complex::new(m1, 0.0), Complex::new(m2, 0.0))
}

/// Drive at which the discriminant changes sign between consecutive grid
/// points, linearly interpolated; `None` if it never does.
pub fn discriminant_crossing(drives: &[f64], discriminants: &[f64]) -> Option<f64> {
    drives.windows(2).zip(discriminants.windows(2)).find_map(|(e, d)| {
        if d[0] == 0.0 {
            Some(e[0])
        } else if d[0].signum() != d[1].signum() {
            Some(e[0] + (e[1] - e[0]) * d[0] / (d[0] - d[1]))
        } else {
            None
        }
    })
}
