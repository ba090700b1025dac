//! Scalar and field diagnostics of the mechanical covariance: phase
//! synchronization, logarithmic negativity, Wigner surfaces, fidelity and the
//! squeezing/rotation decomposition.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classical::{self, Osc};
use crate::fluctuations::{CovarianceSample, CovarianceTrajectory};
use crate::smallmat::{self, Mat2, Mat4};
use crate::{Error, Result};

/// Mechanical covariance `V′` in the order `(q₁, p₁, q₂, p₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalSubmatrix(Mat4);

impl MechanicalSubmatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        let asym = smallmat::asymmetry(&m);
        if asym > 1e-9 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self(smallmat::symmetrize(&m)))
    }

    pub fn vacuum() -> Self {
        Self(Mat4::identity() * 0.5)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn block(&self, j: Osc) -> Mat2 {
        let o = 2 * j.index();
        self.0.fixed_view::<2, 2>(o, o).into_owned()
    }

    pub fn cross(&self) -> Mat2 {
        self.0.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// Whether each single-mode block satisfies `det Vⱼ ≥ ¼` within `tol`.
    pub fn blocks_physical(&self, tol: f64) -> bool {
        Osc::BOTH.iter().all(|&j| smallmat::det(&self.block(j)).sqrt() >= 0.5 - tol)
    }
}

/// `(var(δp′₁) + var(δp′₂) − 2 cov(δp′₁, δp′₂)) / 2` and the same for `δq′`.
fn relative_variances(vp: &MechanicalSubmatrix, phi1: f64, phi2: f64) -> (f64, f64) {
    // δp′ = cosφ δp − sinφ δq, δq′ = sinφ δp + cosφ δq
    let p_dir = |phi: f64| nalgebra::Vector2::new(-phi.sin(), phi.cos());
    let q_dir = |phi: f64| nalgebra::Vector2::new(phi.cos(), phi.sin());
    let minus = |d1: nalgebra::Vector2<f64>, d2: nalgebra::Vector2<f64>| {
        let v = nalgebra::Vector4::new(d1[0], d1[1], -d2[0], -d2[1]);
        0.5 * (v.transpose() * vp.matrix() * v)[(0, 0)]
    };
    (minus(p_dir(phi1), p_dir(phi2)), minus(q_dir(phi1), q_dir(phi2)))
}

/// `Sₚ = ½ ⟨δp′₋²⟩⁻¹` with each oscillator's sector rotated by its mean phase.
pub fn phase_sync(vp: &MechanicalSubmatrix, phi1: f64, phi2: f64) -> Result<f64> {
    let (p_minus, _) = relative_variances(vp, phi1, phi2);
    if !(p_minus >= 1e-15) {
        return Err(Error::Nonphysical(format!("relative momentum variance {p_minus:e}")));
    }
    Ok(0.5 / p_minus)
}

/// `⟨δq′₋²⟩ / ⟨δp′₋²⟩`; equals 1 under ideal quantum phase synchronization.
pub fn quadrature_ratio(vp: &MechanicalSubmatrix, phi1: f64, phi2: f64) -> f64 {
    let (p, q) = relative_variances(vp, phi1, phi2);
    q / p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Negativity {
    /// Natural-log negativity `max(0, −ln 2ν⁻)`.
    pub en: f64,
    pub nu_minus: f64,
}

pub fn log_negativity(vp: &MechanicalSubmatrix) -> Result<Negativity> {
    let a = smallmat::det(&vp.block(Osc::One));
    let b = smallmat::det(&vp.block(Osc::Two));
    let c = smallmat::det(&vp.cross());
    let sigma = a + b - 2.0 * c;
    let d = smallmat::det(vp.matrix());
    let mut disc = sigma * sigma - 4.0 * d;
    if !disc.is_finite() || disc < -1e-12 {
        return Err(Error::Nonphysical(format!("complex symplectic eigenvalue (Σ² − 4 det V′ = {disc:e})")));
    }
    disc = disc.max(0.0);
    let inner = 0.5 * (sigma - disc.sqrt());
    if inner < 0.0 {
        return Err(Error::Nonphysical(format!("negative ν⁻² = {inner:e}")));
    }
    let nu_minus = inner.sqrt();
    let en = if nu_minus > 0.0 { (-(2.0 * nu_minus).ln()).max(0.0) } else { f64::INFINITY };
    Ok(Negativity { en, nu_minus })
}

/// Axis range of a Wigner grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    /// `±k σ` around the origin.
    pub fn symmetric(sigma_extent: f64, points: usize) -> Self {
        Self { min: -sigma_extent, max: sigma_extent, points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q: Axis,
    pub p: Axis,
}

impl GridSpec {
    /// Square grid covering `±k` standard deviations of the widest quadrature.
    pub fn covering(vm: &Mat2, k: f64, points: usize) -> Self {
        let s = vm[(0, 0)].max(vm[(1, 1)]).sqrt() * k;
        Self { q: Axis::symmetric(s, points), p: Axis::symmetric(s, points) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    /// Row-major: `values[i_p][i_q]`.
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    /// Riemann sum over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.spec.q.step() * self.spec.p.step()
    }

    /// Values as a CSV matrix, one row per `p` value, ascending.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Sidecar header describing the axes of [`Self::write_csv`].
    pub fn header_json(&self) -> serde_json::Value {
        let axis = |a: &Axis| serde_json::json!({"min": a.min, "max": a.max, "step": a.step(), "points": a.points});
        serde_json::json!({"rows": "p", "columns": "q", "q": axis(&self.spec.q), "p": axis(&self.spec.p)})
    }
}

/// Zero-mean Gaussian Wigner function `exp(−uᵀV⁻¹u/2) / (2π√det V)`.
pub fn wigner(vm: &Mat2, grid: &GridSpec) -> Result<WignerGrid> {
    let d = smallmat::det(vm);
    if !(d > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let inv = smallmat::inverse(vm).ok_or(Error::NotPositiveDefinite)?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * d.sqrt());
    let values = (0..grid.p.points)
        .map(|ip| {
            let p = grid.p.value(ip);
            (0..grid.q.points)
                .map(|iq| {
                    let q = grid.q.value(iq);
                    let quad = inv[(0, 0)] * q * q + 2.0 * inv[(0, 1)] * q * p + inv[(1, 1)] * p * p;
                    norm * (-0.5 * quad).exp()
                })
                .collect()
        })
        .collect();
    Ok(WignerGrid { spec: grid.clone(), values })
}

fn require_positive_definite(m: &Mat2) -> Result<()> {
    if m[(0, 0)] > 0.0 && smallmat::det(m) > 0.0 {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Single-mode Gaussian fidelity between `(u₁, V₁)` and `(u₂, V₂)`.
pub fn fidelity(v1: &Mat2, v2: &Mat2, u1: [f64; 2], u2: [f64; 2]) -> Result<f64> {
    require_positive_definite(v1)?;
    require_positive_definite(v2)?;
    let sum = v1 + v2;
    let inv = smallmat::inverse(&sum).ok_or(Error::NotPositiveDefinite)?;
    let du = nalgebra::Vector2::new(u1[0] - u2[0], u1[1] - u2[1]);
    let expo = (du.transpose() * inv * du)[(0, 0)];
    let big = smallmat::det(&sum);
    let small = 4.0 * (smallmat::det(v1) - 0.25) * (smallmat::det(v2) - 0.25);
    let denom = (big + small).sqrt() - small.max(0.0).sqrt();
    Ok((-0.5 * expo).exp() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeRotation {
    pub r: f64,
    /// Angle of the anti-squeezed axis in `[0, π)`.
    pub phi: f64,
    pub n_eff: f64,
}

impl SqueezeRotation {
    /// `(2n+1) R(φ) ½diag(e^{2r}, e^{−2r}) Rᵀ(φ)`, so `φ` is the angle of the
    /// anti-squeezed axis.
    pub fn reconstruct(&self) -> Mat2 {
        let s = (2.0 * self.n_eff + 1.0) * 0.5;
        let d = Mat2::new((2.0 * self.r).exp() * s, 0.0, 0.0, (-2.0 * self.r).exp() * s);
        let r = smallmat::rotation(self.phi);
        r * d * r.transpose()
    }
}

pub fn squeeze_rotation(vm: &Mat2) -> Result<SqueezeRotation> {
    let ([l1, l2], theta) = smallmat::sym_eig_2x2(vm)?;
    if !(l1 > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let n_eff = ((4.0 * l1 * l2).sqrt() - 1.0) / 2.0;
    let r = 0.25 * (l2 / l1).ln();
    // θ is the angle of the smaller eigenvector; the larger one is ⟂ to it
    let phi = if r == 0.0 { 0.0 } else { smallmat::wrap_pi(theta + std::f64::consts::FRAC_PI_2) };
    Ok(SqueezeRotation { r, phi, n_eff })
}

/// Trapezoidal mean of `ys` over `[t0, t1]`, interpolating at the edges.
pub fn time_average(ts: &[f64], ys: &[f64], t0: f64, t1: f64) -> Result<f64> {
    if ts.len() != ys.len() || ts.len() < 2 || !(t0 < t1) || t0 < ts[0] - 1e-9 || t1 > ts[ts.len() - 1] + 1e-9 {
        return Err(Error::InvalidArgument(format!("empty averaging window [{t0}, {t1}]")));
    }
    let interp = |t: f64| {
        let k = ts.partition_point(|&s| s < t).clamp(1, ts.len() - 1);
        let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
        ys[k - 1] + w * (ys[k] - ys[k - 1])
    };
    let mut pts = vec![(t0, interp(t0))];
    pts.extend(ts.iter().zip(ys).filter(|(t, _)| **t > t0 && **t < t1).map(|(t, y)| (*t, *y)));
    pts.push((t1, interp(t1)));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1)).sum();
    Ok(area / (t1 - t0))
}

/// Mean over the trailing half of the series.
pub fn trailing_half_average(ts: &[f64], ys: &[f64]) -> Result<f64> {
    let (Some(&first), Some(&last)) = (ts.first(), ts.last()) else {
        return Err(Error::InvalidArgument("empty series".into()));
    };
    time_average(ts, ys, 0.5 * (first + last), last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: f64,
    pub s_p: f64,
    pub e_n: f64,
    pub nu_minus: f64,
    pub r1: f64,
    pub phi1: f64,
    pub r2: f64,
    pub phi2: f64,
    pub f: f64,
    /// `⟨δq′₋²⟩ / ⟨δp′₋²⟩`.
    pub qp_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

/// Shortest round-trip decimal; non-finite values become an empty field.
pub fn csv_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

pub const METRIC_COLUMNS: [&str; 10] = ["t", "S_p", "E_n", "nu_minus", "r1", "phi1", "r2", "phi2", "f", "qp_ratio"];

/// All metrics at one sample. Failures of individual metrics are reported as
/// `NaN` in that column.
pub fn metric_row(s: &CovarianceSample) -> MetricRow {
    let vp = MechanicalSubmatrix(s.cov.mechanical());
    let phi1 = classical::mean_phase(&s.state, Osc::One);
    let phi2 = classical::mean_phase(&s.state, Osc::Two);
    let neg = log_negativity(&vp).ok();
    let sq1 = squeeze_rotation(&vp.block(Osc::One)).ok();
    let sq2 = squeeze_rotation(&vp.block(Osc::Two)).ok();
    MetricRow {
        t: s.t,
        s_p: phase_sync(&vp, phi1, phi2).unwrap_or(f64::NAN),
        e_n: neg.map_or(f64::NAN, |n| n.en),
        nu_minus: neg.map_or(f64::NAN, |n| n.nu_minus),
        r1: sq1.map_or(f64::NAN, |q| q.r),
        phi1: sq1.map_or(f64::NAN, |q| q.phi),
        r2: sq2.map_or(f64::NAN, |q| q.r),
        phi2: sq2.map_or(f64::NAN, |q| q.phi),
        f: fidelity(&vp.block(Osc::One), &vp.block(Osc::Two), [0.0; 2], [0.0; 2]).unwrap_or(f64::NAN),
        qp_ratio: quadrature_ratio(&vp, phi1, phi2),
    }
}

impl MetricSeries {
    pub fn from_trajectory(traj: &CovarianceTrajectory) -> Self {
        use rayon::prelude::*;
        Self { rows: traj.samples.par_iter().map(metric_row).collect() }
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&MetricRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Trailing-half time average of one column.
    pub fn trailing_average(&self, f: impl Fn(&MetricRow) -> f64) -> Result<f64> {
        trailing_half_average(&self.times(), &self.column(f))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", METRIC_COLUMNS.join(","))?;
        for r in &self.rows {
            let vals = [r.t, r.s_p, r.e_n, r.nu_minus, r.r1, r.phi1, r.r2, r.phi2, r.f, r.qp_ratio];
            let line: Vec<String> = vals.iter().map(|v| csv_field(*v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn metadata() -> serde_json::Value {
        serde_json::json!({"log_base": "e", "columns": METRIC_COLUMNS})
    }
}
