//! Linearized quadrature fluctuations: drift matrix, noise diffusion,
//! covariance (Lyapunov) propagation and linear stability.
//!
//! Quadrature order is `(δq₁, δp₁, δx₁, δy₁, δq₂, δp₂, δx₂, δy₂)` with optical
//! quadratures `x = (δa† + δa)/√2`, `y = i(δa† − δa)/√2`. The covariance obeys
//! `∂ₜV = A V + V Aᵀ + N` with `A` evaluated on the co-integrated mean-field
//! trajectory.

use std::io::{Read, Write};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{self, ClassicalState};
use crate::ode::{self, OdeOptions, OdeStatus, Sampling};
use crate::smallmat::{self, Mat4, Mat8};
use crate::{Error, Result, SystemParams};

/// Dead-band below which the rightmost eigenvalue counts as stable.
pub const STABILITY_DEAD_BAND: f64 = 1e-8;

/// Sign convention of the `δqⱼ → δxⱼ` drift entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftVariant {
    /// `A[xⱼ, qⱼ] = +√2 g₀ Im⟨aⱼ⟩`, the reference drift-matrix table.
    #[default]
    Tabulated,
    /// `A[xⱼ, qⱼ] = −√2 g₀ Im⟨aⱼ⟩`, obtained by linearizing the Langevin
    /// equations directly; the coherent part of `A` is then Hamiltonian.
    Hamiltonian,
}

/// Quadrature labels and their mode index, in covariance order.
pub const QUADRATURES: [(char, u8); 8] =
    [('q', 1), ('p', 1), ('x', 1), ('y', 1), ('q', 2), ('p', 2), ('x', 2), ('y', 2)];

/// Indices of the mechanical quadratures `(q₁, p₁, q₂, p₂)`.
pub const MECHANICAL: [usize; 4] = [0, 1, 4, 5];

pub fn drift_matrix(state: &ClassicalState, params: &SystemParams, variant: DriftVariant) -> Mat8 {
    let mut a = Mat8::zeros();
    let s2g = std::f64::consts::SQRT_2 * params.g0;
    let x_sign = match variant {
        DriftVariant::Tabulated => 1.0,
        DriftVariant::Hamiltonian => -1.0,
    };
    let blocks = [
        (0usize, state.re_a1, state.im_a1, state.q1, params.omega_m1, params.gamma_m1, params.delta1, 4usize),
        (4usize, state.re_a2, state.im_a2, state.q2, params.omega_m2, params.gamma_m2, params.delta2, 0usize),
    ];
    for (o, re_a, im_a, q, omega, gamma, delta, other) in blocks {
        let det = delta + params.g0 * q;
        a[(o, o + 1)] = omega;
        a[(o + 1, o)] = -omega;
        a[(o + 1, o + 1)] = -gamma;
        a[(o + 1, o + 2)] = s2g * re_a;
        a[(o + 1, o + 3)] = s2g * im_a;
        a[(o + 1, other)] = params.j_coupling;
        a[(o + 2, o)] = x_sign * s2g * im_a;
        a[(o + 2, o + 2)] = -params.kappa;
        a[(o + 2, o + 3)] = -det;
        a[(o + 3, o)] = s2g * re_a;
        a[(o + 3, o + 2)] = det;
        a[(o + 3, o + 3)] = -params.kappa;
    }
    a
}

/// `N = diag[0, γₘ₁(2n̄+1), κ, κ, 0, γₘ₂(2n̄+1), κ, κ]`.
pub fn noise_matrix(params: &SystemParams) -> Mat8 {
    let th = 2.0 * params.n_thermal + 1.0;
    let d = [0.0, params.gamma_m1 * th, params.kappa, params.kappa, 0.0, params.gamma_m2 * th, params.kappa, params.kappa];
    Mat8::from_diagonal(&nalgebra::SVector::<f64, 8>::from_row_slice(&d))
}

/// Symmetric 8×8 covariance of the quadrature fluctuations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(Mat8);

fn upper_index() -> &'static [(usize, usize); 36] {
    static IDX: OnceLock<[(usize, usize); 36]> = OnceLock::new();
    IDX.get_or_init(|| {
        let mut out = [(0, 0); 36];
        let mut k = 0;
        for i in 0..8 {
            for j in i..8 {
                out[k] = (i, j);
                k += 1;
            }
        }
        out
    })
}

/// Column names `V_<a><b><i><j>` of the 36 upper-triangle entries.
pub fn upper_labels() -> Vec<String> {
    upper_index()
        .iter()
        .map(|&(i, j)| {
            let (a, mi) = QUADRATURES[i];
            let (b, mj) = QUADRATURES[j];
            format!("V_{a}{b}{mi}{mj}")
        })
        .collect()
}

impl CovarianceMatrix {
    /// `½ I`: optical vacuum and ground-state mechanics.
    pub fn vacuum() -> Self {
        Self(Mat8::identity() * 0.5)
    }

    /// Symmetrizes the input.
    pub fn new(m: Mat8) -> Self {
        Self(smallmat::symmetrize(&m))
    }

    /// Wraps a matrix that must already be symmetric within 1e-9.
    pub fn try_from_symmetric(m: Mat8) -> Result<Self> {
        let asym = smallmat::asymmetry(&m);
        if asym > 1e-9 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::new(m))
    }

    pub fn from_upper(u: &[f64]) -> Self {
        let mut m = Mat8::zeros();
        for (k, &(i, j)) in upper_index().iter().enumerate() {
            m[(i, j)] = u[k];
            m[(j, i)] = u[k];
        }
        Self(m)
    }

    pub fn upper(&self) -> [f64; 36] {
        std::array::from_fn(|k| {
            let (i, j) = upper_index()[k];
            self.0[(i, j)]
        })
    }

    pub fn matrix(&self) -> &Mat8 {
        &self.0
    }

    pub fn min_symplectic_eigenvalue(&self) -> Result<f64> {
        Ok(smallmat::symplectic_eigenvalues(&self.0)?[0])
    }

    /// Rows/columns `(q₁, p₁, q₂, p₂)`.
    pub fn mechanical(&self) -> Mat4 {
        Mat4::from_fn(|r, c| self.0[(MECHANICAL[r], MECHANICAL[c])])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    pub ode: OdeOptionsSerde,
    pub variant: DriftVariant,
    /// Abort when the minimum symplectic eigenvalue drops below
    /// `0.5 − physicality_abort`.
    pub physicality_abort: f64,
}

/// Serializable mirror of [`OdeOptions`] tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeOptionsSerde {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeOptionsSerde {
    fn default() -> Self {
        let d = OdeOptions::default();
        Self { rtol: d.rtol, atol: d.atol }
    }
}

impl From<OdeOptionsSerde> for OdeOptions {
    fn from(o: OdeOptionsSerde) -> Self {
        OdeOptions { rtol: o.rtol, atol: o.atol, ..Default::default() }
    }
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self { ode: OdeOptionsSerde::default(), variant: DriftVariant::default(), physicality_abort: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSample {
    pub t: f64,
    pub state: ClassicalState,
    pub cov: CovarianceMatrix,
    pub min_symplectic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTrajectory {
    pub samples: Vec<CovarianceSample>,
    pub stats: ode::OdeStats,
}

impl CovarianceTrajectory {
    pub fn min_symplectic(&self) -> f64 {
        self.samples.iter().map(|s| s.min_symplectic).fold(f64::INFINITY, f64::min)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.samples.iter().map(|s| smallmat::asymmetry(s.cov.matrix())).fold(0.0, f64::max)
    }

    /// Sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<&CovarianceSample> {
        self.samples.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// CSV: `t`, the 36 upper-triangle labels, then `nu_min`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for l in upper_labels() {
            write!(w, ",{l}")?;
        }
        writeln!(w, ",nu_min")?;
        for s in &self.samples {
            write!(w, "{:?}", s.t)?;
            for v in s.cov.upper() {
                write!(w, ",{v:?}")?;
            }
            writeln!(w, ",{:?}", s.min_symplectic)?;
        }
        Ok(())
    }
}

fn lyapunov_rhs(params: &SystemParams, variant: DriftVariant, noise: &Mat8, y: &[f64], dy: &mut [f64]) {
    classical::rhs_into(params, y, dy);
    let state = ClassicalState::from_slice(y);
    let a = drift_matrix(&state, params, variant);
    let v = CovarianceMatrix::from_upper(&y[8..]);
    let av = a * v.0;
    for (k, &(i, j)) in upper_index().iter().enumerate() {
        dy[8 + k] = av[(i, j)] + av[(j, i)] + noise[(i, j)];
    }
}

/// Co-integrates the mean-field equations and the Lyapunov equation from
/// `init` and `v0` over `[0, t_end]`, sampling every `dt_out`.
pub fn propagate_from(
    params: &SystemParams,
    t_end: f64,
    dt_out: f64,
    init: &ClassicalState,
    v0: &CovarianceMatrix,
    opts: &CovarianceOptions,
) -> Result<CovarianceTrajectory> {
    let nu0 = v0.min_symplectic_eigenvalue()?;
    if nu0 < 0.5 - 1e-6 {
        return Err(Error::Nonphysical(format!("initial covariance has symplectic eigenvalue {nu0}")));
    }
    let noise = noise_matrix(params);
    let mut y0 = init.to_array().to_vec();
    y0.extend_from_slice(&v0.upper());

    let mut samples = Vec::with_capacity((t_end / dt_out) as usize + 2);
    let mut failure: Option<Error> = None;
    let ode_opts: OdeOptions = opts.ode.into();
    let outcome = ode::integrate(
        |_, y, dy| lyapunov_rhs(params, opts.variant, &noise, y, dy),
        &y0,
        t_end,
        dt_out,
        &ode_opts,
        |t, y| {
            let cov = CovarianceMatrix::from_upper(&y[8..]);
            let min_symplectic = match cov.min_symplectic_eigenvalue() {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    return Sampling::Stop;
                }
            };
            if min_symplectic < 0.5 - opts.physicality_abort {
                failure = Some(Error::Unphysical { t, nu_min: min_symplectic });
                return Sampling::Stop;
            }
            samples.push(CovarianceSample { t, state: ClassicalState::from_slice(y), cov, min_symplectic });
            Sampling::Continue
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let OdeStatus::Diverged { t } = outcome.status {
        let state = samples.last().map(|s| s.state.to_array().to_vec()).unwrap_or_default();
        return Err(Error::Divergent { t, state });
    }
    Ok(CovarianceTrajectory { samples, stats: outcome.stats })
}

/// [`propagate_from`] with zero mean-field initial conditions.
pub fn propagate(
    params: &SystemParams,
    t_end: f64,
    dt_out: f64,
    v0: &CovarianceMatrix,
    opts: &CovarianceOptions,
) -> Result<CovarianceTrajectory> {
    propagate_from(params, t_end, dt_out, &ClassicalState::default(), v0, opts)
}

/// Stationary covariance for a frozen drift: solves `A V + V Aᵀ + N = 0`.
pub fn stationary_covariance(a: &Mat8, noise: &Mat8) -> Option<CovarianceMatrix> {
    smallmat::lyapunov_solve(a, noise).map(CovarianceMatrix::new)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub drive: f64,
    /// Rightmost real part of the spectrum of `A` at the fixed point.
    pub max_re_eig: Option<f64>,
    pub stable: Option<bool>,
    pub error: Option<String>,
}

pub fn stability_point(params: &SystemParams, drive: f64, variant: DriftVariant) -> StabilityPoint {
    let p = params.with_drive(drive);
    let run = classical::fixed_point(&p).and_then(|fp| smallmat::spectral_abscissa(&drift_matrix(&fp, &p, variant)));
    match run {
        Ok(m) => StabilityPoint { drive, max_re_eig: Some(m), stable: Some(m < -STABILITY_DEAD_BAND), error: None },
        Err(e) => StabilityPoint { drive, max_re_eig: None, stable: None, error: Some(e.to_string()) },
    }
}

/// Rightmost eigenvalue of `A` at the algebraic fixed point for each drive.
pub fn stability_scan(params: &SystemParams, drives: &[f64], variant: DriftVariant) -> Result<Vec<StabilityPoint>> {
    if drives.is_empty() {
        return Err(Error::InvalidArgument("drive list is empty".into()));
    }
    Ok(drives.par_iter().map(|&e| stability_point(params, e, variant)).collect())
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"EPSNAP01";

/// Writes covariance samples in the fixed little-endian snapshot layout:
/// magic `EPSNAP01`, `u32` version (1), `u32` dimension (8), `u64` count,
/// then per sample `t`, the 8 mean-field values and the 64 row-major
/// covariance entries, all `f64`.
pub fn write_snapshots<W: Write>(samples: &[CovarianceSample], mut w: W) -> std::io::Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&8u32.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        w.write_all(&s.t.to_le_bytes())?;
        for v in s.state.to_array() {
            w.write_all(&v.to_le_bytes())?;
        }
        for r in 0..8 {
            for c in 0..8 {
                w.write_all(&s.cov.matrix()[(r, c)].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads the layout written by [`write_snapshots`]. The minimum symplectic
/// eigenvalue is recomputed.
pub fn read_snapshots<R: Read>(mut r: R) -> Result<Vec<CovarianceSample>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Config("not a covariance snapshot file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4);
    if version != 1 || dim != 8 {
        return Err(Error::Config(format!("unsupported snapshot version {version} / dimension {dim}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8);
    let mut next = || -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let mut out = Vec::new();
    for _ in 0..count {
        let t = next()?;
        let mut st = [0.0; 8];
        for v in &mut st {
            *v = next()?;
        }
        let mut m = Mat8::zeros();
        for row in 0..8 {
            for col in 0..8 {
                m[(row, col)] = next()?;
            }
        }
        let cov = CovarianceMatrix::try_from_symmetric(m)?;
        let min_symplectic = cov.min_symplectic_eigenvalue()?;
        out.push(CovarianceSample { t, state: ClassicalState::from_array(st), cov, min_symplectic });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::REFERENCE_DEFAULTS;

    #[test]
    fn zero_field_structure() {
        let a = drift_matrix(&ClassicalState::default(), &REFERENCE_DEFAULTS, DriftVariant::Tabulated);
        // only the J entries link the two oscillators
        for r in 0..8 {
            for c in 0..8 {
                let cross = (r < 4) != (c < 4);
                if cross && a[(r, c)] != 0.0 {
                    assert!((r, c) == (1, 4) || (r, c) == (5, 0), "({r}, {c})");
                }
            }
        }
        assert_eq!(a[(1, 4)], 0.03);
        assert_eq!(a[(5, 0)], 0.03);
        // optical and mechanical sectors decouple within each oscillator
        for (m, o) in [(0usize, 2usize), (0, 3), (1, 2), (1, 3), (4, 6), (4, 7), (5, 6), (5, 7)] {
            assert_eq!(a[(m, o)], 0.0);
            assert_eq!(a[(o, m)], 0.0);
        }
    }

    #[test]
    fn no_state_dependence_without_coupling() {
        let mut p = REFERENCE_DEFAULTS;
        p.g0 = 0.0;
        let s = ClassicalState::from_array([3.0, 4.0, 2.0, 1.0, -7.0, 2.0, 5.0, 0.5]);
        assert_eq!(
            drift_matrix(&s, &p, DriftVariant::Tabulated),
            drift_matrix(&ClassicalState::default(), &p, DriftVariant::Tabulated)
        );
    }

    #[test]
    fn tabulated_entries() {
        let s = ClassicalState { re_a1: 3.0, im_a1: 4.0, q1: 2.0, ..Default::default() };
        let a = drift_matrix(&s, &REFERENCE_DEFAULTS, DriftVariant::Tabulated);
        let s2g = std::f64::consts::SQRT_2 * 1e-4;
        assert!((a[(1, 2)] - s2g * 3.0).abs() < 1e-18);
        assert!((a[(2, 3)] - -(-1.0 + 1e-4 * 2.0)).abs() < 1e-15);
        assert!((a[(1, 3)] - s2g * 4.0).abs() < 1e-18);
        assert!((a[(2, 0)] - s2g * 4.0).abs() < 1e-18);
        assert!((a[(3, 0)] - s2g * 3.0).abs() < 1e-18);
        let h = drift_matrix(&s, &REFERENCE_DEFAULTS, DriftVariant::Hamiltonian);
        assert_eq!(h[(2, 0)], -a[(2, 0)]);
        assert_eq!((h - a).iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn hamiltonian_variant_is_symplectic_up_to_damping() {
        // with κ = γ = 0 the Hamiltonian drift satisfies AΩ + ΩAᵀ = 0
        let mut p = REFERENCE_DEFAULTS;
        p.kappa = 0.0;
        p.gamma_m1 = 0.0;
        p.gamma_m2 = 0.0;
        let s = ClassicalState::from_array([30.0, -40.0, 2.0, 1.0, 25.0, 10.0, 5.0, 0.5]);
        let omega = smallmat::symplectic_form::<8>();
        let h = drift_matrix(&s, &p, DriftVariant::Hamiltonian);
        assert!((h * omega + omega * h.transpose()).amax() < 1e-15);
        let t = drift_matrix(&s, &p, DriftVariant::Tabulated);
        assert!((t * omega + omega * t.transpose()).amax() > 1e-3);
    }

    #[test]
    fn noise_diagonal() {
        let n = noise_matrix(&REFERENCE_DEFAULTS.with_n_thermal(10.0));
        let want = [0.0, 0.21, 0.1, 0.1, 0.0, 0.0021, 0.1, 0.1];
        for (i, w) in want.iter().enumerate() {
            assert!((n[(i, i)] - w).abs() < 1e-15);
        }
        assert_eq!(n.iter().filter(|v| **v != 0.0).count(), 6);
    }

    #[test]
    fn upper_round_trip_and_labels() {
        let labels = upper_labels();
        assert_eq!(labels.len(), 36);
        assert_eq!(labels[0], "V_qq11");
        assert_eq!(labels[1], "V_qp11");
        assert_eq!(labels[4], "V_qq12");
        assert_eq!(labels[35], "V_yy22");
        let m = Mat8::from_fn(|i, j| (i * j) as f64 + (i + j) as f64);
        let c = CovarianceMatrix::new(m);
        assert_eq!(CovarianceMatrix::from_upper(&c.upper()), c);
    }

    #[test]
    fn vacuum_fixed_point_without_coupling() {
        let mut p = REFERENCE_DEFAULTS;
        p.g0 = 0.0;
        p.j_coupling = 0.0;
        let traj = propagate(&p, 200.0, 10.0, &CovarianceMatrix::vacuum(), &CovarianceOptions::default()).unwrap();
        for s in &traj.samples {
            assert!((s.cov.matrix() - Mat8::identity() * 0.5).amax() < 1e-12);
        }
    }

    #[test]
    fn optical_blocks_stay_vacuum_with_j() {
        let mut p = REFERENCE_DEFAULTS;
        p.g0 = 0.0;
        let traj = propagate(&p, 200.0, 10.0, &CovarianceMatrix::vacuum(), &CovarianceOptions::default()).unwrap();
        for s in &traj.samples {
            for o in [2usize, 6] {
                let v = s.cov.matrix();
                assert!((v[(o, o)] - 0.5).abs() < 1e-12 && (v[(o + 1, o + 1)] - 0.5).abs() < 1e-12);
                assert!(v[(o, o + 1)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thermal_relaxation() {
        let mut p = REFERENCE_DEFAULTS.with_n_thermal(10.0);
        p.g0 = 0.0;
        p.j_coupling = 0.0;
        p.gamma_m2 = 1e-2;
        // ~13 damping times
        let traj = propagate(&p, 1300.0, 0.05, &CovarianceMatrix::vacuum(), &CovarianceOptions::default()).unwrap();
        let tail = &traj.samples[traj.samples.len() - 126..];
        for o in [0usize, 4] {
            let mean_q = tail.iter().map(|s| s.cov.matrix()[(o, o)]).sum::<f64>() / tail.len() as f64;
            let mean_p = tail.iter().map(|s| s.cov.matrix()[(o + 1, o + 1)]).sum::<f64>() / tail.len() as f64;
            assert!((mean_q - 10.5).abs() < 0.05, "{mean_q}");
            assert!((mean_p - 10.5).abs() < 0.05, "{mean_p}");
        }
    }

    #[test]
    fn frozen_drift_relaxes_to_lyapunov_solution() {
        // g₀ = 0 freezes A; the long-time V must solve the algebraic equation
        let mut p = REFERENCE_DEFAULTS;
        p.g0 = 0.0;
        p.gamma_m2 = 5e-2;
        p.gamma_m1 = 5e-2;
        let a = drift_matrix(&ClassicalState::default(), &p, DriftVariant::Tabulated);
        let n = noise_matrix(&p);
        let traj = propagate(&p, 1000.0, 100.0, &CovarianceMatrix::vacuum(), &CovarianceOptions::default()).unwrap();
        let v = traj.samples.last().unwrap().cov;
        assert!(smallmat::lyapunov_residual(&a, v.matrix(), &n) < 1e-6);
        let exact = stationary_covariance(&a, &n).unwrap();
        assert!((exact.matrix() - v.matrix()).amax() < 1e-6);
    }

    #[test]
    fn rejects_unphysical_initial_state() {
        let v = CovarianceMatrix::new(Mat8::identity() * 0.3);
        assert!(propagate(&REFERENCE_DEFAULTS, 1.0, 0.5, &v, &CovarianceOptions::default()).is_err());
    }

    #[test]
    fn physicality_abort_threshold() {
        let p = REFERENCE_DEFAULTS.with_drive(600.0);
        let opts = CovarianceOptions { physicality_abort: 1e-4, ..Default::default() };
        match propagate(&p, 3000.0, 1.0, &CovarianceMatrix::vacuum(), &opts) {
            Err(Error::Unphysical { nu_min, .. }) => assert!(nu_min < 0.5 - 1e-4),
            other => panic!("expected abort, got {:?}", other.map(|t| t.min_symplectic())),
        }
    }

    #[test]
    fn undriven_is_stable() {
        let pt = stability_point(&REFERENCE_DEFAULTS, 0.0, DriftVariant::Tabulated);
        let m = pt.max_re_eig.unwrap();
        assert_eq!(pt.stable, Some(true));
        // zero-field oracle: mechanical poles at −γ/2-ish, optical at −κ
        assert!(m < 0.0 && m > -REFERENCE_DEFAULTS.kappa);
        assert!((m + REFERENCE_DEFAULTS.gamma_m2 / 2.0).abs() < 5e-3, "{m}");
    }

    #[test]
    fn snapshot_round_trip() {
        let traj = propagate(&REFERENCE_DEFAULTS.with_drive(50.0), 20.0, 5.0, &CovarianceMatrix::vacuum(), &CovarianceOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_snapshots(&traj.samples, &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + traj.samples.len() * 73 * 8);
        let back = read_snapshots(buf.as_slice()).unwrap();
        assert_eq!(back.len(), traj.samples.len());
        for (a, b) in back.iter().zip(&traj.samples) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.cov, b.cov);
            assert_eq!(a.state, b.state);
        }
        assert!(read_snapshots(&b"nonsense-bytes-here-xxxxxxxxxxxxxx"[..]).is_err());
    }
}
