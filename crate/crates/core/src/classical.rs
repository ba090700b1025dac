//! Mean-field dynamics of the two cavities and mechanical oscillators.
//!
//! ```text
//! ∂ₜ⟨aⱼ⟩ = −(κ − iΔⱼ)⟨aⱼ⟩ + i g₀⟨qⱼ⟩⟨aⱼ⟩ + E
//! ∂ₜ⟨qⱼ⟩ = ωₘⱼ⟨pⱼ⟩
//! ∂ₜ⟨pⱼ⟩ = −ωₘⱼ⟨qⱼ⟩ − γₘⱼ⟨pⱼ⟩ + J⟨q₃₋ⱼ⟩ + g₀|⟨aⱼ⟩|²
//! ```

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ode::{self, OdeOptions, OdeStats, OdeStatus, Sampling};
use crate::{Error, Result, SystemParams};

/// Mean values `{Re⟨aⱼ⟩, Im⟨aⱼ⟩, ⟨qⱼ⟩, ⟨pⱼ⟩}` for both cavities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub re_a1: f64,
    pub im_a1: f64,
    pub q1: f64,
    pub p1: f64,
    pub re_a2: f64,
    pub im_a2: f64,
    pub q2: f64,
    pub p2: f64,
}

/// Which oscillator/cavity pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Osc {
    One,
    Two,
}

impl Osc {
    pub const BOTH: [Osc; 2] = [Osc::One, Osc::Two];

    pub fn index(self) -> usize {
        match self {
            Osc::One => 0,
            Osc::Two => 1,
        }
    }
}

impl ClassicalState {
    pub const LEN: usize = 8;

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            re_a1: a[0],
            im_a1: a[1],
            q1: a[2],
            p1: a[3],
            re_a2: a[4],
            im_a2: a[5],
            q2: a[6],
            p2: a[7],
        }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut a = [0.0; 8];
        a.copy_from_slice(&s[..8]);
        Self::from_array(a)
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.re_a1, self.im_a1, self.q1, self.p1, self.re_a2, self.im_a2, self.q2, self.p2,
        ]
    }

    pub fn field(&self, j: Osc) -> Complex<f64> {
        match j {
            Osc::One => Complex::new(self.re_a1, self.im_a1),
            Osc::Two => Complex::new(self.re_a2, self.im_a2),
        }
    }

    pub fn q(&self, j: Osc) -> f64 {
        match j {
            Osc::One => self.q1,
            Osc::Two => self.q2,
        }
    }

    pub fn p(&self, j: Osc) -> f64 {
        match j {
            Osc::One => self.p1,
            Osc::Two => self.p2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Time derivative of the mean-field state.
pub fn rhs(state: &ClassicalState, params: &SystemParams) -> ClassicalState {
    let mut out = [0.0; 8];
    rhs_into(params, &state.to_array(), &mut out);
    ClassicalState::from_array(out)
}

/// Slice form of [`rhs`] used by the integrators; `y` and `dy` hold at least
/// the eight mean-field components.
pub fn rhs_into(p: &SystemParams, y: &[f64], dy: &mut [f64]) {
    let pairs = [
        (0usize, p.delta1, p.omega_m1, p.gamma_m1, 6usize),
        (4usize, p.delta2, p.omega_m2, p.gamma_m2, 2usize),
    ];
    for (o, delta, omega, gamma, other_q) in pairs {
        let (ar, ai, q, pm) = (y[o], y[o + 1], y[o + 2], y[o + 3]);
        let det = delta + p.g0 * q;
        dy[o] = -p.kappa * ar - det * ai + p.drive;
        dy[o + 1] = -p.kappa * ai + det * ar;
        dy[o + 2] = omega * pm;
        dy[o + 3] = -omega * q - gamma * pm + p.j_coupling * y[other_q] + p.g0 * (ar * ar + ai * ai);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    Divergent,
}

/// Mean-field samples on a uniform output grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    pub stats: OdeStats,
    pub status: TrajectoryStatus,
    pub dt_out: f64,
}

impl ClassicalTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Index range of samples with `t ∈ [t0, t1]`.
    pub fn range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.times.partition_point(|&t| t < t0 - 1e-9);
        let hi = self.times.partition_point(|&t| t <= t1 + 1e-9);
        lo..hi
    }

    /// CSV with header `t,re_a1,im_a1,q1,p1,re_a2,im_a2,q2,p2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_a1,im_a1,q1,p1,re_a2,im_a2,q2,p2")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t:?}")?;
            for v in s.to_array() {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates the mean-field equations from `init` over `[0, t_end]`.
///
/// Divergence (any component beyond `opts.divergence_limit`) ends the
/// trajectory with [`TrajectoryStatus::Divergent`]; step-size underflow is an
/// error.
pub fn integrate(
    params: &SystemParams,
    t_end: f64,
    dt_out: f64,
    init: &ClassicalState,
    opts: &OdeOptions,
) -> Result<ClassicalTrajectory> {
    let mut times = Vec::with_capacity((t_end / dt_out) as usize + 2);
    let mut states = Vec::with_capacity(times.capacity());
    let outcome = ode::integrate(
        |_, y, dy| rhs_into(params, y, dy),
        &init.to_array(),
        t_end,
        dt_out,
        opts,
        |t, y| {
            times.push(t);
            states.push(ClassicalState::from_slice(y));
            Sampling::Continue
        },
    )?;
    let status = match outcome.status {
        OdeStatus::Diverged { .. } => TrajectoryStatus::Divergent,
        _ => TrajectoryStatus::Completed,
    };
    Ok(ClassicalTrajectory { times, states, stats: outcome.stats, status, dt_out })
}

/// Mean phase `atan2(⟨pⱼ⟩, ⟨qⱼ⟩)` in `[0, 2π)`; zero at the origin.
pub fn mean_phase(state: &ClassicalState, j: Osc) -> f64 {
    phase_of(state.q(j), state.p(j))
}

fn phase_of(q: f64, p: f64) -> f64 {
    if q.abs() < 1e-15 && p.abs() < 1e-15 {
        return 0.0;
    }
    let phi = p.atan2(q).rem_euclid(TAU);
    if phi >= TAU {
        0.0
    } else {
        phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Decaying,
    /// Bounded but neither a clean decay nor stationary yet: the growth band
    /// between the instability threshold and the saturated limit cycle.
    Transient,
    LimitCycle,
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub amplitude_floor: f64,
    /// Max relative amplitude change between the last two windows.
    pub stationarity: f64,
    pub min_r_squared: f64,
    /// Envelope segments per window.
    pub segments_per_window: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { amplitude_floor: 1e-3, stationarity: 0.02, min_r_squared: 0.9, segments_per_window: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// Half peak-to-peak of `q₁`, `q₂` over the trailing window.
    pub amplitudes: [f64; 2],
    /// Envelope decay rate, decaying regime only.
    pub decay_rate: Option<f64>,
    /// Circular mean of the oscillation phase difference, limit cycles only.
    pub phase_difference: Option<f64>,
    /// Log-linear slope of the envelope over the fit span.
    pub envelope_slope: Option<f64>,
    pub envelope_r_squared: Option<f64>,
}

fn half_peak_to_peak(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() && hi.is_finite() {
        0.5 * (hi - lo)
    } else {
        0.0
    }
}

/// Least-squares line `y = a + b x`; returns `(slope, r²)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((slope, r2))
}

/// Classifies the trailing dynamics of a trajectory.
///
/// Amplitudes are half the peak-to-peak excursion of `qⱼ` in the last
/// `window`. A limit cycle needs some amplitude above the floor and every
/// such amplitude to change by less than the stationarity fraction between
/// the last two windows. Otherwise the envelope `√(A₁² + A₂²)` over the last
/// three windows is fitted log-linearly: a decreasing fit with enough R² is a
/// decay.
pub fn classify(traj: &ClassicalTrajectory, window: f64, opts: &ClassifyOptions) -> Result<RegimeReport> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let t_last = *traj.times.last().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let amp_in = |t0: f64, t1: f64, j: Osc| {
        let r = traj.range(t0, t1);
        half_peak_to_peak(traj.states[r].iter().map(|s| s.q(j)))
    };

    if traj.status == TrajectoryStatus::Divergent {
        let t0 = (t_last - window).max(0.0);
        return Ok(RegimeReport {
            regime: Regime::Divergent,
            amplitudes: [amp_in(t0, t_last, Osc::One), amp_in(t0, t_last, Osc::Two)],
            decay_rate: None,
            phase_difference: None,
            envelope_slope: None,
            envelope_r_squared: None,
        });
    }
    if traj.span() + 1e-9 < 3.0 * window {
        return Err(Error::InvalidArgument(format!(
            "window {window} needs a trajectory spanning at least {} (have {})",
            3.0 * window,
            traj.span()
        )));
    }

    let last = [amp_in(t_last - window, t_last, Osc::One), amp_in(t_last - window, t_last, Osc::Two)];
    let prev = [
        amp_in(t_last - 2.0 * window, t_last - window, Osc::One),
        amp_in(t_last - 2.0 * window, t_last - window, Osc::Two),
    ];

    // envelope fit over the trailing three windows
    let segments = 3 * opts.segments_per_window.max(1);
    let seg_len = 3.0 * window / segments as f64;
    let t_fit0 = t_last - 3.0 * window;
    let mut xs = Vec::with_capacity(segments);
    let mut ys = Vec::with_capacity(segments);
    for s in 0..segments {
        let a = t_fit0 + s as f64 * seg_len;
        let b = a + seg_len;
        let env = amp_in(a, b, Osc::One).hypot(amp_in(a, b, Osc::Two));
        if env > 0.0 {
            xs.push(0.5 * (a + b));
            ys.push(env.ln());
        }
    }
    let fit = linear_fit(&xs, &ys);
    let mut report = RegimeReport {
        regime: Regime::Transient,
        amplitudes: last,
        decay_rate: None,
        phase_difference: None,
        envelope_slope: fit.map(|f| f.0),
        envelope_r_squared: fit.map(|f| f.1),
    };
    let decaying_fit = fit.filter(|(slope, r2)| *slope < 0.0 && *r2 > opts.min_r_squared);

    if last.iter().all(|&a| a < opts.amplitude_floor) {
        report.regime = Regime::Decaying;
        report.decay_rate = decaying_fit.map(|(s, _)| -s);
        return Ok(report);
    }
    let stationary = last.iter().zip(&prev).all(|(&l, &p)| {
        l < opts.amplitude_floor || (l - p).abs() < opts.stationarity * l
    });
    if stationary {
        report.regime = Regime::LimitCycle;
        report.phase_difference = locked_phase_difference(traj, t_last - window, t_last);
        return Ok(report);
    }
    if let Some((slope, _)) = decaying_fit {
        report.regime = Regime::Decaying;
        report.decay_rate = Some(-slope);
    }
    Ok(report)
}

/// Circular mean over `[t0, t1]` of `θ₁ − θ₂`, the phases of the oscillating
/// parts of `(qⱼ, pⱼ)` about their window means, in `[0, 2π)`.
fn locked_phase_difference(traj: &ClassicalTrajectory, t0: f64, t1: f64) -> Option<f64> {
    let r = traj.range(t0, t1);
    let states = &traj.states[r];
    if states.is_empty() {
        return None;
    }
    let n = states.len() as f64;
    let mean = |f: &dyn Fn(&ClassicalState) -> f64| states.iter().map(f).sum::<f64>() / n;
    let (mq1, mp1, mq2, mp2) = (mean(&|s| s.q1), mean(&|s| s.p1), mean(&|s| s.q2), mean(&|s| s.p2));
    let (mut c, mut s) = (0.0, 0.0);
    for st in states {
        let th1 = (st.p1 - mp1).atan2(st.q1 - mq1);
        let th2 = (st.p2 - mp2).atan2(st.q2 - mq2);
        c += (th1 - th2).cos();
        s += (th1 - th2).sin();
    }
    if c == 0.0 && s == 0.0 {
        return None;
    }
    Some(phase_of(c, s))
}

/// Time average of `|⟨aⱼ⟩|` over the trailing `window`.
pub fn trailing_field_magnitudes(traj: &ClassicalTrajectory, window: f64) -> [f64; 2] {
    let t_last = traj.times.last().copied().unwrap_or(0.0);
    let r = traj.range(t_last - window, t_last);
    let states = &traj.states[r];
    let n = states.len().max(1) as f64;
    let mut out = [0.0; 2];
    for j in Osc::BOTH {
        out[j.index()] = states.iter().map(|s| s.field(j).norm()).sum::<f64>() / n;
    }
    out
}

/// Static solution of the mean-field equations (`⟨pⱼ⟩ = 0`).
///
/// Eliminates the cavity fields, `⟨aⱼ⟩ = E / (κ − i(Δⱼ + g₀⟨qⱼ⟩))`, and solves
/// the two mechanical balance equations by damped Newton iteration from the
/// linear (unshifted) solution. The fixed point exists regardless of its
/// stability.
pub fn fixed_point(params: &SystemParams) -> Result<ClassicalState> {
    let p = params;
    let residual = |q: [f64; 2]| -> [f64; 2] {
        let f = |j: usize| {
            let (omega, delta) = if j == 0 { (p.omega_m1, p.delta1) } else { (p.omega_m2, p.delta2) };
            let det = delta + p.g0 * q[j];
            let n_phot = p.drive * p.drive / (p.kappa * p.kappa + det * det);
            omega * q[j] - p.j_coupling * q[1 - j] - p.g0 * n_phot
        };
        [f(0), f(1)]
    };
    let jac = |q: [f64; 2]| -> [[f64; 2]; 2] {
        let d = |j: usize| {
            let (omega, delta) = if j == 0 { (p.omega_m1, p.delta1) } else { (p.omega_m2, p.delta2) };
            let det = delta + p.g0 * q[j];
            let den = p.kappa * p.kappa + det * det;
            omega + p.g0 * p.drive * p.drive * 2.0 * det * p.g0 / (den * den)
        };
        [[d(0), -p.j_coupling], [-p.j_coupling, d(1)]]
    };
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);

    // linear guess
    let n1 = p.drive * p.drive / (p.kappa * p.kappa + p.delta1 * p.delta1);
    let n2 = p.drive * p.drive / (p.kappa * p.kappa + p.delta2 * p.delta2);
    let lin = [[p.omega_m1, -p.j_coupling], [-p.j_coupling, p.omega_m2]];
    let mut q = solve2(lin, [p.g0 * n1, p.g0 * n2]).unwrap_or([0.0, 0.0]);

    let scale = 1.0 + p.g0 * n1.max(n2);
    for _ in 0..200 {
        let r = residual(q);
        let rn = norm(r);
        if rn <= 1e-13 * scale {
            return Ok(state_at(params, q));
        }
        let step = solve2(jac(q), r).ok_or(Error::FixedPointNoConvergence { drive: p.drive })?;
        let mut lambda = 1.0;
        loop {
            let trial = [q[0] - lambda * step[0], q[1] - lambda * step[1]];
            if norm(residual(trial)) < rn || lambda < 1e-6 {
                q = trial;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm(residual(q)) <= 1e-9 * scale {
        return Ok(state_at(params, q));
    }
    Err(Error::FixedPointNoConvergence { drive: p.drive })
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([(b[0] * m[1][1] - m[0][1] * b[1]) / det, (m[0][0] * b[1] - m[1][0] * b[0]) / det])
}

fn state_at(p: &SystemParams, q: [f64; 2]) -> ClassicalState {
    let field = |delta: f64, qj: f64| {
        let den = Complex::new(p.kappa, -(delta + p.g0 * qj));
        Complex::new(p.drive, 0.0) / den
    };
    let a1 = field(p.delta1, q[0]);
    let a2 = field(p.delta2, q[1]);
    ClassicalState {
        re_a1: a1.re,
        im_a1: a1.im,
        q1: q[0],
        p1: 0.0,
        re_a2: a2.re,
        im_a2: a2.im,
        q2: q[1],
        p2: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub t_end: f64,
    pub window: f64,
    pub dt_out: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { t_end: 5000.0, window: 500.0, dt_out: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub drive: f64,
    pub report: Option<RegimeReport>,
    /// Time-averaged `|⟨aⱼ⟩|` over the trailing window.
    pub field_magnitudes: Option<[f64; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeScan {
    pub points: Vec<ScanPoint>,
    /// Smallest drive whose regime is not decaying.
    pub e_p: Option<f64>,
    /// Smallest drive classified as a limit cycle.
    pub e_lc: Option<f64>,
}

fn scan_point(params: &SystemParams, drive: f64, s: &ScanSettings, ode: &OdeOptions, c: &ClassifyOptions) -> ScanPoint {
    let p = params.with_drive(drive);
    let run = integrate(&p, s.t_end, s.dt_out, &ClassicalState::default(), ode)
        .and_then(|traj| Ok((classify(&traj, s.window, c)?, trailing_field_magnitudes(&traj, s.window))));
    match run {
        Ok((report, fields)) => ScanPoint { drive, report: Some(report), field_magnitudes: Some(fields), error: None },
        Err(e) => ScanPoint { drive, report: None, field_magnitudes: None, error: Some(e.to_string()) },
    }
}

/// Independent zero-initial-condition runs per drive, evaluated in parallel.
pub fn amplitude_scan(
    params: &SystemParams,
    drives: &[f64],
    settings: &ScanSettings,
    ode: &OdeOptions,
    classify_opts: &ClassifyOptions,
) -> Result<AmplitudeScan> {
    if drives.is_empty() {
        return Err(Error::InvalidArgument("drive list is empty".into()));
    }
    if drives.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("drives must be strictly ascending".into()));
    }
    let points: Vec<ScanPoint> = drives
        .par_iter()
        .map(|&e| scan_point(params, e, settings, ode, classify_opts))
        .collect();
    let first = |pred: &dyn Fn(Regime) -> bool| {
        points
            .iter()
            .find(|pt| pt.report.is_some_and(|r| pred(r.regime)))
            .map(|pt| pt.drive)
    };
    let e_p = first(&|r| r != Regime::Decaying);
    let e_lc = first(&|r| r == Regime::LimitCycle);
    Ok(AmplitudeScan { points, e_p, e_lc })
}

/// Narrows a regime threshold bracketed by `[lo, hi]` (predicate false at
/// `lo`, true at `hi`) by bisection down to `resolution`.
pub fn refine_threshold(
    params: &SystemParams,
    mut lo: f64,
    mut hi: f64,
    resolution: f64,
    settings: &ScanSettings,
    ode: &OdeOptions,
    classify_opts: &ClassifyOptions,
    pred: impl Fn(Regime) -> bool,
) -> f64 {
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let pt = scan_point(params, mid, settings, ode, classify_opts);
        if pt.report.is_some_and(|r| pred(r.regime)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
