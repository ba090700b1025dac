//! Adaptive Dormand–Prince 5(4) integrator with dense output.
//!
//! Fifth-order propagation, embedded fourth-order error estimate, FSAL, and
//! the standard fourth-order continuous extension for sampling on a fixed
//! output grid independent of the internal step sequence.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest internal step; `f64::INFINITY` means unrestricted.
    pub h_max: f64,
    /// Any state component above this magnitude halts the integration.
    pub divergence_limit: f64,
    pub max_steps: u64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: f64::INFINITY,
            divergence_limit: 1e12,
            max_steps: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeStatus {
    Completed,
    /// Stopped at `t` because the state left the divergence bound.
    Diverged { t: f64 },
    /// The sample callback asked to stop.
    Stopped { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOutcome {
    pub status: OdeStatus,
    pub stats: OdeStats,
}

/// What the sample callback wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Continue,
    Stop,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Output grid `0, dt, 2dt, …` up to and including `t_end` (within rounding).
pub fn output_grid(t_end: f64, dt_out: f64) -> Vec<f64> {
    let n = (t_end / dt_out * (1.0 + 1e-12)).floor() as usize;
    (0..=n).map(|k| k as f64 * dt_out).collect()
}

/// Integrates `y' = f(t, y)` from `t = 0` with samples at [`output_grid`].
///
/// `sample` receives each output time and the interpolated state; it may
/// stop the integration early. Step-size underflow is an error carrying the
/// last accepted state.
pub fn integrate<F, S>(
    mut f: F,
    y0: &[f64],
    t_end: f64,
    dt_out: f64,
    opts: &OdeOptions,
    mut sample: S,
) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> Sampling,
{
    if !(t_end > 0.0) || !(dt_out > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_end ({t_end}) and dt_out ({dt_out}) must be positive"
        )));
    }
    let n = y0.len();
    let grid = output_grid(t_end, dt_out);
    let mut next_sample = 0usize;

    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut y_stage = vec![0.0; n];
    let mut k = [(); 7].map(|_| vec![0.0; n]);
    let mut err = vec![0.0; n];
    let mut dense = [(); 5].map(|_| vec![0.0; n]);

    let mut t = 0.0;
    f(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    if sample(grid[0], &y) == Sampling::Stop {
        return Ok(OdeOutcome { status: OdeStatus::Stopped { t: 0.0 }, stats });
    }
    next_sample += 1;

    let mut h = initial_step(&mut f, &y, &k[0], opts, t_end, &mut stats).min(opts.h_max);
    let mut last_rejected = false;

    while next_sample < grid.len() {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t, state: y });
        }
        let t_stop = grid[grid.len() - 1];
        if t + h > t_stop {
            h = t_stop - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, state: y });
        }

        // stages
        for i in 0..n {
            y_stage[i] = y[i] + h * A21 * k[0][i];
        }
        f(t + C2 * h, &y_stage, &mut k[1]);
        for i in 0..n {
            y_stage[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        f(t + C3 * h, &y_stage, &mut k[2]);
        for i in 0..n {
            y_stage[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        f(t + C4 * h, &y_stage, &mut k[3]);
        for i in 0..n {
            y_stage[i] =
                y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        f(t + C5 * h, &y_stage, &mut k[4]);
        for i in 0..n {
            y_stage[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        f(t + h, &y_stage, &mut k[5]);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i]
                    + A76 * k[5][i]);
        }
        f(t + h, &y_new, &mut k[6]);
        stats.rhs_evals += 6;

        let mut sq = 0.0;
        for i in 0..n {
            err[i] = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            sq += (err[i] / scale).powi(2);
        }
        let err_norm = (sq / n as f64).sqrt();

        if !err_norm.is_finite() || err_norm > 1.0 {
            stats.rejected += 1;
            let fac = if err_norm.is_finite() {
                (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
            last_rejected = true;
            continue;
        }

        // accepted: build the continuous extension on [t, t + h]
        for i in 0..n {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            dense[0][i] = y[i];
            dense[1][i] = ydiff;
            dense[2][i] = bspl;
            dense[3][i] = ydiff - h * k[6][i] - bspl;
            dense[4][i] = h
                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        let t_new = t + h;
        stats.steps += 1;

        while next_sample < grid.len() && grid[next_sample] <= t_new * (1.0 + 1e-14) {
            let ts = grid[next_sample];
            let theta = ((ts - t) / h).clamp(0.0, 1.0);
            let theta1 = 1.0 - theta;
            for i in 0..n {
                y_stage[i] = dense[0][i]
                    + theta
                        * (dense[1][i]
                            + theta1 * (dense[2][i] + theta * (dense[3][i] + theta1 * dense[4][i])));
            }
            next_sample += 1;
            if sample(ts, &y_stage) == Sampling::Stop {
                return Ok(OdeOutcome { status: OdeStatus::Stopped { t: ts }, stats });
            }
        }

        std::mem::swap(&mut y, &mut y_new);
        k.swap(0, 6);
        t = t_new;

        if y.iter().any(|v| !(v.abs() <= opts.divergence_limit)) {
            return Ok(OdeOutcome { status: OdeStatus::Diverged { t }, stats });
        }

        let mut fac = (SAFETY * err_norm.max(1e-10).powf(-0.2)).clamp(FAC_MIN, FAC_MAX);
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        h = (h * fac).min(opts.h_max);
    }

    Ok(OdeOutcome { status: OdeStatus::Completed, stats })
}

fn initial_step<F>(
    f: &mut F,
    y0: &[f64],
    f0: &[f64],
    opts: &OdeOptions,
    t_end: f64,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(t_end);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    f(h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}
