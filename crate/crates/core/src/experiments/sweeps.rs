use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::Osc;
use crate::fluctuations::{self, CovarianceOptions, CovarianceSample, CovarianceTrajectory, DriftVariant, OdeOptionsSerde};
use crate::metrics::{self, GridSpec, MetricSeries, SqueezeRotation, WignerGrid};
use crate::model::Finding;
use crate::{Result, SystemParams};

/// Covariance propagation and averaging options shared by the metric runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovSettings {
    pub t_end: f64,
    pub dt_out: f64,
    /// Fraction of the series, counted from the end, used for time averages.
    pub average_fraction: f64,
    pub variant: DriftVariant,
    pub physicality_abort: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for CovSettings {
    fn default() -> Self {
        let c = CovarianceOptions::default();
        Self {
            t_end: 5000.0,
            dt_out: 0.5,
            average_fraction: 0.5,
            variant: c.variant,
            physicality_abort: c.physicality_abort,
            rtol: c.ode.rtol,
            atol: c.ode.atol,
        }
    }
}

impl CovSettings {
    pub fn options(&self) -> CovarianceOptions {
        CovarianceOptions {
            ode: OdeOptionsSerde { rtol: self.rtol, atol: self.atol },
            variant: self.variant,
            physicality_abort: self.physicality_abort,
        }
    }

    pub(crate) fn check(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: &str| {
            out.push(Finding { field: format!("settings.{field}"), message: message.into() })
        };
        if !(self.t_end > 0.0 && self.dt_out > 0.0 && self.dt_out <= self.t_end) {
            bad("t_end", "need 0 < dt_out <= t_end");
        }
        if !(self.average_fraction > 0.0 && self.average_fraction <= 1.0) {
            bad("average_fraction", "must lie in (0, 1]");
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            bad("rtol", "tolerances must be positive");
        }
        out
    }
}

/// Time-averaged metrics of one covariance run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub s_p: Option<f64>,
    pub e_n: Option<f64>,
    /// Minimum over samples of the smallest symplectic eigenvalue of `V`.
    pub nu_min: f64,
    pub max_asymmetry: f64,
    /// Number of maximal sample runs with `Eₙ > 0`.
    pub entangled_intervals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRun {
    pub trajectory: CovarianceTrajectory,
    pub series: MetricSeries,
    pub summary: MetricSummary,
}

/// Runs of consecutive positive values.
pub fn positive_intervals(values: &[f64]) -> usize {
    let mut count = 0;
    let mut inside = false;
    for &v in values {
        let pos = v > 0.0;
        if pos && !inside {
            count += 1;
        }
        inside = pos;
    }
    count
}

fn finite(v: Result<f64>) -> Option<f64> {
    v.ok().filter(|x| x.is_finite())
}

pub fn summarize(traj: &CovarianceTrajectory, series: &MetricSeries, average_fraction: f64) -> MetricSummary {
    let ts = series.times();
    let avg = |col: Vec<f64>| match (ts.first(), ts.last()) {
        (Some(&a), Some(&b)) => finite(metrics::time_average(&ts, &col, b - average_fraction * (b - a), b)),
        _ => None,
    };
    MetricSummary {
        s_p: avg(series.column(|r| r.s_p)),
        e_n: avg(series.column(|r| r.e_n)),
        nu_min: traj.min_symplectic(),
        max_asymmetry: traj.max_asymmetry(),
        entangled_intervals: positive_intervals(&series.column(|r| r.e_n)),
    }
}

/// Propagates from vacuum and evaluates the metric series.
pub fn metric_run(params: &SystemParams, settings: &CovSettings) -> Result<MetricRun> {
    let trajectory = fluctuations::propagate(
        params,
        settings.t_end,
        settings.dt_out,
        &fluctuations::CovarianceMatrix::vacuum(),
        &settings.options(),
    )?;
    let series = MetricSeries::from_trajectory(&trajectory);
    let summary = summarize(&trajectory, &series, settings.average_fraction);
    Ok(MetricRun { trajectory, series, summary })
}

/// One sweep point; `summary` is absent when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub drive: f64,
    pub delta_omega: f64,
    pub n_thermal: f64,
    pub summary: Option<MetricSummary>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn s_p(&self) -> Option<f64> {
        self.summary.and_then(|s| s.s_p)
    }

    pub fn e_n(&self) -> Option<f64> {
        self.summary.and_then(|s| s.e_n)
    }
}

fn sweep_row(params: &SystemParams, settings: &CovSettings) -> SweepRow {
    let (summary, error) = match metric_run(params, settings) {
        Ok(run) => (Some(run.summary), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SweepRow {
        drive: params.drive,
        delta_omega: params.omega_m2 / params.omega_m1 - 1.0,
        n_thermal: params.n_thermal,
        summary,
        error,
    }
}

/// Time-averaged `Sₚ` and `Eₙ` per drive. Failed points are gaps.
pub fn power_sweep(params: &SystemParams, drives: &[f64], settings: &CovSettings) -> Vec<SweepRow> {
    drives.par_iter().map(|&e| sweep_row(&params.with_drive(e), settings)).collect()
}

/// [`power_sweep`] for each frequency mismatch `ωₘ₂ = ωₘ₁ (1 + δ)`.
pub fn mismatch_sweep(params: &SystemParams, mismatches: &[f64], drives: &[f64], settings: &CovSettings) -> Vec<SweepRow> {
    let points: Vec<(f64, f64)> = mismatches.iter().flat_map(|&d| drives.iter().map(move |&e| (d, e))).collect();
    points
        .par_iter()
        .map(|&(d, e)| {
            let mut row = sweep_row(&params.with_mismatch(d).with_drive(e), settings);
            row.delta_omega = d;
            row
        })
        .collect()
}

/// Maximum over drive of a sweep column for one mismatch value; `None` if
/// every point is a gap.
pub fn max_over_drive(rows: &[SweepRow], delta: f64, col: impl Fn(&SweepRow) -> Option<f64>) -> Option<f64> {
    rows.iter().filter(|r| r.delta_omega == delta).filter_map(col).reduce(f64::max)
}

#[derive(Debug)]
pub struct ThermalRun {
    pub n_thermal: f64,
    pub run: Result<MetricRun>,
}

pub fn thermal_sweep(params: &SystemParams, n_thermal: &[f64], drive: f64, settings: &CovSettings) -> Vec<ThermalRun> {
    n_thermal
        .par_iter()
        .map(|&n| ThermalRun { n_thermal: n, run: metric_run(&params.with_drive(drive).with_n_thermal(n), settings) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerSnapshot {
    pub drive: f64,
    pub t: f64,
    pub sample: CovarianceSample,
    pub grids: [WignerGrid; 2],
    pub squeeze: [SqueezeRotation; 2],
}

#[derive(Debug)]
pub struct WignerDrive {
    pub drive: f64,
    pub snapshots: Result<Vec<WignerSnapshot>>,
}

fn snapshot(drive: f64, sample: &CovarianceSample, points: usize, extent: f64) -> Result<WignerSnapshot> {
    let mech = sample.cov.mechanical();
    let block = |j: Osc| mech.fixed_view::<2, 2>(2 * j.index(), 2 * j.index()).into_owned();
    let (b1, b2) = (block(Osc::One), block(Osc::Two));
    let grid = |b| metrics::wigner(b, &GridSpec::covering(b, extent, points));
    Ok(WignerSnapshot {
        drive,
        t: sample.t,
        sample: *sample,
        grids: [grid(&b1)?, grid(&b2)?],
        squeeze: [metrics::squeeze_rotation(&b1)?, metrics::squeeze_rotation(&b2)?],
    })
}

/// Single-mode Wigner surfaces and squeezing of each oscillator at the
/// requested times.
pub fn wigner_panel(
    params: &SystemParams,
    drives: &[f64],
    times: &[f64],
    points: usize,
    extent_sigma: f64,
    settings: &CovSettings,
) -> Vec<WignerDrive> {
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    drives
        .par_iter()
        .map(|&e| {
            let snapshots = fluctuations::propagate(
                &params.with_drive(e),
                t_end.max(settings.dt_out),
                settings.dt_out,
                &fluctuations::CovarianceMatrix::vacuum(),
                &settings.options(),
            )
            .and_then(|traj| {
                times
                    .iter()
                    .map(|&t| snapshot(e, traj.at(t).expect("non-empty trajectory"), points, extent_sigma))
                    .collect()
            });
            WignerDrive { drive: e, snapshots }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::REFERENCE_DEFAULTS;

    fn short() -> CovSettings {
        CovSettings { t_end: 200.0, dt_out: 1.0, ..Default::default() }
    }

    #[test]
    fn interval_counting() {
        assert_eq!(positive_intervals(&[]), 0);
        assert_eq!(positive_intervals(&[0.0, 1.0, 2.0, 0.0, 0.0, 3.0]), 2);
        assert_eq!(positive_intervals(&[1.0, 1.0]), 1);
    }

    #[test]
    fn single_drive_sweep_matches_direct_run() {
        let p = REFERENCE_DEFAULTS.with_drive(600.0);
        let direct = metric_run(&p, &short()).unwrap();
        let rows = power_sweep(&REFERENCE_DEFAULTS, &[600.0], &short());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary, Some(direct.summary));
        let ts = direct.series.times();
        let oracle = {
            // rectangle rule on the trailing half
            let k0 = ts.iter().position(|&t| t >= 100.0).unwrap();
            let en = direct.series.column(|r| r.e_n);
            en[k0..en.len() - 1].iter().sum::<f64>() / (en.len() - 1 - k0) as f64
        };
        assert!((direct.summary.e_n.unwrap() - oracle).abs() < 1e-2 * oracle.max(1e-3));
    }

    #[test]
    fn degenerate_mismatch_runs() {
        let rows = mismatch_sweep(&REFERENCE_DEFAULTS, &[0.0, 0.008], &[100.0], &short());
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.summary.is_some()));
        assert_eq!(rows[0].delta_omega, 0.0);
        assert_eq!(max_over_drive(&rows, 0.0, SweepRow::s_p), rows[0].s_p());
        assert_eq!(max_over_drive(&rows, 0.5, SweepRow::s_p), None);
    }

    #[test]
    fn below_threshold_has_no_entanglement() {
        let rows = power_sweep(&REFERENCE_DEFAULTS, &[100.0, 200.0, 300.0], &CovSettings { t_end: 1000.0, ..Default::default() });
        for r in rows {
            assert_eq!(r.e_n(), Some(0.0), "{}", r.drive);
        }
    }

    #[test]
    fn strong_decoherence_removes_entanglement() {
        let runs = thermal_sweep(&REFERENCE_DEFAULTS, &[1000.0], 600.0, &CovSettings { t_end: 1000.0, ..Default::default() });
        let run = runs[0].run.as_ref().unwrap();
        assert!(run.series.rows.iter().all(|r| r.nu_minus >= 0.5 && r.e_n == 0.0));
    }

    #[test]
    fn weak_drive_wigner_is_near_vacuum() {
        let panel = wigner_panel(&REFERENCE_DEFAULTS, &[100.0], &[100.0], 41, 6.0, &short());
        let snaps = panel[0].snapshots.as_ref().unwrap();
        assert_eq!(snaps.len(), 1);
        for (g, s) in snaps[0].grids.iter().zip(&snaps[0].squeeze) {
            assert!((g.integral() - 1.0).abs() < 0.01);
            assert!(s.r < 0.1, "{}", s.r);
        }
    }
}
