use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{self, ClassicalState, ClassifyOptions, ScanSettings};
use crate::effective;
use crate::fluctuations;
use crate::metrics::{csv_field, MetricSeries};
use crate::ode::OdeOptions;
use crate::{Error, Result, SystemParams};

use super::manifest::{RunKind, RunManifest, Scenario};
use super::sweeps::{self, SweepRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: &'static str,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub status: Status,
    pub errors: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scenarios: Vec<ScenarioReport>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.scenarios.iter().any(|s| s.status == Status::Failed)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place once complete.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Compact decimal label for file names: `500`, `0.002`.
fn label(x: f64) -> String {
    format!("{x}")
}

fn opt(v: Option<f64>) -> String {
    v.map(csv_field).unwrap_or_default()
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        write_atomic(&self.dir.join(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    fn json(&mut self, name: &str, v: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(v)? + "\n";
        self.text(name, &text)
    }
}

fn sweep_csv(rows: &[SweepRow], with_delta: bool) -> String {
    let mut s = String::new();
    if with_delta {
        s.push_str("delta_omega,");
    }
    s.push_str("drive,S_p,E_n,nu_min,entangled_intervals\n");
    for r in rows {
        if with_delta {
            let _ = write!(s, "{},", csv_field(r.delta_omega));
        }
        let sm = r.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            csv_field(r.drive),
            opt(sm.and_then(|m| m.s_p)),
            opt(sm.and_then(|m| m.e_n)),
            opt(sm.map(|m| m.nu_min)),
            sm.map(|m| m.entangled_intervals.to_string()).unwrap_or_default()
        );
    }
    s
}

fn sweep_errors(rows: &[SweepRow]) -> serde_json::Value {
    rows.iter()
        .filter_map(|r| r.error.as_ref().map(|e| serde_json::json!({"drive": r.drive, "delta_omega": r.delta_omega, "error": e})))
        .collect()
}

fn execute(params: &SystemParams, run: &RunKind, out: &mut Outputs) -> Result<serde_json::Value> {
    match run {
        RunKind::Classical { drives, t_end, dt_out } => {
            let drives = drives.values();
            let trajs: Vec<Result<classical::ClassicalTrajectory>> = drives
                .par_iter()
                .map(|&e| classical::integrate(&params.with_drive(e), *t_end, *dt_out, &ClassicalState::default(), &OdeOptions::default()))
                .collect();
            let mut status = Vec::new();
            for (e, traj) in drives.iter().zip(trajs) {
                let traj = traj?;
                out.write(&format!("classical_E{}.csv", label(*e)), |w| traj.write_csv(w))?;
                status.push(serde_json::json!({"drive": e, "status": traj.status, "steps": traj.stats.steps}));
            }
            Ok(serde_json::json!({ "trajectories": status }))
        }
        RunKind::Covariance { drives, settings } => {
            let drives = drives.values();
            let runs: Vec<Result<sweeps::MetricRun>> =
                drives.par_iter().map(|&e| sweeps::metric_run(&params.with_drive(e), settings)).collect();
            let mut summaries = Vec::new();
            for (e, run) in drives.iter().zip(runs) {
                let run = run?;
                out.write(&format!("covariance_E{}.csv", label(*e)), |w| run.trajectory.write_csv(w))?;
                out.write(&format!("metrics_E{}.csv", label(*e)), |w| run.series.write_csv(w))?;
                out.json(&format!("metrics_E{}.json", label(*e)), &MetricSeries::metadata())?;
                summaries.push(serde_json::json!({"drive": e, "summary": run.summary}));
            }
            Ok(serde_json::json!({ "metadata": MetricSeries::metadata(), "runs": summaries }))
        }
        RunKind::StabilityScan { drives, dampings, variant } => {
            let drives = drives.values();
            let pairs = if dampings.is_empty() { vec![[params.gamma_m1, params.gamma_m2]] } else { dampings.clone() };
            let mut csv = String::from("gamma_m1,gamma_m2,drive,max_re_eig,stable\n");
            let mut first_unstable = Vec::new();
            for [g1, g2] in &pairs {
                let mut p = *params;
                p.gamma_m1 = *g1;
                p.gamma_m2 = *g2;
                let pts = fluctuations::stability_scan(&p, &drives, *variant)?;
                for pt in &pts {
                    let stable = pt.stable.map(|s| s.to_string()).unwrap_or_default();
                    let _ = writeln!(csv, "{},{},{},{},{stable}", csv_field(*g1), csv_field(*g2), csv_field(pt.drive), opt(pt.max_re_eig));
                }
                let first = pts.iter().find(|pt| pt.stable == Some(false)).map(|pt| pt.drive);
                first_unstable.push(serde_json::json!({"gamma_m1": g1, "gamma_m2": g2, "first_unstable_drive": first}));
            }
            out.text("stability.csv", &csv)?;
            Ok(serde_json::json!({ "variant": variant, "dampings": first_unstable }))
        }
        RunKind::AmplitudeScan { drives, t_end, window, dt_out } => {
            let drives = drives.values();
            let settings = ScanSettings { t_end: *t_end, window: *window, dt_out: *dt_out };
            let scan = classical::amplitude_scan(params, &drives, &settings, &OdeOptions::default(), &ClassifyOptions::default())?;
            let mut csv = String::from("drive,regime,amp_q1,amp_q2,decay_rate,abs_a1,abs_a2,discriminant\n");
            let mut discs = Vec::new();
            for pt in &scan.points {
                let disc = pt.field_magnitudes.map(|[m1, m2]| {
                    let r = effective::effective_rates(
                        &params.with_drive(pt.drive),
                        nalgebra::Complex::new(m1, 0.0),
                        nalgebra::Complex::new(m2, 0.0),
                    );
                    effective::spectrum(&r, params.j_coupling).discriminant
                });
                discs.push(disc);
                let rep = pt.report;
                let regime = rep.map(|r| serde_json::to_value(r.regime).unwrap().as_str().unwrap().to_string());
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(pt.drive),
                    regime.unwrap_or_default(),
                    opt(rep.map(|r| r.amplitudes[0])),
                    opt(rep.map(|r| r.amplitudes[1])),
                    opt(rep.and_then(|r| r.decay_rate)),
                    opt(pt.field_magnitudes.map(|m| m[0])),
                    opt(pt.field_magnitudes.map(|m| m[1])),
                    opt(disc)
                );
            }
            out.text("amplitude_scan.csv", &csv)?;
            let (ds, vs): (Vec<f64>, Vec<f64>) =
                scan.points.iter().zip(&discs).filter_map(|(p, d)| d.map(|d| (p.drive, d))).unzip();
            let errors: Vec<_> = scan.points.iter().filter_map(|p| p.error.as_ref().map(|e| serde_json::json!({"drive": p.drive, "error": e}))).collect();
            Ok(serde_json::json!({
                "e_p": scan.e_p,
                "e_lc": scan.e_lc,
                "discriminant_crossing": effective::discriminant_crossing(&ds, &vs),
                "errors": errors,
            }))
        }
        RunKind::PowerSweep { drives, settings } => {
            let rows = sweeps::power_sweep(params, &drives.values(), settings);
            out.text("power_sweep.csv", &sweep_csv(&rows, false))?;
            Ok(serde_json::json!({ "metadata": MetricSeries::metadata(), "gaps": sweep_errors(&rows) }))
        }
        RunKind::MismatchSweep { mismatches, drives, settings } => {
            let rows = sweeps::mismatch_sweep(params, mismatches, &drives.values(), settings);
            out.text("mismatch_sweep.csv", &sweep_csv(&rows, true))?;
            let maxima: Vec<_> = mismatches
                .iter()
                .map(|&d| {
                    serde_json::json!({
                        "delta_omega": d,
                        "max_S_p": sweeps::max_over_drive(&rows, d, SweepRow::s_p),
                        "max_E_n": sweeps::max_over_drive(&rows, d, SweepRow::e_n),
                    })
                })
                .collect();
            Ok(serde_json::json!({ "metadata": MetricSeries::metadata(), "maxima": maxima, "gaps": sweep_errors(&rows) }))
        }
        RunKind::ThermalSweep { n_thermal, drive, settings } => {
            let runs = sweeps::thermal_sweep(params, n_thermal, *drive, settings);
            let mut csv = String::from("n_thermal,S_p,E_n,nu_min,entangled_intervals\n");
            let mut errors = Vec::new();
            for tr in &runs {
                match &tr.run {
                    Ok(run) => {
                        out.write(&format!("metrics_n{}.csv", label(tr.n_thermal)), |w| run.series.write_csv(w))?;
                        out.json(&format!("metrics_n{}.json", label(tr.n_thermal)), &MetricSeries::metadata())?;
                        let s = run.summary;
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{}",
                            csv_field(tr.n_thermal),
                            opt(s.s_p),
                            opt(s.e_n),
                            csv_field(s.nu_min),
                            s.entangled_intervals
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(csv, "{},,,,", csv_field(tr.n_thermal));
                        errors.push(serde_json::json!({"n_thermal": tr.n_thermal, "error": e.to_string()}));
                    }
                }
            }
            out.text("thermal_sweep.csv", &csv)?;
            Ok(serde_json::json!({ "metadata": MetricSeries::metadata(), "drive": drive, "gaps": errors }))
        }
        RunKind::WignerPanel { drives, times, points, extent_sigma, settings } => {
            let panels = sweeps::wigner_panel(params, &drives.values(), times, *points, *extent_sigma, settings);
            let mut csv = String::from("drive,t,oscillator,r,phi,n_eff\n");
            for panel in panels {
                let snaps = panel.snapshots?;
                let samples: Vec<_> = snaps.iter().map(|s| s.sample).collect();
                out.write(&format!("snapshots_E{}.bin", label(panel.drive)), |w| fluctuations::write_snapshots(&samples, w))?;
                for s in &snaps {
                    for j in 0..2 {
                        let stem = format!("wigner_E{}_t{}_m{}", label(s.drive), label(s.t), j + 1);
                        out.write(&format!("{stem}.csv"), |w| s.grids[j].write_csv(w))?;
                        out.json(&format!("{stem}.json"), &s.grids[j].header_json())?;
                        let q = s.squeeze[j];
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{}",
                            csv_field(s.drive),
                            csv_field(s.t),
                            j + 1,
                            csv_field(q.r),
                            csv_field(q.phi),
                            csv_field(q.n_eff)
                        );
                    }
                }
            }
            out.text("squeeze.csv", &csv)?;
            Ok(serde_json::json!({ "times": times, "points": points }))
        }
    }
}

fn run_scenario(scenario: &Scenario, root: &Path) -> ScenarioReport {
    let start = Instant::now();
    let mut errors: Vec<String> = scenario.problems().iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
    let mut runs = Vec::new();
    if errors.is_empty() {
        let dir = root.join(&scenario.name);
        for run in &scenario.runs {
            let mut out = Outputs { dir: &dir, written: Vec::new() };
            match execute(&scenario.params, run, &mut out) {
                Ok(summary) => runs.push(RunSummary {
                    kind: run.name(),
                    outputs: out.written.iter().map(|f| format!("{}/{f}", scenario.name)).collect(),
                    summary,
                }),
                Err(e) => errors.push(format!("{}: {e}", run.name())),
            }
        }
    }
    ScenarioReport {
        name: scenario.name.clone(),
        status: if errors.is_empty() { Status::Ok } else { Status::Failed },
        errors,
        runs,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Runs every scenario (concurrently) and writes `report.json` into the
/// output directory. Scenario failures are recorded, not propagated.
pub fn run(manifest: &RunManifest) -> Result<RunReport> {
    let root = &manifest.output_dir;
    std::fs::create_dir_all(root)?;
    let scenarios = manifest.scenarios.par_iter().map(|s| run_scenario(s, root)).collect();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: manifest.tool_version.clone().unwrap_or_else(|| env!("CARGO_PKG_VERSION").to_string()),
        seed: manifest.seed,
        output_dir: root.clone(),
        scenarios,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    write_atomic(&root.join("report.json"), |w| w.write_all(text.as_bytes()))?;
    Ok(report)
}
