use std::path::Path;

use epsync::experiments::{run, Drives, RunKind, RunManifest, Scenario, Status};
use epsync::experiments::sweeps::CovSettings;
use epsync::fluctuations::{read_snapshots, upper_labels};
use epsync::metrics::METRIC_COLUMNS;
use epsync::REFERENCE_DEFAULTS;

fn short(t_end: f64) -> CovSettings {
    CovSettings { t_end, dt_out: 1.0, ..Default::default() }
}

fn scenario(name: &str, runs: Vec<RunKind>) -> Scenario {
    Scenario { name: name.into(), description: String::new(), params: REFERENCE_DEFAULTS, runs }
}

fn read(dir: &Path, f: &str) -> String {
    std::fs::read_to_string(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))
}

fn manifest(out: &Path) -> RunManifest {
    RunManifest::new(
        vec![
            scenario(
                "cov",
                vec![
                    RunKind::Covariance { drives: vec![600.0].into(), settings: short(30.0) },
                    RunKind::ThermalSweep { n_thermal: vec![0.0, 5.0], drive: 600.0, settings: short(10.0) },
                ],
            ),
            scenario(
                "gaps",
                vec![RunKind::PowerSweep {
                    drives: vec![0.0, 600.0].into(),
                    // the driven run dips below 0.4 and is aborted
                    settings: CovSettings { physicality_abort: 0.1, ..short(200.0) },
                }],
            ),
            scenario(
                "panel",
                vec![RunKind::WignerPanel {
                    drives: vec![500.0].into(),
                    times: vec![10.0, 20.0],
                    points: 7,
                    extent_sigma: 5.0,
                    settings: short(20.0),
                }],
            ),
            scenario(
                "scans",
                vec![
                    RunKind::StabilityScan {
                        drives: Drives::range(0.0, 40.0, 20.0),
                        dampings: vec![[1e-2, 1e-4], [1e-4, 1e-4]],
                        variant: Default::default(),
                    },
                    RunKind::AmplitudeScan { drives: vec![100.0, 200.0].into(), t_end: 300.0, window: 50.0, dt_out: 0.5 },
                    RunKind::MismatchSweep { mismatches: vec![0.0, 0.002], drives: vec![100.0].into(), settings: short(10.0) },
                ],
            ),
        ],
        out,
    )
}

fn assert_no_nan_literals(text: &str) {
    for token in text.split([',', '\n']) {
        assert!(!token.eq_ignore_ascii_case("nan") && !token.contains("inf"), "literal {token:?}");
    }
}

#[test]
fn outputs_follow_the_documented_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let report = run(&manifest(&out)).unwrap();
    for s in &report.scenarios {
        assert_eq!(s.status, Status::Ok, "{}: {:?}", s.name, s.errors);
    }

    // report.json mirrors the in-memory report and lists every artifact
    let json: serde_json::Value = serde_json::from_str(&read(&out, "report.json")).unwrap();
    assert_eq!(json["schema_version"], 1);
    for s in json["scenarios"].as_array().unwrap() {
        assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);
        for r in s["runs"].as_array().unwrap() {
            for f in r["outputs"].as_array().unwrap() {
                assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
            }
        }
    }

    // covariance: t, 36 upper-triangle entries, nu_min
    let cov = read(&out, "cov/covariance_E600.csv");
    let mut lines = cov.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 38);
    assert_eq!(header[0], "t");
    assert_eq!(header[1..37].iter().map(|s| s.to_string()).collect::<Vec<_>>(), upper_labels());
    assert_eq!(header[37], "nu_min");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 31);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[0][1], 0.5);

    // metric series with its log-base sidecar
    let metrics = read(&out, "cov/metrics_E600.csv");
    assert_eq!(metrics.lines().next().unwrap(), METRIC_COLUMNS.join(","));
    assert_no_nan_literals(&metrics);
    let side: serde_json::Value = serde_json::from_str(&read(&out, "cov/metrics_E600.json")).unwrap();
    assert_eq!(side["log_base"], "e");
    assert_eq!(side["columns"].as_array().unwrap().len(), METRIC_COLUMNS.len());
    assert!(out.join("cov/metrics_n5.csv").is_file());
    assert_eq!(read(&out, "cov/thermal_sweep.csv").lines().count(), 3);

    // a failed sweep point is a row of empty fields, not NaN
    let power = read(&out, "gaps/power_sweep.csv");
    assert_eq!(power.lines().next().unwrap(), "drive,S_p,E_n,nu_min,entangled_intervals");
    assert!(power.lines().any(|l| l == "600.0,,,,"), "{power}");
    assert!(power.lines().any(|l| l.starts_with("0.0,") && !l.contains(",,")), "{power}");
    assert_no_nan_literals(&power);
    assert_eq!(json["scenarios"][1]["runs"][0]["summary"]["gaps"].as_array().unwrap().len(), 1);

    // Wigner grid: one CSV row per p value, axes in the JSON header
    for t in ["10", "20"] {
        for m in ["1", "2"] {
            let stem = format!("panel/wigner_E500_t{t}_m{m}");
            let header: serde_json::Value = serde_json::from_str(&read(&out, &format!("{stem}.json"))).unwrap();
            assert_eq!(header["rows"], "p");
            let grid = read(&out, &format!("{stem}.csv"));
            assert_eq!(grid.lines().count(), 7);
            assert!(grid.lines().all(|l| l.split(',').count() == 7));
            assert_eq!(header["q"]["points"], 7);
        }
    }
    assert_eq!(read(&out, "panel/squeeze.csv").lines().count(), 1 + 4);

    // binary snapshots decode back to the sampled covariances
    let bytes = std::fs::read(out.join("panel/snapshots_E500.bin")).unwrap();
    assert_eq!(&bytes[..8], b"EPSNAP01");
    assert_eq!(bytes.len(), 8 + 4 + 4 + 8 + 2 * 8 * (1 + 8 + 64));
    let snaps = read_snapshots(bytes.as_slice()).unwrap();
    assert_eq!(snaps.iter().map(|s| s.t).collect::<Vec<_>>(), vec![10.0, 20.0]);

    let stability = read(&out, "scans/stability.csv");
    assert_eq!(stability.lines().next().unwrap(), "gamma_m1,gamma_m2,drive,max_re_eig,stable");
    assert_eq!(stability.lines().count(), 1 + 2 * 3);
    let scan = read(&out, "scans/amplitude_scan.csv");
    assert!(scan.starts_with("drive,regime,"));
    assert_eq!(scan.lines().count(), 3);
    let mismatch = read(&out, "scans/mismatch_sweep.csv");
    assert!(mismatch.starts_with("delta_omega,drive,"));
    assert!(mismatch.lines().nth(1).unwrap().starts_with("0.0,100.0,"));

    // atomic writes leave no temporary files behind
    for entry in walk(&out) {
        let name = entry.file_name().unwrap().to_string_lossy().into_owned();
        assert!(!name.starts_with(".tmp"), "{name}");
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn manifests_round_trip_through_toml() {
    let m = manifest(Path::new("somewhere"));
    let back = RunManifest::parse(&m.to_toml()).unwrap();
    assert_eq!(back, m);
}
