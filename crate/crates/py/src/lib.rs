//! Python bindings for the `epsync` simulation engine.
//!
//! Matrices cross the boundary as nested lists of floats; time series as
//! dictionaries of equal-length columns.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use engine::classical::{self, ClassicalState, ClassifyOptions, ScanSettings};
use engine::experiments::{self, bundled, RunManifest};
use engine::fluctuations::{self, CovarianceMatrix, CovarianceOptions, DriftVariant};
use engine::metrics::{self, GridSpec, MechanicalSubmatrix, MetricSeries, METRIC_COLUMNS};
use engine::ode::OdeOptions;
use engine::smallmat::{Mat, Mat2, Mat4};
use engine::{effective, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::UnknownParam(_)
        | Error::InvalidParams(_)
        | Error::InvalidArgument(_)
        | Error::NotSymmetric(_)
        | Error::NotPositiveDefinite
        | Error::Nonphysical(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_rows<const N: usize>(m: &Mat<N>) -> Vec<Vec<f64>> {
    (0..N).map(|r| (0..N).map(|c| m[(r, c)]).collect()).collect()
}

fn from_rows<const N: usize>(rows: Vec<Vec<f64>>) -> PyResult<Mat<N>> {
    if rows.len() != N || rows.iter().any(|r| r.len() != N) {
        return Err(PyValueError::new_err(format!("expected a {N}x{N} matrix")));
    }
    Ok(Mat::<N>::from_fn(|r, c| rows[r][c]))
}

fn parse_variant(name: &str) -> PyResult<DriftVariant> {
    match name {
        "tabulated" => Ok(DriftVariant::Tabulated),
        "hamiltonian" => Ok(DriftVariant::Hamiltonian),
        _ => Err(PyValueError::new_err(format!("unknown drift variant `{name}` (tabulated, hamiltonian)"))),
    }
}

fn state_from(values: Option<Vec<f64>>) -> PyResult<ClassicalState> {
    match values {
        None => Ok(ClassicalState::default()),
        Some(v) if v.len() == 8 => Ok(ClassicalState::from_slice(&v)),
        Some(_) => Err(PyValueError::new_err("state must have 8 components (q1, p1, x1, y1, q2, p2, x2, y2)")),
    }
}

/// Physical parameters in units of the mechanical frequency.
#[pyclass(name = "SystemParams", from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    inner: engine::SystemParams,
}

#[pymethods]
impl PySystemParams {
    /// Reference parameters; keyword arguments override individual fields.
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = engine::REFERENCE_DEFAULTS;
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                inner.set(&key, v.extract()?).map_err(err)?;
            }
        }
        Ok(Self { inner })
    }

    fn get(&self, key: &str) -> PyResult<f64> {
        self.inner.get(key).ok_or_else(|| PyValueError::new_err(format!("unknown parameter `{key}`")))
    }

    fn set(&mut self, key: &str, value: f64) -> PyResult<()> {
        self.inner.set(key, value).map_err(err)
    }

    fn with_drive(&self, drive: f64) -> Self {
        Self { inner: self.inner.with_drive(drive) }
    }

    fn with_mismatch(&self, fraction: f64) -> Self {
        Self { inner: self.inner.with_mismatch(fraction) }
    }

    fn with_n_thermal(&self, n_thermal: f64) -> Self {
        Self { inner: self.inner.with_n_thermal(n_thermal) }
    }

    /// `(errors, warnings)` as lists of `"field: message"` strings.
    fn validate(&self) -> (Vec<String>, Vec<String>) {
        let r = self.inner.validate();
        let fmt = |v: Vec<engine::model::Finding>| v.into_iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
        (fmt(r.errors), fmt(r.warnings))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for key in engine::model::PARAM_KEYS {
            d.set_item(key, self.inner.get(key))?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("SystemParams({:?})", self.inner)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Mean-field trajectory sampled every `dt_out`: `{"t": [...], "state": [[8 floats], ...], "status": str}`.
#[pyfunction]
#[pyo3(signature = (params, t_end, dt_out, initial=None))]
fn integrate<'py>(
    py: Python<'py>,
    params: &PySystemParams,
    t_end: f64,
    dt_out: f64,
    initial: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let init = state_from(initial)?;
    let traj = py
        .detach(|| classical::integrate(&params.inner, t_end, dt_out, &init, &OdeOptions::default()))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", &traj.times)?;
    d.set_item("state", traj.states.iter().map(|s| s.to_array().to_vec()).collect::<Vec<_>>())?;
    d.set_item("status", format!("{:?}", traj.status))?;
    Ok(d)
}

/// Steady state of the mean-field equations.
#[pyfunction]
fn fixed_point(params: &PySystemParams) -> PyResult<Vec<f64>> {
    Ok(classical::fixed_point(&params.inner).map_err(err)?.to_array().to_vec())
}

/// Regime scan; returns `{"e_p", "e_lc", "points": [{drive, regime, ...}]}`.
#[pyfunction]
#[pyo3(signature = (params, drives, t_end=5000.0, window=500.0, dt_out=0.1))]
fn amplitude_scan<'py>(
    py: Python<'py>,
    params: &PySystemParams,
    drives: Vec<f64>,
    t_end: f64,
    window: f64,
    dt_out: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let settings = ScanSettings { t_end, window, dt_out };
    let scan = py
        .detach(|| {
            classical::amplitude_scan(&params.inner, &drives, &settings, &OdeOptions::default(), &ClassifyOptions::default())
        })
        .map_err(err)?;
    json_to_py(py, &serde_json::to_value(&scan).map_err(|e| err(e.into()))?)
}

/// Effective complex frequencies and discriminant for given field magnitudes.
#[pyfunction]
fn effective_spectrum<'py>(py: Python<'py>, params: &PySystemParams, field1: f64, field2: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = |m: f64| nalgebra::Complex::new(m, 0.0);
    let rates = effective::effective_rates(&params.inner, c(field1), c(field2));
    let s = effective::spectrum(&rates, params.inner.j_coupling);
    let d = PyDict::new(py);
    d.set_item("omega_plus", (s.omega_plus.re, s.omega_plus.im))?;
    d.set_item("omega_minus", (s.omega_minus.re, s.omega_minus.im))?;
    d.set_item("discriminant", s.discriminant)?;
    d.set_item("at_ep", s.at_ep)?;
    d.set_item("gamma_eff1", rates.gamma_eff1)?;
    d.set_item("gamma_eff2", rates.gamma_eff2)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (params, state=None, variant="tabulated"))]
fn drift_matrix(params: &PySystemParams, state: Option<Vec<f64>>, variant: &str) -> PyResult<Vec<Vec<f64>>> {
    let s = state_from(state)?;
    Ok(to_rows(&fluctuations::drift_matrix(&s, &params.inner, parse_variant(variant)?)))
}

#[pyfunction]
fn noise_matrix(params: &PySystemParams) -> Vec<Vec<f64>> {
    to_rows(&fluctuations::noise_matrix(&params.inner))
}

/// `[(drive, max_re_eig or None, stable or None)]` at the fixed point.
#[pyfunction]
#[pyo3(signature = (params, drives, variant="tabulated"))]
fn stability_scan(
    py: Python<'_>,
    params: &PySystemParams,
    drives: Vec<f64>,
    variant: &str,
) -> PyResult<Vec<(f64, Option<f64>, Option<bool>)>> {
    let v = parse_variant(variant)?;
    let pts = py.detach(|| fluctuations::stability_scan(&params.inner, &drives, v)).map_err(err)?;
    Ok(pts.into_iter().map(|p| (p.drive, p.max_re_eig, p.stable)).collect())
}

/// Covariance propagation from vacuum: `{"t", "cov" (8x8 per sample), "nu_min"}`.
#[pyfunction]
#[pyo3(signature = (params, t_end, dt_out, variant="tabulated", physicality_abort=0.5))]
fn propagate<'py>(
    py: Python<'py>,
    params: &PySystemParams,
    t_end: f64,
    dt_out: f64,
    variant: &str,
    physicality_abort: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = CovarianceOptions { variant: parse_variant(variant)?, physicality_abort, ..Default::default() };
    let traj = py
        .detach(|| fluctuations::propagate(&params.inner, t_end, dt_out, &CovarianceMatrix::vacuum(), &opts))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("cov", traj.samples.iter().map(|s| to_rows(s.cov.matrix())).collect::<Vec<_>>())?;
    d.set_item("nu_min", traj.samples.iter().map(|s| s.min_symplectic).collect::<Vec<_>>())?;
    Ok(d)
}

/// Metric time series from vacuum, one list per column (`t`, `S_p`, `E_n`, ...).
#[pyfunction]
#[pyo3(signature = (params, t_end, dt_out, variant="tabulated"))]
fn metric_series<'py>(
    py: Python<'py>,
    params: &PySystemParams,
    t_end: f64,
    dt_out: f64,
    variant: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = CovarianceOptions { variant: parse_variant(variant)?, ..Default::default() };
    let series = py
        .detach(|| {
            fluctuations::propagate(&params.inner, t_end, dt_out, &CovarianceMatrix::vacuum(), &opts)
                .map(|t| MetricSeries::from_trajectory(&t))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    let getters: [fn(&metrics::MetricRow) -> f64; 10] = [
        |r| r.t,
        |r| r.s_p,
        |r| r.e_n,
        |r| r.nu_minus,
        |r| r.r1,
        |r| r.phi1,
        |r| r.r2,
        |r| r.phi2,
        |r| r.f,
        |r| r.qp_ratio,
    ];
    for (name, get) in METRIC_COLUMNS.iter().zip(getters) {
        d.set_item(*name, series.column(get))?;
    }
    d.set_item("log_base", "e")?;
    Ok(d)
}

/// `(E_n, nu_minus)` of a 4x4 mechanical covariance.
#[pyfunction]
fn log_negativity(v: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let vp = MechanicalSubmatrix::new(from_rows::<4>(v)?).map_err(err)?;
    let n = metrics::log_negativity(&vp).map_err(err)?;
    Ok((n.en, n.nu_minus))
}

#[pyfunction]
fn phase_sync(v: Vec<Vec<f64>>, phi1: f64, phi2: f64) -> PyResult<f64> {
    let vp = MechanicalSubmatrix::new(from_rows::<4>(v)?).map_err(err)?;
    metrics::phase_sync(&vp, phi1, phi2).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (v1, v2, u1=(0.0, 0.0), u2=(0.0, 0.0)))]
fn fidelity(v1: Vec<Vec<f64>>, v2: Vec<Vec<f64>>, u1: (f64, f64), u2: (f64, f64)) -> PyResult<f64> {
    let (a, b): (Mat2, Mat2) = (from_rows(v1)?, from_rows(v2)?);
    metrics::fidelity(&a, &b, [u1.0, u1.1], [u2.0, u2.1]).map_err(err)
}

/// `(r, phi, n_eff)` of a single-mode covariance.
#[pyfunction]
fn squeeze_rotation(v: Vec<Vec<f64>>) -> PyResult<(f64, f64, f64)> {
    let s = metrics::squeeze_rotation(&from_rows::<2>(v)?).map_err(err)?;
    Ok((s.r, s.phi, s.n_eff))
}

/// Wigner function on a square grid of half-width `extent_sigma` standard
/// deviations: `(q_axis, p_axis, values[p][q])`.
#[pyfunction]
#[pyo3(signature = (v, points=101, extent_sigma=6.0))]
fn wigner(v: Vec<Vec<f64>>, points: usize, extent_sigma: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let vm = from_rows::<2>(v)?;
    let g = metrics::wigner(&vm, &GridSpec::covering(&vm, extent_sigma, points)).map_err(err)?;
    let axis = |a: &metrics::Axis| (0..a.points).map(|i| a.value(i)).collect::<Vec<_>>();
    Ok((axis(&g.spec.q), axis(&g.spec.p), g.values))
}

/// Mechanical 4x4 block `(q1, p1, q2, p2)` of an 8x8 covariance.
#[pyfunction]
fn mechanical_block(v: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m: Mat4 = CovarianceMatrix::new(from_rows::<8>(v)?).mechanical();
    Ok(to_rows(&m))
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    json.call_method1("loads", (v.to_string(),))
}

/// Runs a TOML manifest and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (path, output_dir=None))]
fn run_manifest<'py>(py: Python<'py>, path: &str, output_dir: Option<String>) -> PyResult<Bound<'py, PyAny>> {
    let mut m = RunManifest::load(std::path::Path::new(path)).map_err(err)?;
    if let Some(out) = output_dir {
        m.output_dir = out.into();
    }
    let report = py.detach(|| experiments::run(&m)).map_err(err)?;
    json_to_py(py, &serde_json::to_value(&report).map_err(|e| err(e.into()))?)
}

/// Runs a bundled figure scenario (`fig2` ... `fig9`).
#[pyfunction]
#[pyo3(signature = (name, output_dir="out"))]
fn run_scenario<'py>(py: Python<'py>, name: &str, output_dir: &str) -> PyResult<Bound<'py, PyAny>> {
    let m = bundled::manifest(name, output_dir, None)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{name}`")))?;
    let report = py.detach(|| experiments::run(&m)).map_err(err)?;
    json_to_py(py, &serde_json::to_value(&report).map_err(|e| err(e.into()))?)
}

#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    bundled::list().into_iter().map(|(n, d)| (n.to_string(), d)).collect()
}

#[pymodule]
fn epsync(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySystemParams>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_scan, m)?)?;
    m.add_function(wrap_pyfunction!(effective_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(drift_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(noise_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(stability_scan, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(metric_series, m)?)?;
    m.add_function(wrap_pyfunction!(log_negativity, m)?)?;
    m.add_function(wrap_pyfunction!(phase_sync, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(squeeze_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(mechanical_block, m)?)?;
    m.add_function(wrap_pyfunction!(run_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    Ok(())
}
