//! Python bindings.

use idlertomo_core::interferometer::{rates_closed_form, rates_exact, visibilities_closed_form};
use idlertomo_core::states::prepared_idler_params;
use idlertomo_core::{
    extract_parameters, mle_reconstruct, report_fidelity, run_calibration, run_scan, IdlerStateParams,
    InterferometerConfig, ReconstructionResult, ScanPlan, ScanRecord, SignalSetting, SourceQ2Params, WaveplateKind,
    WaveplateSetting, C64,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: idlertomo_core::Error) -> PyErr {
    match e {
        idlertomo_core::Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn setting(s: &str) -> PyResult<SignalSetting> {
    s.parse().map_err(|_| PyValueError::new_err(format!("setting must be 'H' or 'V', got {s:?}")))
}

fn matrix_rows(m: &idlertomo_core::ComplexMatrix) -> Vec<Vec<C64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Idler polarization state `(P_H, xi, purity)`.
#[pyclass(name = "IdlerState", module = "idlertomo", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyIdlerState(IdlerStateParams);

#[pymethods]
impl PyIdlerState {
    #[new]
    #[pyo3(signature = (p_h, xi, purity = 1.0))]
    fn new(p_h: f64, xi: f64, purity: f64) -> PyResult<Self> {
        IdlerStateParams::new(p_h, xi, purity).map(Self).map_err(err)
    }

    /// State prepared from `|H>` by one waveplate ("hwp" or "qwp") at `angle_deg`.
    #[staticmethod]
    fn from_waveplate(plate: &str, angle_deg: f64) -> PyResult<Self> {
        let kind = match plate {
            "hwp" => WaveplateKind::HalfWave,
            "qwp" => WaveplateKind::QuarterWave,
            _ => return Err(PyValueError::new_err("plate must be 'hwp' or 'qwp'")),
        };
        Ok(Self(prepared_idler_params(&[WaveplateSetting::from_degrees(kind, angle_deg)])))
    }

    #[getter]
    fn p_h(&self) -> f64 {
        self.0.p_h()
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.0.xi()
    }

    #[getter]
    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn density_matrix(&self) -> Vec<Vec<C64>> {
        matrix_rows(self.0.to_density_matrix().matrix())
    }

    fn __repr__(&self) -> String {
        format!("IdlerState(p_h={}, xi={}, purity={})", self.0.p_h(), self.0.xi(), self.0.purity())
    }
}

/// Interferometer configuration.
#[pyclass(name = "Interferometer", module = "idlertomo", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInterferometer(InterferometerConfig);

#[pymethods]
impl PyInterferometer {
    /// Without pump amplitudes the balanced arrangement is used.
    #[new]
    #[pyo3(signature = (idler, t_h = 1.0, t_v = 1.0, b1 = None, b2 = None, phi = 0.0, p_h2 = 0.5, theta = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        idler: PyRef<'_, PyIdlerState>,
        t_h: f64,
        t_v: f64,
        b1: Option<f64>,
        b2: Option<f64>,
        phi: f64,
        p_h2: f64,
        theta: f64,
    ) -> PyResult<Self> {
        let q2 = SourceQ2Params::new(p_h2, theta).map_err(err)?;
        let cfg = match (b1, b2) {
            (None, None) => InterferometerConfig::balanced(idler.0, t_h, t_v).map(|c| c.with_q2(q2)),
            (b1, b2) => {
                let b1 = b1.unwrap_or_else(|| (1.0 - b2.unwrap().powi(2)).max(0.0).sqrt());
                let b2 = b2.unwrap_or_else(|| (1.0 - b1 * b1).max(0.0).sqrt());
                InterferometerConfig::from_pump_ratio(b1, b2, C64::new(t_h, 0.0), C64::new(t_v, 0.0), idler.0, q2)
            }
        };
        Ok(Self(cfg.map_err(err)?.with_phi(phi)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn idler(&self) -> PyIdlerState {
        PyIdlerState(*self.0.idler())
    }

    /// `(R_H, R_V)` from the closed form at pump phase `phi`.
    #[pyo3(signature = (phi, setting = "H"))]
    fn rates(&self, phi: f64, setting: &str) -> PyResult<(f64, f64)> {
        let r = rates_closed_form(&self.0.clone().with_phi(phi).with_setting(self::setting(setting)?));
        Ok((r.rate_h, r.rate_v))
    }

    /// `(R_H, R_V)` by evolving the full density matrix.
    #[pyo3(signature = (phi, setting = "H"))]
    fn rates_exact(&self, phi: f64, setting: &str) -> PyResult<(f64, f64)> {
        let r = rates_exact(&self.0.clone().with_phi(phi).with_setting(self::setting(setting)?)).map_err(err)?;
        Ok((r.rate_h, r.rate_v))
    }

    fn visibilities(&self) -> (f64, f64) {
        visibilities_closed_form(&self.0)
    }
}

/// One fringe scan.
#[pyclass(name = "Scan", module = "idlertomo", frozen)]
struct PyScan(ScanRecord);

#[pymethods]
impl PyScan {
    #[staticmethod]
    #[pyo3(signature = (config, setting, seed, points = 20, n = 1000, noiseless = false))]
    fn simulate(
        config: PyRef<'_, PyInterferometer>,
        setting: &str,
        seed: u64,
        points: usize,
        n: u64,
        noiseless: bool,
    ) -> PyResult<Self> {
        let plan = ScanPlan::uniform(points, n, self::setting(setting)?, seed, noiseless).map_err(err)?;
        Ok(Self(run_scan(&config.0, &plan)))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ScanRecord::load(path).map(Self).map_err(err)
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.0.save_csv(path).map_err(err)
    }

    fn save_json(&self, path: &str) -> PyResult<()> {
        self.0.save_json(path).map_err(err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_string()
    }

    #[getter]
    fn setting(&self) -> &'static str {
        self.0.setting().as_str()
    }

    #[getter]
    fn phases(&self) -> Vec<f64> {
        self.0.phases().to_vec()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.0.counts_primary().to_vec()
    }

    #[getter]
    fn counts_constant(&self) -> Vec<u64> {
        self.0.counts_constant().to_vec()
    }
}

/// Reconstructed idler state.
#[pyclass(name = "Reconstruction", module = "idlertomo", frozen)]
struct PyReconstruction(ReconstructionResult);

#[pymethods]
impl PyReconstruction {
    #[getter]
    fn state(&self) -> PyIdlerState {
        PyIdlerState(self.0.params)
    }

    #[getter]
    fn fidelity(&self) -> Option<f64> {
        self.0.fidelity_vs_reference
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.0.cost
    }

    fn density_matrix(&self) -> Vec<Vec<C64>> {
        matrix_rows(self.0.rho.matrix())
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_pretty().map_err(err)
    }
}

/// Returns `{"t_h", "t_h_stderr", "t_v", "t_v_stderr"}` from the two
/// calibration scans.
#[pyfunction]
#[pyo3(signature = (config, seed, points = 20, n = 1000, noiseless = false))]
fn calibrate<'py>(
    py: Python<'py>,
    config: PyRef<'_, PyInterferometer>,
    seed: u64,
    points: usize,
    n: u64,
    noiseless: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let plan = ScanPlan::uniform(points, n, SignalSetting::H, seed, noiseless).map_err(err)?;
    let (cal, _, _) = run_calibration(&config.0, &plan).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t_h", cal.t_h)?;
    d.set_item("t_h_stderr", cal.t_h_stderr)?;
    d.set_item("t_v", cal.t_v)?;
    d.set_item("t_v_stderr", cal.t_v_stderr)?;
    Ok(d)
}

/// Reconstructs the idler from an H and a V scan. `method` is "mle" or "fringe".
#[pyfunction]
#[pyo3(signature = (scan_h, scan_v, t_h = 1.0, t_v = 1.0, method = "mle", reference = None))]
fn reconstruct(
    scan_h: PyRef<'_, PyScan>,
    scan_v: PyRef<'_, PyScan>,
    t_h: f64,
    t_v: f64,
    method: &str,
    reference: Option<PyRef<'_, PyIdlerState>>,
) -> PyResult<PyReconstruction> {
    let mut r = match method {
        "mle" => mle_reconstruct(&scan_h.0, &scan_v.0, t_h, t_v, None),
        "fringe" => extract_parameters(&scan_h.0, &scan_v.0, t_h, t_v),
        _ => return Err(PyValueError::new_err("method must be 'mle' or 'fringe'")),
    }
    .map_err(err)?;
    if let Some(reference) = reference {
        report_fidelity(&mut r, &reference.0).map_err(err)?;
    }
    Ok(PyReconstruction(r))
}

/// Least-squares fit of `A + B cos(phi + delta)`; returns a dict of the fit.
#[pyfunction]
fn fit_sinusoid<'py>(py: Python<'py>, phases: Vec<f64>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let f = idlertomo_core::fit_sinusoid(&phases, &values).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("offset", f.offset)?;
    d.set_item("amplitude", f.amplitude)?;
    d.set_item("phase", f.phase)?;
    d.set_item("visibility", f.visibility)?;
    d.set_item("visibility_stderr", f.visibility_stderr)?;
    Ok(d)
}

#[pymodule]
fn idlertomo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIdlerState>()?;
    m.add_class::<PyInterferometer>()?;
    m.add_class::<PyScan>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sinusoid, m)?)?;
    Ok(())
}
