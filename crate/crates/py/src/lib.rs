//! Python bindings for the biphoton analysis toolkit.
//!
//! The native module is named `biphoton` and mirrors the core pipeline:
//! simulate -> bin -> (mub_check | certify | key_rates), plus the scalar
//! security formulas for direct use.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use biphoton_core::binning::{self, BinningConfig};
use biphoton_core::bootstrap::BootstrapConfig;
use biphoton_core::error::Error;
use biphoton_core::matrix::{BasisPair, CoincidenceMatrix};
use biphoton_core::mub;
use biphoton_core::security::{self, ProtocolConfig, RateInputs, Regime, SecurityParams};
use biphoton_core::sim;
use biphoton_core::tags::TagStream;
use biphoton_core::witness::{self, TargetState, WitnessReport};

fn to_py_err(e: Error) -> PyErr {
    match &e {
        Error::Config(_) | Error::Numeric(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match value {
        serde_json::Value::Null => py.None().into_py_any(py),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn struct_to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// One detector's timestamp stream.
#[pyclass(name = "TagStream", frozen)]
struct PyTagStream {
    inner: TagStream,
}

#[pymethods]
impl PyTagStream {
    #[getter]
    fn channel(&self) -> &'static str {
        self.inner.channel().label()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn times_ps(&self) -> Vec<u64> {
        self.inner.tags().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TagStream(channel={}, tags={}, duration_s={})",
            self.inner.channel().label(),
            self.inner.len(),
            self.inner.duration_s()
        )
    }
}

/// The four detector streams of one acquisition.
#[pyclass(name = "SimStreams", frozen)]
struct PySimStreams {
    inner: sim::SimStreams,
}

#[pymethods]
impl PySimStreams {
    #[getter]
    fn alice_t(&self) -> PyTagStream {
        PyTagStream {
            inner: self.inner.alice_t.clone(),
        }
    }

    #[getter]
    fn alice_f(&self) -> PyTagStream {
        PyTagStream {
            inner: self.inner.alice_f.clone(),
        }
    }

    #[getter]
    fn bob_t(&self) -> PyTagStream {
        PyTagStream {
            inner: self.inner.bob_t.clone(),
        }
    }

    #[getter]
    fn bob_f(&self) -> PyTagStream {
        PyTagStream {
            inner: self.inner.bob_f.clone(),
        }
    }
}

/// Simulator configuration.
#[pyclass(name = "SimConfig", from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: sim::SimConfig,
}

#[pymethods]
impl PySimConfig {
    /// Noise-free source and detectors; every pair lands on the diagonal.
    #[staticmethod]
    fn ideal(pair_rate: f64, duration_s: f64, seed: u64) -> Self {
        PySimConfig {
            inner: sim::SimConfig::ideal(pair_rate, duration_s, seed),
        }
    }

    /// Jitter and residual dispersion matched to the measured correlation
    /// peak widths (32.9 ps / 125.5 ps).
    #[staticmethod]
    fn calibrated(pair_rate: f64, duration_s: f64, seed: u64) -> Self {
        PySimConfig {
            inner: sim::SimConfig::calibrated(pair_rate, duration_s, seed),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: sim::SimConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PySimConfig { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

/// d x d coincidence counts for one basis pair.
#[pyclass(name = "CoincidenceMatrix", frozen, from_py_object)]
#[derive(Clone)]
struct PyCoincidenceMatrix {
    inner: CoincidenceMatrix,
}

#[pymethods]
impl PyCoincidenceMatrix {
    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn total(&self) -> u64 {
        self.inner.total()
    }

    #[getter]
    fn basis_pair(&self) -> &'static str {
        self.inner.basis_pair().label()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn counts(&self) -> Vec<Vec<u64>> {
        self.inner
            .counts()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Normalized joint distribution as nested lists.
    fn probabilities(&self) -> PyResult<Vec<Vec<f64>>> {
        let j = self.inner.normalize().map_err(to_py_err)?;
        Ok(j.probs().rows().into_iter().map(|r| r.to_vec()).collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        biphoton_core::io::write_matrix(std::path::Path::new(path), &self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner =
            biphoton_core::io::read_matrix(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(PyCoincidenceMatrix { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "CoincidenceMatrix(basis_pair={}, d={}, total={})",
            self.inner.basis_pair().label(),
            self.inner.d(),
            self.inner.total()
        )
    }
}

/// Generate the timestamp streams of one simulated acquisition.
#[pyfunction]
fn simulate(cfg: &PySimConfig) -> PyResult<PySimStreams> {
    Ok(PySimStreams {
        inner: sim::simulate(&cfg.inner).map_err(to_py_err)?,
    })
}

/// Pair two streams and bin them into the maximal-count d x d subspace.
#[pyfunction]
#[pyo3(signature = (a, b, tau_ps, n_bins, pairing_window_ps, d=None, frame_origin_ps=0))]
fn bin_timestamps(
    a: &PyTagStream,
    b: &PyTagStream,
    tau_ps: u64,
    n_bins: usize,
    pairing_window_ps: u64,
    d: Option<usize>,
    frame_origin_ps: i64,
) -> PyResult<PyCoincidenceMatrix> {
    let cfg = BinningConfig::new(tau_ps, n_bins, frame_origin_ps, pairing_window_ps)
        .map_err(to_py_err)?;
    let m = binning::bin_timestamps(&a.inner, &b.inner, &cfg, d.unwrap_or(n_bins))
        .map_err(to_py_err)?;
    Ok(PyCoincidenceMatrix { inner: m })
}

/// Maximal-count contiguous d x d submatrix (same window on both axes).
#[pyfunction]
fn subspace_extract(m: &PyCoincidenceMatrix, d: usize) -> PyResult<PyCoincidenceMatrix> {
    Ok(PyCoincidenceMatrix {
        inner: binning::subspace_extract(&m.inner, d).map_err(to_py_err)?,
    })
}

/// FWHM of the coincidence time-difference histogram, picoseconds.
#[pyfunction]
fn peak_fwhm(a: &PyTagStream, b: &PyTagStream, resolution_ps: u64) -> PyResult<f64> {
    binning::peak_fwhm(&a.inner, &b.inner, resolution_ps).map_err(to_py_err)
}

/// Full entanglement certification; returns the witness report as a dict.
#[pyfunction]
#[pyo3(signature = (tt, ff, bootstrap_samples=None, seed=0))]
fn certify(
    py: Python<'_>,
    tt: &PyCoincidenceMatrix,
    ff: &PyCoincidenceMatrix,
    bootstrap_samples: Option<usize>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let target = TargetState::maximally_entangled(tt.inner.d()).map_err(to_py_err)?;
    let report = match bootstrap_samples {
        Some(n) => {
            let cfg = BootstrapConfig {
                n_samples: n,
                seed,
                ..BootstrapConfig::default()
            };
            WitnessReport::compute_with_bootstrap(&tt.inner, &ff.inner, &target, &cfg)
                .map_err(to_py_err)?
        }
        None => WitnessReport::compute(&tt.inner, &ff.inner, &target).map_err(to_py_err)?,
    };
    struct_to_py(py, &report)
}

/// Cross-basis unbiasedness diagnostics as a dict.
#[pyfunction]
#[pyo3(signature = (cross, alpha=0.01, delta_m_threshold=0.05))]
fn mub_check(
    py: Python<'_>,
    cross: &PyCoincidenceMatrix,
    alpha: f64,
    delta_m_threshold: f64,
) -> PyResult<Py<PyAny>> {
    let report = mub::assess(&cross.inner, alpha, delta_m_threshold).map_err(to_py_err)?;
    struct_to_py(py, &report)
}

/// Key lengths and rates in all three regimes as a dict.
#[pyfunction]
#[pyo3(signature = (tt, ff, n_total, q=0.5, f_ec=1.1, coincidence_rate=None))]
fn key_rates(
    py: Python<'_>,
    tt: &PyCoincidenceMatrix,
    ff: &PyCoincidenceMatrix,
    n_total: f64,
    q: f64,
    f_ec: f64,
    coincidence_rate: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let (tt_aligned, _) = witness::align_diagonal(&tt.inner.normalize().map_err(to_py_err)?);
    let (ff_aligned, _) = witness::align_diagonal(&ff.inner.normalize().map_err(to_py_err)?);
    let inputs = RateInputs {
        d: tt.inner.d(),
        w: ff_aligned.diagonal_sum(),
        h_tt: witness::conditional_entropy(&tt_aligned),
        h_ff: witness::conditional_entropy(&ff_aligned),
    };
    let rate = coincidence_rate
        .unwrap_or_else(|| (tt.inner.total() + ff.inner.total()) as f64 / tt.inner.duration_s());
    let proto = ProtocolConfig {
        n_total,
        q,
        d: inputs.d,
        f_ec,
        coincidence_rate: rate,
    };
    let sec = SecurityParams::default();
    let dict = PyDict::new(py);
    for regime in [Regime::Asymptotic, Regime::Collective, Regime::Coherent] {
        let r = security::evaluate_rate(&proto, &sec, &inputs, regime).map_err(to_py_err)?;
        let name = format!("{regime:?}").to_lowercase();
        dict.set_item(name, struct_to_py(py, &r)?)?;
    }
    dict.into_py_any(py)
}

/// Certifiable Schmidt number for a fidelity lower bound at dimension d.
#[pyfunction]
fn certify_schmidt_number(f_tilde: f64, d: usize) -> PyResult<usize> {
    let target = TargetState::maximally_entangled(d).map_err(to_py_err)?;
    Ok(witness::certify_schmidt_number(f_tilde, &target))
}

/// Hoeffding confidence widening of the test statistic.
#[pyfunction]
fn hoeffding_mu(k_w: f64, eps_at: f64) -> PyResult<f64> {
    security::hoeffding_mu(k_w, eps_at).map_err(to_py_err)
}

/// Closed-form min-entropy rate per key round, bits.
#[pyfunction]
fn h_min(w: f64, mu: f64, d: usize) -> PyResult<f64> {
    security::h_min(w, mu, d).map_err(to_py_err)
}

/// Effective spectral resolution (delta_lambda_nm, delta_nu_ghz) of a
/// dispersive measurement.
#[pyfunction]
#[pyo3(signature = (dispersion_ps_per_nm, jitter_fwhm_ps, wavelength_nm=sim::DEFAULT_WAVELENGTH_NM))]
fn effective_resolution(
    dispersion_ps_per_nm: f64,
    jitter_fwhm_ps: f64,
    wavelength_nm: f64,
) -> PyResult<(f64, f64)> {
    let disp = sim::DispersionModel {
        dispersion_ps_per_nm,
        loss_db: 0.0,
    };
    let r =
        sim::effective_resolution_at(&disp, jitter_fwhm_ps, wavelength_nm).map_err(to_py_err)?;
    Ok((r.delta_lambda_nm, r.delta_nu_ghz))
}

/// Read a tag file (CSV or binary) as a list of TagStream objects.
#[pyfunction]
fn read_tags(path: &str) -> PyResult<Vec<PyTagStream>> {
    let streams = biphoton_core::io::read_tags(std::path::Path::new(path)).map_err(to_py_err)?;
    Ok(streams
        .into_iter()
        .map(|inner| PyTagStream { inner })
        .collect())
}

#[pymodule]
fn biphoton(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTagStream>()?;
    m.add_class::<PySimStreams>()?;
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyCoincidenceMatrix>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(bin_timestamps, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_extract, m)?)?;
    m.add_function(wrap_pyfunction!(peak_fwhm, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(mub_check, m)?)?;
    m.add_function(wrap_pyfunction!(key_rates, m)?)?;
    m.add_function(wrap_pyfunction!(certify_schmidt_number, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_mu, m)?)?;
    m.add_function(wrap_pyfunction!(h_min, m)?)?;
    m.add_function(wrap_pyfunction!(effective_resolution, m)?)?;
    m.add_function(wrap_pyfunction!(read_tags, m)?)?;
    m.add("BASIS_PAIRS", vec!["TT", "FF", "TF", "FT"])?;
    Ok(())
}

// Silence the unused-import lint for BasisPair used only in docs above.
#[allow(dead_code)]
fn _basis_pair_is_public(_: BasisPair) {}
