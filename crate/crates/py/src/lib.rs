//! Python bindings: catalogs, spectrum and trace synthesis, the survey,
//! lifetime and hole analyses, Zeeman lines, matching and the cavity
//! calculator. Reports come back as plain dicts and lists.

use ple_core::analysis::{self, SurveyOptions};
use ple_core::cavity::{CavityDesign, CavityInputs};
use ple_core::dynamics::{self, HoleBurnConfig, TimeTrace, ZeemanSite};
use ple_core::model::{read_catalog_csv, write_catalog_csv};
use ple_core::reproduce::{self, ReproduceOptions};
use ple_core::{synth, DetectorModel, ScanProtocol};
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(ple_py, AnalysisError, PyRuntimeError, "An analysis found no usable result (no hole, singular fit, too few points).");

fn to_py(e: ple_core::Error) -> PyErr {
    use ple_core::Error as E;
    match e {
        E::InsufficientData { .. } | E::RankDeficient | E::NoHole { .. } | E::ModelSelection(_) => AnalysisError::new_err(e.to_string()),
        E::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializable value to Python builtins through JSON.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Sorted list of site resonances.
#[pyclass(module = "ple_py", frozen)]
pub struct Catalog {
    inner: ple_core::Catalog,
}

#[pymethods]
impl Catalog {
    /// The bundled Table 1 catalog (70 lines).
    #[staticmethod]
    fn table1() -> Self {
        Catalog { inner: ple_core::Catalog::table1() }
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Catalog { inner: read_catalog_csv(file).map_err(to_py)? })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        write_catalog_csv(&self.inner, file).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Catalog({} lines)", self.inner.len())
    }

    fn wavelengths_nm(&self) -> Vec<f64> {
        self.inner.iter().map(|r| r.center_wavelength_nm).collect()
    }

    fn frequencies_hz(&self) -> Vec<f64> {
        self.inner.iter().map(|r| r.center_frequency_hz()).collect()
    }

    /// All lines as dicts.
    fn resonances(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.inner.resonances())
    }

    #[pyo3(signature = (wavelength_nm, tolerance_nm = 5e-4))]
    fn find(&self, py: Python<'_>, wavelength_nm: f64, tolerance_nm: f64) -> PyResult<Py<PyAny>> {
        to_object(py, &self.inner.find(wavelength_nm, tolerance_nm))
    }
}

/// Counts per scan step with the protocol and detector that produced them.
#[pyclass(module = "ple_py", frozen)]
pub struct Spectrum {
    inner: synth::Spectrum,
}

#[pymethods]
impl Spectrum {
    #[new]
    #[pyo3(signature = (frequencies_hz, counts, repetitions = 1000))]
    fn new(frequencies_hz: Vec<f64>, counts: Vec<f64>, repetitions: u32) -> PyResult<Self> {
        let protocol = ScanProtocol { repetitions, ..ScanProtocol::default() };
        let inner = synth::Spectrum::new(frequencies_hz, counts, protocol, DetectorModel::default(), None).map_err(to_py)?;
        Ok(Spectrum { inner })
    }

    #[getter]
    fn frequencies_hz(&self) -> Vec<f64> {
        self.inner.frequencies_hz().to_vec()
    }

    #[getter]
    fn counts(&self) -> Vec<f64> {
        self.inner.counts().to_vec()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    fn counts_per_pulse(&self) -> Vec<f64> {
        self.inner.counts_per_pulse()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Survey spectrum of `catalog`; Poisson-sampled when `seed` is given.
#[pyfunction]
#[pyo3(signature = (catalog, seed = None, start_nm = None, stop_nm = None, repetitions = None))]
fn simulate_spectrum(
    catalog: &Catalog,
    seed: Option<u64>,
    start_nm: Option<f64>,
    stop_nm: Option<f64>,
    repetitions: Option<u32>,
) -> PyResult<Spectrum> {
    let d = ScanProtocol::default();
    let protocol = ScanProtocol {
        start_wavelength_nm: start_nm.unwrap_or(d.start_wavelength_nm),
        stop_wavelength_nm: stop_nm.unwrap_or(d.stop_wavelength_nm),
        repetitions: repetitions.unwrap_or(d.repetitions),
        ..d
    };
    let expected = synth::expected_spectrum(&catalog.inner, &protocol, &DetectorModel::default()).map_err(to_py)?;
    let inner = match seed {
        Some(s) => synth::sample_spectrum(&expected, s).map_err(to_py)?,
        None => expected,
    };
    Ok(Spectrum { inner })
}

/// Detects and fits every line; returns (catalog, per-peak report).
#[pyfunction]
#[pyo3(signature = (spectrum, min_prominence = analysis::SURVEY_MIN_PROMINENCE))]
fn analyze_spectrum(py: Python<'_>, spectrum: &Spectrum, min_prominence: f64) -> PyResult<(Catalog, Py<PyAny>)> {
    let options = SurveyOptions { min_prominence, ..SurveyOptions::default() };
    let result = py.detach(|| analysis::survey_pipeline(&spectrum.inner, &options)).map_err(to_py)?;
    let lines = to_object(py, &result.lines)?;
    Ok((Catalog { inner: result.catalog }, lines))
}

/// On- and off-resonant decay traces (counts per 10 µs bin) for one catalog line.
#[pyfunction]
#[pyo3(signature = (catalog, wavelength_nm, seed = None, duration_s = 5e-3, repetitions = 1000))]
fn simulate_decay(
    catalog: &Catalog,
    wavelength_nm: f64,
    seed: Option<u64>,
    duration_s: f64,
    repetitions: u32,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let site =
        catalog.inner.find(wavelength_nm, 5e-4).ok_or_else(|| PyValueError::new_err(format!("no catalog line at {wavelength_nm} nm")))?;
    let protocol = ScanProtocol { repetitions, ..ScanProtocol::default() };
    let detector = DetectorModel::default();
    let mut out = Vec::new();
    for (stream, f) in [site.center_frequency_hz(), analysis::off_resonant_frequency(site)].into_iter().enumerate() {
        let expected = dynamics::decay_trace_at(&catalog.inner, f, &detector, &protocol, duration_s).map_err(to_py)?;
        let trace = match seed {
            Some(s) => dynamics::sample_trace(&expected, s.wrapping_mul(2).wrapping_add(stream as u64)),
            None => expected,
        };
        out.push(trace.counts);
    }
    let off = out.pop().unwrap_or_default();
    let on = out.pop().unwrap_or_default();
    Ok((on, off))
}

/// Background-subtracted lifetime report for two traces of equal binning.
#[pyfunction]
#[pyo3(signature = (on, off, bin_width_s = 10e-6))]
fn extract_lifetime(py: Python<'_>, on: Vec<f64>, off: Vec<f64>, bin_width_s: f64) -> PyResult<Py<PyAny>> {
    let protocol = ScanProtocol::default();
    let on = TimeTrace::new(bin_width_s, on, protocol).map_err(to_py)?;
    let off = TimeTrace::new(bin_width_s, off, protocol).map_err(to_py)?;
    let result = analysis::extract_lifetime(&on, &off).map_err(to_py)?;
    to_object(py, &result)
}

/// Hole profile for a homogeneous linewidth. Extra `HoleBurnConfig` fields
/// may be passed as a JSON object in `config_json`.
#[pyfunction]
#[pyo3(signature = (homogeneous_fwhm_hz, lifetime_s = 0.764e-3, delay_s = 0.0, config_json = None))]
fn simulate_hole(
    py: Python<'_>,
    homogeneous_fwhm_hz: f64,
    lifetime_s: f64,
    delay_s: f64,
    config_json: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let cfg = match config_json {
        Some(text) => from_json(text)?,
        None => HoleBurnConfig { delay_s, ..HoleBurnConfig::weak_pump(homogeneous_fwhm_hz, lifetime_s) },
    };
    let profile = py.detach(|| dynamics::simulate_hole(&cfg)).map_err(to_py)?;
    to_object(py, &profile)
}

/// Hole FWHM and homogeneous linewidth bound from a hole profile.
#[pyfunction]
fn analyze_hole(py: Python<'_>, detunings_hz: Vec<f64>, signal: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_object(py, &analysis::hole_to_homogeneous(&detunings_hz, &signal).map_err(to_py)?)
}

/// Zeeman components as (offset Hz, intensity). `site_json` is a ZeemanSite
/// document; the six-line example site is used when omitted.
#[pyfunction]
#[pyo3(signature = (field_t, polarization_rad = 0.0, site_json = None))]
fn zeeman_lines(field_t: f64, polarization_rad: f64, site_json: Option<&str>) -> PyResult<Vec<(f64, f64)>> {
    let site: ZeemanSite = match site_json {
        Some(text) => from_json(text)?,
        None => reproduce::six_line_site(),
    };
    let lines = dynamics::zeeman_lines(&site, field_t, polarization_rad).map_err(to_py)?;
    Ok(lines.into_iter().map(|l| (l.offset_hz, l.intensity)).collect())
}

#[pyfunction]
#[pyo3(signature = (catalog, electrical_hz, tolerance_hz = analysis::DEFAULT_MATCH_TOLERANCE_HZ))]
fn match_resonances(py: Python<'_>, catalog: &Catalog, electrical_hz: Vec<f64>, tolerance_hz: f64) -> PyResult<Py<PyAny>> {
    to_object(py, &analysis::match_resonances(&catalog.inner, &electrical_hz, tolerance_hz).map_err(to_py)?)
}

/// Cavity design for a target Purcell factor.
#[pyfunction]
#[pyo3(signature = (purcell_factor, gamma_bulk_hz, wavelength_nm = 1540.0, refractive_index = ple_core::cavity::SILICON_INDEX))]
fn purcell(py: Python<'_>, purcell_factor: f64, gamma_bulk_hz: f64, wavelength_nm: f64, refractive_index: f64) -> PyResult<Py<PyAny>> {
    let design = CavityDesign::new(CavityInputs { wavelength_nm, refractive_index, gamma_bulk_hz, purcell_factor }).map_err(to_py)?;
    to_object(py, &design)
}

#[pyfunction]
fn detection_efficiency(count_rate_hz: f64, dark_rate_hz: f64, photon_rate_hz: f64) -> PyResult<f64> {
    analysis::detection_efficiency(count_rate_hz, dark_rate_hz, photon_rate_hz).map_err(to_py)
}

/// Runs the acceptance checks; returns one dict per criterion.
#[pyfunction]
#[pyo3(signature = (lifetime_seeds = 20, property_cases = 200))]
fn run_acceptance(py: Python<'_>, lifetime_seeds: u64, property_cases: usize) -> PyResult<Py<PyAny>> {
    let options = ReproduceOptions { lifetime_seeds, property_cases, ..ReproduceOptions::default() };
    let outcomes = py.detach(|| reproduce::run_all(&options));
    to_object(py, &outcomes)
}

#[pymodule]
fn ple_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds every class and function of the extension to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Catalog>()?;
    m.add_class::<Spectrum>()?;
    m.add("AnalysisError", m.py().get_type::<AnalysisError>())?;
    m.add_function(wrap_pyfunction!(simulate_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_decay, m)?)?;
    m.add_function(wrap_pyfunction!(extract_lifetime, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_hole, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_hole, m)?)?;
    m.add_function(wrap_pyfunction!(zeeman_lines, m)?)?;
    m.add_function(wrap_pyfunction!(match_resonances, m)?)?;
    m.add_function(wrap_pyfunction!(purcell, m)?)?;
    m.add_function(wrap_pyfunction!(detection_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    Ok(())
}
