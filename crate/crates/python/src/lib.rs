//! Python bindings: scenarios, STFT, extraction and SDR scoring.
//!
//! Waveforms cross the boundary as lists of channels, spectrograms as
//! `Spectrogram` objects (or nested `[f][t][m]` lists of complex numbers).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ivex_core::extract::SteeringSet;
use ivex_core::linalg::{CMat, C64};
use ivex_core::{self as core, Error, MixingMode, ScenarioSpec, StftConfig, Variant, Waveform};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::Shape(_) | Error::ConfigMismatch(_) | Error::TooShort { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn stft_config(frame_len: usize, hop: usize) -> PyResult<StftConfig> {
    StftConfig::new(frame_len, hop).map_err(to_py)
}

fn waveform(sample_rate: u32, channels: Vec<Vec<f64>>) -> PyResult<Waveform> {
    Waveform::new(sample_rate, channels).map_err(to_py)
}

/// Complex STFT coefficients, indexed (frequency, frame, channel).
#[pyclass(module = "ivex", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Spectrogram {
    inner: core::Spectrogram,
}

#[pymethods]
impl Spectrogram {
    #[staticmethod]
    fn from_list(data: Vec<Vec<Vec<C64>>>) -> PyResult<Self> {
        let nf = data.len();
        let nt = data.first().map_or(0, |d| d.len());
        let m = data.first().and_then(|d| d.first()).map_or(0, |d| d.len());
        if data.iter().any(|d| d.len() != nt || d.iter().any(|c| c.len() != m)) {
            return Err(PyValueError::new_err("ragged spectrogram"));
        }
        let flat = data.into_iter().flatten().flatten().collect();
        Ok(Self { inner: core::Spectrogram::from_vec(nf, nt, m, flat).map_err(to_py)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    fn get(&self, f: usize, t: usize, m: usize) -> PyResult<C64> {
        let (nf, nt, nm) = self.inner.shape();
        if f >= nf || t >= nt || m >= nm {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(f, t, m))
    }

    fn to_list(&self) -> Vec<Vec<Vec<C64>>> {
        let (nf, nt, _) = self.inner.shape();
        (0..nf).map(|f| (0..nt).map(|t| self.inner.frame(f, t).to_vec()).collect()).collect()
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    fn __repr__(&self) -> String {
        let (f, t, m) = self.inner.shape();
        format!("Spectrogram(freqs={f}, frames={t}, channels={m})")
    }
}

#[pyclass(module = "ivex", frozen)]
pub struct Scenario {
    inner: core::Scenario,
}

#[pymethods]
impl Scenario {
    #[getter]
    fn mixture(&self) -> Spectrogram {
        Spectrogram { inner: self.inner.mixture.clone() }
    }

    #[getter]
    fn images(&self) -> Vec<Spectrogram> {
        self.inner.images.iter().map(|s| Spectrogram { inner: s.clone() }).collect()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.spec.sample_rate
    }

    #[getter]
    fn num_sources(&self) -> usize {
        self.inner.spec.num_sources
    }

    #[getter]
    fn num_channels(&self) -> usize {
        self.inner.spec.num_channels
    }

    #[getter]
    fn noise_gain(&self) -> f64 {
        self.inner.noise_gain
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn mixture_waveform(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.mixture_waveform().map_err(to_py)?.channels)
    }

    fn image_waveforms(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        Ok(self.inner.image_waveforms().map_err(to_py)?.into_iter().map(|w| w.channels).collect())
    }

    /// Estimated steering vectors, `[f][m][k]`.
    fn steering(&self) -> Vec<Vec<Vec<C64>>> {
        let s = &self.inner.steering;
        (0..s.num_freqs())
            .map(|f| {
                let a = s.at(f);
                (0..a.nrows()).map(|m| a.row(m).iter().copied().collect()).collect()
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.spec;
        format!(
            "Scenario(sources={}, channels={}, noises={}, snr_db={}, samples={})",
            s.num_sources, s.num_channels, s.num_noises, s.snr_db, s.num_samples
        )
    }
}

#[pyfunction]
#[pyo3(signature = (sources, mics, noises=None, snr_db=0.0, duration=5.0, mixing="inst", seed=0, sample_rate=16000, frame_len=4096, hop=1024))]
#[allow(clippy::too_many_arguments)]
fn make_scenario(
    py: Python<'_>,
    sources: usize,
    mics: usize,
    noises: Option<usize>,
    snr_db: f64,
    duration: f64,
    mixing: &str,
    seed: u64,
    sample_rate: u32,
    frame_len: usize,
    hop: usize,
) -> PyResult<Scenario> {
    if sources == 0 || sources >= mics {
        return Err(PyValueError::new_err(format!("K < M required (K = {sources}, M = {mics})")));
    }
    let mixing: MixingMode = mixing.parse().map_err(to_py)?;
    let n = (duration * sample_rate as f64).round() as usize;
    let mut spec = ScenarioSpec::new(sources, mics, noises.unwrap_or(mics - sources), snr_db, n, seed)
        .with_mixing(mixing)
        .with_stft(stft_config(frame_len, hop)?);
    spec.sample_rate = sample_rate;
    let inner = py.detach(|| core::make_scenario(&spec)).map_err(to_py)?;
    Ok(Scenario { inner })
}

#[pyfunction]
#[pyo3(signature = (channels, frame_len=4096, hop=1024, sample_rate=16000))]
fn analyze(channels: Vec<Vec<f64>>, frame_len: usize, hop: usize, sample_rate: u32) -> PyResult<Spectrogram> {
    let cfg = stft_config(frame_len, hop)?;
    let inner = core::stft::analyze(&waveform(sample_rate, channels)?, &cfg).map_err(to_py)?;
    Ok(Spectrogram { inner })
}

#[pyfunction]
#[pyo3(signature = (spec, frame_len=4096, hop=1024, length=None, sample_rate=16000))]
fn synthesize(
    spec: &Spectrogram,
    frame_len: usize,
    hop: usize,
    length: Option<usize>,
    sample_rate: u32,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = stft_config(frame_len, hop)?;
    Ok(core::stft::synthesize(&spec.inner, &cfg, sample_rate, length).map_err(to_py)?.channels)
}

#[pyclass(module = "ivex", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
pub struct ExtractionConfig {
    algo: String,
    num_sources: usize,
    iterations: usize,
    power_iters: usize,
    exact_eigen: bool,
    trace_loading: f64,
    phi_clip: f64,
    beta: f64,
    early_stop: Option<f64>,
    threads: usize,
}

#[pymethods]
impl ExtractionConfig {
    #[new]
    #[pyo3(signature = (algo="ive-ip2-new", num_sources=1, iterations=50, power_iters=30, exact_eigen=false, trace_loading=1e-3, phi_clip=1e5, beta=0.1, early_stop=None, threads=1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        algo: &str,
        num_sources: usize,
        iterations: usize,
        power_iters: usize,
        exact_eigen: bool,
        trace_loading: f64,
        phi_clip: f64,
        beta: f64,
        early_stop: Option<f64>,
        threads: usize,
    ) -> Self {
        Self {
            algo: algo.to_string(),
            num_sources,
            iterations,
            power_iters,
            exact_eigen,
            trace_loading,
            phi_clip,
            beta,
            early_stop,
            threads,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "ExtractionConfig(algo='{}', num_sources={}, iterations={})",
            self.algo, self.num_sources, self.iterations
        )
    }
}

impl ExtractionConfig {
    fn to_core(&self) -> PyResult<core::ExtractionConfig> {
        let variant: Variant = self.algo.parse().map_err(to_py)?;
        Ok(core::ExtractionConfig {
            power_iters: self.power_iters,
            exact_eigen: self.exact_eigen,
            trace_loading: self.trace_loading,
            phi_clip: self.phi_clip,
            beta: self.beta,
            early_stop: self.early_stop,
            threads: self.threads,
            ..core::ExtractionConfig::new(variant, self.num_sources, self.iterations)
        })
    }
}

#[pyclass(module = "ivex", frozen)]
pub struct ExtractionResult {
    inner: core::extract::ExtractionOutput,
}

#[pymethods]
impl ExtractionResult {
    /// Spatial images of the extracted sources.
    #[getter]
    fn images(&self) -> Vec<Spectrogram> {
        self.inner.images.iter().map(|s| Spectrogram { inner: s.clone() }).collect()
    }

    #[getter]
    fn nll(&self) -> Vec<f64> {
        self.inner.trajectory.nll()
    }

    #[getter]
    fn stopped_early(&self) -> bool {
        self.inner.trajectory.stopped_early
    }

    /// One dict per outer iteration.
    fn trajectory<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .trajectory
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("iteration", r.iteration)?;
                d.set_item("nll", r.nll)?;
                d.set_item("surrogate", r.surrogate)?;
                d.set_item("wall_seconds", r.wall_seconds)?;
                d.set_item("stationarity", r.stationarity)?;
                Ok(d)
            })
            .collect()
    }

    /// Demixing matrices `[f][m][i]`; column i filters output i.
    fn demixing(&self) -> Vec<Vec<Vec<C64>>> {
        self.inner
            .demixing
            .matrices()
            .iter()
            .map(|w| (0..w.nrows()).map(|m| w.row(m).iter().copied().collect()).collect())
            .collect()
    }
}

fn steering_set(a: Vec<Vec<Vec<C64>>>) -> PyResult<SteeringSet> {
    let mats = a
        .into_iter()
        .map(|rows| {
            let m = rows.len();
            let l = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != l) {
                return Err(PyValueError::new_err("ragged steering matrix"));
            }
            Ok(CMat::from_fn(m, l, |i, j| rows[i][j]))
        })
        .collect::<PyResult<Vec<_>>>()?;
    SteeringSet::new(mats).map_err(to_py)
}

/// Runs the extraction on a mixture spectrogram; semi-ive takes `steering` as `[f][m][l]`.
#[pyfunction]
#[pyo3(signature = (mixture, config, steering=None))]
fn run_extraction(
    py: Python<'_>,
    mixture: &Spectrogram,
    config: &ExtractionConfig,
    steering: Option<Vec<Vec<Vec<C64>>>>,
) -> PyResult<ExtractionResult> {
    let cfg = config.to_core()?;
    let steering = steering.map(steering_set).transpose()?;
    let x = &mixture.inner;
    let inner = py.detach(|| core::run_extraction(x, &cfg, steering.as_ref())).map_err(to_py)?;
    Ok(ExtractionResult { inner })
}

#[pyfunction]
fn compute_sdr(est: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<f64> {
    core::compute_sdr(&waveform(1, est)?, &waveform(1, reference)?).map_err(to_py)
}

/// Best one-to-one matching of references to estimates; returns per-source SDR, mean and assignment.
#[pyfunction]
fn match_and_score<'py>(
    py: Python<'py>,
    estimates: Vec<Vec<Vec<f64>>>,
    references: Vec<Vec<Vec<f64>>>,
) -> PyResult<Bound<'py, PyDict>> {
    let est = estimates.into_iter().map(|c| waveform(1, c)).collect::<PyResult<Vec<_>>>()?;
    let refs = references.into_iter().map(|c| waveform(1, c)).collect::<PyResult<Vec<_>>>()?;
    let rep = core::match_and_score(&est, &refs).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("per_source", rep.per_source)?;
    d.set_item("mean", rep.mean)?;
    d.set_item("assignment", rep.assignment)?;
    Ok(d)
}

#[pymodule]
fn ivex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ALGORITHMS", Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    m.add_class::<Spectrogram>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<ExtractionConfig>()?;
    m.add_class::<ExtractionResult>()?;
    m.add_function(wrap_pyfunction!(make_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_extraction, m)?)?;
    m.add_function(wrap_pyfunction!(compute_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(match_and_score, m)?)?;
    Ok(())
}
