//! Python bindings for the beam tracking core.
//!
//! Complex numbers cross the boundary as Python `complex`; offsets as a list
//! of three `(d1, d2)` pairs.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use beamtrack_core::array_model::{self, observe, ChannelParams, DirectionParams, PilotConfig, ProbeSet};
use beamtrack_core::config::ScenarioConfig;
use beamtrack_core::fisher_crlb;
use beamtrack_core::offset_search::{self, OptimizerConfig, SearchObjective, OBJECTIVE_BETA, REFERENCE_OFFSETS};
use beamtrack_core::sim_harness::{self, MseCurve};
use beamtrack_core::tracker::{self, Codebook, StepSchedule, TrackerState};
use beamtrack_core::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::InvalidParameter(_) | Error::Config(_) | Error::Format { .. } | Error::OutsideMainLobe(..) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

type Offsets = [(f64, f64); 3];

fn offsets_or_reference(offsets: Option<Offsets>) -> [DirectionParams; 3] {
    offsets.map_or(REFERENCE_OFFSETS, |o| o.map(|(a, b)| DirectionParams::new(a, b)))
}

fn offsets_out(d: &[DirectionParams; 3]) -> Offsets {
    d.map(|p| (p.x1, p.x2))
}

/// Rectangular array with element spacings given in wavelengths.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct ArrayGeometry {
    inner: array_model::ArrayGeometry,
}

#[pymethods]
impl ArrayGeometry {
    #[new]
    #[pyo3(signature = (m, n, d1=0.5, d2=0.5))]
    fn new(m: usize, n: usize, d1: f64, d2: f64) -> PyResult<Self> {
        array_model::ArrayGeometry::new(m, n, d1, d2)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Steering vector in row-major element order.
    fn steering_vector(&self, x1: f64, x2: f64) -> Vec<Complex64> {
        array_model::steering_vector(DirectionParams::new(x1, x2), &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayGeometry(m={}, n={}, d1={}, d2={})",
            self.inner.m(),
            self.inner.n(),
            self.inner.d1(),
            self.inner.d2()
        )
    }
}

/// 4x4 Fisher information over `[Re beta, Im beta, x1, x2]` for probes centered on `x`.
#[pyfunction]
#[pyo3(signature = (geometry, beta, x1, x2, snr_db=0.0, offsets=None))]
fn fisher_matrix(
    geometry: ArrayGeometry,
    beta: Complex64,
    x1: f64,
    x2: f64,
    snr_db: f64,
    offsets: Option<Offsets>,
) -> PyResult<Vec<Vec<f64>>> {
    let pilot = PilotConfig::from_snr_db(snr_db).map_err(to_py)?;
    let psi = ChannelParams::new(beta, DirectionParams::new(x1, x2));
    let probes = ProbeSet::new(psi.x, offsets_or_reference(offsets), &geometry.inner);
    let f = fisher_crlb::fisher_matrix(&psi, &probes, &pilot).entries;
    Ok((0..4).map(|i| (0..4).map(|j| f[(i, j)]).collect()).collect())
}

/// Per-element channel CRLB after `k` slots.
#[pyfunction]
#[pyo3(signature = (geometry, snr_db=0.0, offsets=None, k=1))]
fn crlb(geometry: ArrayGeometry, snr_db: f64, offsets: Option<Offsets>, k: u64) -> PyResult<f64> {
    let pilot = PilotConfig::from_snr_db(snr_db).map_err(to_py)?;
    let psi = ChannelParams::new(OBJECTIVE_BETA, DirectionParams::ZERO);
    let probes = ProbeSet::new(psi.x, offsets_or_reference(offsets), &geometry.inner);
    fisher_crlb::crlb(&psi, &probes, &pilot, k)
        .map(|c| c.value)
        .map_err(to_py)
}

/// Large-array limit of `MN * crlb`.
#[pyfunction]
#[pyo3(signature = (snr_db=0.0, offsets=None, k=1))]
fn asymptotic_crlb(snr_db: f64, offsets: Option<Offsets>, k: u64) -> PyResult<f64> {
    let pilot = PilotConfig::from_snr_db(snr_db).map_err(to_py)?;
    fisher_crlb::asymptotic_crlb(OBJECTIVE_BETA, &offsets_or_reference(offsets), &pilot, k).map_err(to_py)
}

#[pyfunction]
fn reference_offsets() -> Offsets {
    offsets_out(&REFERENCE_OFFSETS)
}

/// Minimizes the bound over the probing offsets. Uses the large-array
/// objective when `geometry` is `None`. Returns `(offsets, objective)`.
#[pyfunction]
#[pyo3(signature = (geometry=None, starts=32))]
fn search_offsets(py: Python<'_>, geometry: Option<ArrayGeometry>, starts: usize) -> PyResult<(Offsets, f64)> {
    let objective = geometry.map_or(SearchObjective::Asymptotic, |g| SearchObjective::Finite(g.inner));
    let pilot = PilotConfig::from_snr_db(0.0).map_err(to_py)?;
    let config = OptimizerConfig {
        starts,
        ..OptimizerConfig::default()
    };
    let found = py
        .detach(|| offset_search::search_offsets(&objective, &pilot, &config))
        .map_err(to_py)?;
    Ok((offsets_out(&found.deltas), found.objective))
}

/// Single-channel tracker: coarse sweep, then one update per slot.
#[pyclass]
struct Tracker {
    geom: array_model::ArrayGeometry,
    pilot: PilotConfig,
    state: TrackerState,
    rng: ChaCha8Rng,
}

#[pymethods]
impl Tracker {
    /// `step` is `"diminishing"` (`epsilon / (k + k0)`) or `"constant"` (`value`).
    #[new]
    #[pyo3(signature = (geometry, snr_db=0.0, seed=0, step="diminishing", epsilon=1.0, k0=0.0, value=0.7, offsets=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        geometry: ArrayGeometry,
        snr_db: f64,
        seed: u64,
        step: &str,
        epsilon: f64,
        k0: f64,
        value: f64,
        offsets: Option<Offsets>,
    ) -> PyResult<Self> {
        let schedule = match step {
            "diminishing" => StepSchedule::Diminishing { epsilon, k0 },
            "constant" => StepSchedule::Constant { value },
            other => return Err(PyValueError::new_err(format!("unknown step schedule {other:?}"))),
        };
        schedule.validate().map_err(to_py)?;
        let start = ChannelParams::new(Complex64::new(1.0, 0.0), DirectionParams::ZERO);
        Ok(Self {
            geom: geometry.inner,
            pilot: PilotConfig::from_snr_db(snr_db).map_err(to_py)?,
            state: TrackerState::new(start, schedule, offsets_or_reference(offsets)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Initializes the estimate with a noisy sweep against the true channel.
    fn sweep(&mut self, beta: Complex64, x1: f64, x2: f64) -> PyResult<(Complex64, f64, f64)> {
        let truth = ChannelParams::new(beta, DirectionParams::new(x1, x2));
        let codebook = Codebook::default_for(&self.geom);
        let psi = tracker::coarse_sweep(&self.geom, &codebook, &self.pilot, &truth, &mut self.rng).map_err(to_py)?;
        self.state = TrackerState::new(psi, self.state.schedule, self.state.offsets);
        Ok(self.estimate())
    }

    /// Current `(beta, x1, x2)`.
    fn estimate(&self) -> (Complex64, f64, f64) {
        let p = self.state.psi_hat;
        (p.beta, p.x.x1, p.x.x2)
    }

    #[getter]
    fn slot(&self) -> u64 {
        self.state.slot
    }

    /// Three probe beamformers for the next slot.
    fn probes(&self) -> Vec<Vec<Complex64>> {
        let p = tracker::make_probes(&self.state, &self.geom);
        (0..3).map(|i| p.column(i).to_vec()).collect()
    }

    /// Applies one update with externally measured observations.
    fn update(&mut self, y: [Complex64; 3]) -> PyResult<(Complex64, f64, f64)> {
        self.state = tracker::update(&self.state, &y, &self.pilot, &self.geom).map_err(to_py)?;
        Ok(self.estimate())
    }

    /// Simulates the three noisy observations of the true channel and updates.
    fn step(&mut self, beta: Complex64, x1: f64, x2: f64) -> PyResult<(Complex64, f64, f64)> {
        let truth = ChannelParams::new(beta, DirectionParams::new(x1, x2));
        let probes = tracker::make_probes(&self.state, &self.geom);
        let y = observe(&truth, &probes, &self.pilot, &mut self.rng);
        self.state = tracker::update_with_probes(&self.state, &probes, &y, &self.pilot).map_err(to_py)?;
        Ok(self.estimate())
    }
}

fn curve_to_dict<'py>(py: Python<'py>, curve: &MseCurve) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("seed", curve.seed)?;
    out.set_item("converged_trials", curve.converged_trials)?;
    out.set_item("slot", curve.records.iter().map(|r| r.slot).collect::<Vec<_>>())?;
    out.set_item("mse_mean", curve.records.iter().map(|r| r.mse_mean).collect::<Vec<_>>())?;
    out.set_item("mse_converged", curve.records.iter().map(|r| r.mse_converged).collect::<Vec<_>>())?;
    out.set_item("crlb_ref", curve.records.iter().map(|r| r.crlb_ref).collect::<Vec<_>>())?;
    out.set_item(
        "diverged_fraction",
        curve.records.iter().map(|r| r.diverged_fraction).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Runs the static experiment from flat TOML config text. Returns a dict of per-slot columns.
#[pyfunction]
#[pyo3(signature = (config="", seed=None))]
fn run_static<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ScenarioConfig::from_toml_str(config).map_err(to_py)?;
    cfg.seed = seed.or(cfg.seed);
    let scenario = cfg.to_static().map_err(to_py)?;
    let curve = py.detach(|| sim_harness::run_static(&scenario)).map_err(to_py)?;
    curve_to_dict(py, &curve)
}

/// Runs the random-walk experiment from flat TOML config text.
#[pyfunction]
#[pyo3(signature = (config="", seed=None))]
fn run_dynamic<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ScenarioConfig::from_toml_str(config).map_err(to_py)?;
    cfg.seed = seed.or(cfg.seed);
    let scenario = cfg.to_dynamic().map_err(to_py)?;
    let curve = py.detach(|| sim_harness::run_dynamic(&scenario)).map_err(to_py)?;
    curve_to_dict(py, &curve)
}

#[pymodule]
fn beamtrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ArrayGeometry>()?;
    m.add_class::<Tracker>()?;
    m.add_function(wrap_pyfunction!(fisher_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(crlb, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_crlb, m)?)?;
    m.add_function(wrap_pyfunction!(reference_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(search_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(run_static, m)?)?;
    m.add_function(wrap_pyfunction!(run_dynamic, m)?)?;
    Ok(())
}
