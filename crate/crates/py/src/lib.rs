//! Python bindings: the rotation type, block-space accounting, and the
//! protocol runners, mirroring the CLI surface.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use framekey::blocks::{seed_count, signal_amplitudes, BlockShape};
use framekey::harness::{
    run_experiment, run_sweep, selftest as harness_selftest, ExperimentConfig, RunResult,
};
use framekey::su2::{character as chi, wigner_d, HalfInt, Rotation};

fn to_py_err(err: framekey::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Unit quaternion representing a spatial rotation (double cover element).
#[pyclass(name = "Rotation", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyRotation {
    inner: Rotation,
}

#[pymethods]
impl PyRotation {
    #[new]
    fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        PyRotation { inner: Rotation::new(w, x, y, z) }
    }

    #[staticmethod]
    fn identity() -> Self {
        PyRotation { inner: Rotation::identity() }
    }

    #[staticmethod]
    fn from_axis_angle(axis: [f64; 3], omega: f64) -> Self {
        PyRotation { inner: Rotation::from_axis_angle(axis, omega) }
    }

    /// Haar-uniform rotation from a deterministic seed.
    #[staticmethod]
    fn haar(seed: u64) -> Self {
        let mut rng = framekey::harness::trial_rng(seed, 0);
        PyRotation { inner: Rotation::haar(&mut rng) }
    }

    #[getter]
    fn components(&self) -> (f64, f64, f64, f64) {
        (self.inner.w, self.inner.x, self.inner.y, self.inner.z)
    }

    fn compose(&self, other: &PyRotation) -> Self {
        PyRotation { inner: self.inner.compose(other.inner) }
    }

    fn inverse(&self) -> Self {
        PyRotation { inner: self.inner.inverse() }
    }

    fn class_angle(&self) -> f64 {
        self.inner.class_angle()
    }

    fn so3_angle(&self) -> f64 {
        self.inner.so3_angle()
    }

    fn so3_distance(&self, other: &PyRotation) -> f64 {
        self.inner.so3_distance(other.inner)
    }

    fn rotate_vector(&self, v: [f64; 3]) -> [f64; 3] {
        self.inner.rotate_vector(v)
    }

    fn __repr__(&self) -> String {
        format!(
            "Rotation(w={:.6}, x={:.6}, y={:.6}, z={:.6})",
            self.inner.w, self.inner.x, self.inner.y, self.inner.z
        )
    }
}

/// Character of the spin-j representation (`j2` is twice j).
#[pyfunction]
fn character(j2: u32, omega: f64) -> f64 {
    chi(HalfInt::from_twice(j2), omega)
}

/// Representation matrix entries at a rotation, as nested `(re, im)` rows.
#[pyfunction]
fn wigner_matrix(j2: u32, rotation: &PyRotation) -> Vec<Vec<(f64, f64)>> {
    let d = wigner_d(HalfInt::from_twice(j2), rotation.inner);
    let dim = HalfInt::from_twice(j2).dim();
    (0..dim)
        .map(|a| (0..dim).map(|b| (d.mat[(a, b)].re, d.mat[(a, b)].im)).collect())
        .collect()
}

/// Block decomposition of N spins: list of `(j2, dim, multiplicity)` with
/// the multiplicity as a decimal string (it overflows machine words fast).
#[pyfunction]
fn block_shape(n: usize) -> Vec<(u32, usize, String)> {
    BlockShape::for_spins(n)
        .blocks()
        .iter()
        .map(|b| (b.j.twice(), b.dim, b.mult.to_string()))
        .collect()
}

/// Normalized signal amplitudes per supported block.
#[pyfunction]
fn amplitudes(n: usize) -> PyResult<Vec<(u32, f64)>> {
    let amps = signal_amplitudes(&BlockShape::for_spins(n)).map_err(to_py_err)?;
    Ok(amps.into_iter().map(|(j, a)| (j.twice(), a)).collect())
}

/// Seed-space accounting: distinct sequences, per-block choice sum, and the
/// reported secret-bit cost.
#[pyfunction]
fn secret_bits(py: Python<'_>, n: usize) -> PyResult<Py<PyDict>> {
    let counts = seed_count(&BlockShape::for_spins(n)).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("sequences", counts.sequence_count.to_string())?;
    dict.set_item("choice_sum", counts.choice_sum.to_string())?;
    dict.set_item("secret_bits", counts.secret_bits)?;
    Ok(dict.into())
}

fn result_dict(py: Python<'_>, res: &RunResult) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("protocol", &res.protocol)?;
    dict.set_item("n", res.n)?;
    dict.set_item("trials", res.trials)?;
    dict.set_item("rms_error", res.rms_error)?;
    dict.set_item("rms_stderr", res.rms_stderr)?;
    dict.set_item("detection_rate", res.detection_rate)?;
    dict.set_item("alarm_rate", res.alarm_rate)?;
    dict.set_item("mismatch_rate", res.mismatch_rate)?;
    dict.set_item("chsh_s", res.chsh_s)?;
    dict.set_item("secret_sequences", &res.secret_sequences)?;
    dict.set_item("secret_bits", res.secret_bits)?;
    dict.set_item("master_seed", res.master_seed)?;
    dict.set_item("code_version", &res.code_version)?;
    Ok(dict.into())
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    protocol: &str,
    n: usize,
    trials: usize,
    rounds: usize,
    eve: &str,
    threshold: f64,
    k_sigma: f64,
    seed: u64,
) -> PyResult<ExperimentConfig> {
    let mut config = ExperimentConfig::new(protocol.parse().map_err(to_py_err)?);
    config.n = n;
    config.trials = trials;
    config.rounds = rounds;
    config.eve = eve.parse().map_err(to_py_err)?;
    config.threshold = threshold;
    config.k_sigma = k_sigma;
    config.master_seed = seed;
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

/// Runs one protocol deterministically; returns the result record as a
/// dict. `protocol` is one of separable, planar, optimal, bb84, ekert.
#[pyfunction]
#[pyo3(signature = (protocol, n, trials, rounds=400, eve="none", threshold=0.05, k_sigma=5.0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    protocol: &str,
    n: usize,
    trials: usize,
    rounds: usize,
    eve: &str,
    threshold: f64,
    k_sigma: f64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let config = build_config(protocol, n, trials, rounds, eve, threshold, k_sigma, seed)?;
    let res = run_experiment(&config).map_err(to_py_err)?;
    result_dict(py, &res)
}

/// Scaling sweep over a size list, with the fitted log-log slope.
#[pyfunction]
#[pyo3(signature = (protocol, n_list, trials, rounds=400, eve="none", threshold=0.05, k_sigma=5.0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    protocol: &str,
    n_list: Vec<usize>,
    trials: usize,
    rounds: usize,
    eve: &str,
    threshold: f64,
    k_sigma: f64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let base_n = *n_list.first().unwrap_or(&16);
    let config = build_config(protocol, base_n, trials, rounds, eve, threshold, k_sigma, seed)?;
    let result = run_sweep(&config, &n_list).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    let rows = PyList::empty(py);
    for row in &result.rows {
        let r = PyDict::new(py);
        r.set_item("protocol", &row.protocol)?;
        r.set_item("n", row.n)?;
        r.set_item("trials", row.trials)?;
        r.set_item("rms_error", row.rms_error)?;
        r.set_item("rms_stderr", row.rms_stderr)?;
        r.set_item("seed", row.seed)?;
        rows.append(r)?;
    }
    dict.set_item("rows", rows)?;
    dict.set_item("slope", result.slope)?;
    dict.set_item("intercept", result.intercept)?;
    dict.set_item("r_squared", result.r_squared)?;
    Ok(dict.into())
}

/// Oracle and invariant suites; returns `(name, passed, detail)` triples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, String)> {
    harness_selftest()
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn framekey_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRotation>()?;
    m.add_function(wrap_pyfunction!(character, m)?)?;
    m.add_function(wrap_pyfunction!(wigner_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(block_shape, m)?)?;
    m.add_function(wrap_pyfunction!(amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(secret_bits, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
