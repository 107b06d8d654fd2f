//! Python bindings: datasets, models, training, diagnostics and configured runs.

use std::path::PathBuf;

use cae_core::data as cdata;
use cae_core::diagnostics::{classify_components, DimensionReport};
use cae_core::experiment::{run_experiment, ExperimentConfig};
use cae_core::geometry::{tangent_frames as frames, NeighborhoodSpec, OrthoMode};
use cae_core::gradcheck::oracle_suite;
use cae_core::nn::ActivationKind;
use cae_core::training::{train_with_loss, Architecture, CaeModel, LossSpec, StopMode, TrainConfig};
use cae_core::CaeError;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: CaeError) -> PyErr {
    match e {
        CaeError::Numerical { .. } => PyArithmeticError::new_err(e.to_string()),
        CaeError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{name}`")))
}

/// Points in `R^n` with optional named label columns.
#[pyclass(name = "Dataset", module = "cae_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: cdata::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, labels = None, label_names = None))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<Vec<f64>>>, label_names: Option<Vec<String>>) -> PyResult<Self> {
        let base = cdata::Dataset::from_rows(&rows).map_err(err)?;
        let inner = match (labels, label_names) {
            (None, None) => base,
            (Some(l), Some(names)) => cdata::Dataset::with_labels(
                base.raw_points().to_vec(),
                base.dim(),
                l.into_iter().flatten().collect(),
                names,
            )
            .map_err(err)?,
            _ => return Err(PyValueError::new_err("labels and label_names go together")),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cdata::load_dataset(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        cdata::save_dataset(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label_names(&self) -> Vec<String> {
        self.inner.label_names().to_vec()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().map(<[f64]>::to_vec).collect()
    }

    fn label(&self, name: &str) -> PyResult<Vec<f64>> {
        let j = self
            .inner
            .label_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("no label `{name}`")))?;
        Ok(self.inner.label_column(j))
    }

    /// Isometric embedding into `R^n` by a random truncated unitary matrix.
    fn embed(&self, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: cdata::embed_unitary(&self.inner, n, seed).map_err(err)?,
        })
    }

    fn with_noise(&self, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: cdata::add_gaussian_noise(&self.inner, sigma, seed).map_err(err)?,
        })
    }
}

fn wrap(r: cae_core::Result<cdata::Dataset>) -> PyResult<PyDataset> {
    r.map(|inner| PyDataset { inner }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0, sigma = 0.0))]
fn gen_toy(n: usize, seed: u64, sigma: f64) -> PyResult<PyDataset> {
    wrap(cdata::gen_toy(n, seed, sigma))
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn gen_circle(n: usize, seed: u64) -> PyResult<PyDataset> {
    wrap(cdata::gen_circle(n, seed))
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn gen_s_curve(n: usize, seed: u64) -> PyResult<PyDataset> {
    wrap(cdata::gen_s_curve(n, seed))
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn gen_swiss_roll(n: usize, seed: u64) -> PyResult<PyDataset> {
    wrap(cdata::gen_swiss_roll(n, seed))
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn gen_hypersurface3(n: usize, seed: u64) -> PyResult<PyDataset> {
    wrap(cdata::gen_hypersurface3(n, seed))
}

/// Encoder/decoder pair with a latent layer of width `latent`.
#[pyclass(name = "Model", module = "cae_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: CaeModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (ambient, latent = None, depth = 5, width = 10, activations = None, seed = 0))]
    fn new(
        ambient: usize,
        latent: Option<usize>,
        depth: usize,
        width: usize,
        activations: Option<Vec<String>>,
        seed: u64,
    ) -> PyResult<Self> {
        let activations = match activations {
            Some(names) => names
                .iter()
                .map(|n| parse::<ActivationKind>("activation", n))
                .collect::<PyResult<Vec<_>>>()?,
            None => vec![ActivationKind::Tanh; depth],
        };
        let arch = Architecture {
            depth,
            width,
            activations,
            init_scale: 1.0,
        };
        Ok(Self {
            inner: CaeModel::init(&arch, ambient, latent.unwrap_or(ambient), seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CaeModel::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn ambient(&self) -> usize {
        self.inner.ambient()
    }

    #[getter]
    fn latent(&self) -> usize {
        self.inner.latent_width()
    }

    fn encode(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.encode(&x).map_err(err)
    }

    fn decode(&self, nu: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.decode(&nu).map_err(err)
    }

    fn reconstruct(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.reconstruct(&x).map_err(err)
    }

    /// Encoder input Jacobian at `x`, one row per latent.
    fn encoder_jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let jac = self.inner.encoder.forward_jacobian(&x).map_err(err)?;
        Ok((0..self.inner.latent_width()).map(|j| jac.row(j).to_vec()).collect())
    }
}

/// Trains `model` on `data` and returns the trained model, the trace and
/// the dimension report as a dict.
#[pyfunction]
#[pyo3(signature = (data, model, alpha = 1.0, ortho_mode = "l2", epochs = 1000, tolerance = 1e-4,
    learning_rate = 1e-3, batch_size = 0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    model: &PyModel,
    alpha: f64,
    ortho_mode: &str,
    epochs: usize,
    tolerance: f64,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<(PyModel, Py<PyAny>)> {
    let spec = LossSpec {
        alpha,
        ortho_mode: parse::<OrthoMode>("orthogonality mode", ortho_mode)?,
        ..LossSpec::default()
    };
    let cfg = TrainConfig {
        epochs_max: epochs,
        tolerance,
        learning_rate,
        batch_size,
        seed,
        stop_mode: StopMode::Tolerance,
        ..TrainConfig::default()
    };
    let (inner, trace) = py
        .detach(|| train_with_loss(&data.inner, model.inner.clone(), &spec, &cfg))
        .map_err(|a| err(a.error))?;
    let report = classify_components(&trace, cae_core::diagnostics::DEFAULT_COLLAPSE_THRESHOLD).map_err(err)?;
    let summary = serde_json::json!({ "trace": trace, "report": report });
    Ok((PyModel { inner }, to_py(py, &summary)?))
}

/// Classification of latent components from gradient norms over `data`.
#[pyfunction]
#[pyo3(signature = (model, data, threshold = 0.05))]
fn dimension_report(py: Python<'_>, model: &PyModel, data: &PyDataset, threshold: f64) -> PyResult<Py<PyAny>> {
    let norms = cae_core::training::mean_gradient_norms(
        &model.inner,
        &data.inner,
        &cae_core::training::GradientSpace::Ambient,
    )
    .map_err(err)?;
    let means = cae_core::diagnostics::latent_means(&model.inner, &data.inner).map_err(err)?;
    let report = DimensionReport::from_norms(&norms, means, threshold).map_err(err)?;
    to_py(py, &report)
}

/// Local PCA tangent bases from `k` nearest neighbors, one list of rows per point.
#[pyfunction]
#[pyo3(signature = (data, dimension, k = 10))]
fn tangent_frames(data: &PyDataset, dimension: usize, k: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let set = frames(&data.inner, NeighborhoodSpec::KNearest { k }, dimension).map_err(err)?;
    Ok(set.frames.into_iter().map(|f| f.basis).collect())
}

/// Runs a configured experiment (preset plus `key=value` overrides) into `out`.
#[pyfunction]
#[pyo3(signature = (preset, out, overrides = Vec::new(), config = None))]
fn run(
    py: Python<'_>,
    preset: Option<String>,
    out: PathBuf,
    overrides: Vec<String>,
    config: Option<String>,
) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::resolve(preset.as_deref(), config.as_deref(), &overrides).map_err(err)?;
    let outcome = py.detach(|| run_experiment(&cfg, &out)).map_err(err)?;
    to_py(py, &outcome.metrics)
}

/// Finite-difference oracle over random small models.
#[pyfunction]
#[pyo3(signature = (models = 50, jacobians = 50, seed = 0))]
fn gradcheck(py: Python<'_>, models: usize, jacobians: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let report = py.detach(|| oracle_suite(models, jacobians, seed)).map_err(err)?;
    let mut json = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json["passed"] = serde_json::json!(report.passed());
    to_py(py, &json)
}

#[pymodule]
fn cae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gen_toy, m)?)?;
    m.add_function(wrap_pyfunction!(gen_circle, m)?)?;
    m.add_function(wrap_pyfunction!(gen_s_curve, m)?)?;
    m.add_function(wrap_pyfunction!(gen_swiss_roll, m)?)?;
    m.add_function(wrap_pyfunction!(gen_hypersurface3, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_report, m)?)?;
    m.add_function(wrap_pyfunction!(tangent_frames, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
