//! Python bindings: datasets, corruptions, training, evaluation and the
//! exact-engine checks. Configs cross the boundary as JSON strings in the
//! same shape the `semcorr report` command reads.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use semcorr::corruptions::{apply, CorruptionKind, CorruptionSpec};
use semcorr::exact::enumerate_16_predictors;
use semcorr::families::{self, ImageTaskConfig, NliTaskConfig};
use semcorr::harness::{self, default_model, ExperimentConfig};
use semcorr::learner::{LinearModel, PoeVariant};
use semcorr::scams::{self, ModelConfig, ScamConfig, ScamVariant};
use semcorr::Covariate;

fn py_err(e: semcorr::Error) -> PyErr {
    use semcorr::Error::*;
    match e {
        Divergence(_) | UndefinedWeight(_) | ZeroMass(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn from_json<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("bad {what}: {e}")))
}

fn spec(id: &str, seed: u64) -> PyResult<CorruptionSpec> {
    CorruptionKind::parse(id).and_then(|k| CorruptionSpec::new(k, seed)).map_err(py_err)
}

#[pyclass(module = "semcorr_py", frozen)]
struct Dataset {
    inner: families::Dataset,
}

#[pymethods]
impl Dataset {
    /// Colored-glyph image task with background nuisance.
    #[staticmethod]
    #[pyo3(signature = (rho, n, seed, flip=false, semantic_fidelity=None))]
    fn image_task(rho: f64, n: usize, seed: u64, flip: bool, semantic_fidelity: Option<f64>) -> PyResult<Self> {
        let mut cfg = ImageTaskConfig::default();
        if let Some(f) = semantic_fidelity {
            cfg.semantic_fidelity = f;
        }
        let inner = families::synthetic_image_task_with(&cfg, rho, n, seed, flip).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Premise/hypothesis task with a negation-word nuisance.
    #[staticmethod]
    #[pyo3(signature = (rho, n, seed, flip=false))]
    fn nli_task(rho: f64, n: usize, seed: u64, flip: bool) -> PyResult<Self> {
        let inner = families::synthetic_nli_task_with(&NliTaskConfig::default(), rho, n, seed, flip).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: harness::load_dataset(path.as_ref()).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        harness::save_dataset(&self.inner, path.as_ref()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    fn nuisances(&self) -> Vec<Option<usize>> {
        self.inner.examples.iter().map(|e| e.nuisance).collect()
    }

    fn groups(&self) -> Vec<Option<usize>> {
        self.inner.examples.iter().map(|e| e.group).collect()
    }

    /// The covariate of example `i`: `(height, width, channels, values)`
    /// for a grid, `(premise, hypothesis)` for a pair, a list for a vector.
    fn covariate<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyAny>> {
        let e = self.inner.examples.get(i).ok_or_else(|| PyValueError::new_err("index out of range"))?;
        Ok(match &e.x {
            Covariate::Grid(g) => (g.height(), g.width(), g.channels(), g.values().to_vec()).into_pyobject(py)?.into_any(),
            Covariate::Pair(p) => (p.premise.tokens().to_vec(), p.hypothesis.tokens().to_vec()).into_pyobject(py)?.into_any(),
            Covariate::Vector(v) => v.clone().into_pyobject(py)?.into_any(),
        })
    }

    /// Applies the corruption with the given id to every covariate.
    fn corrupt(&self, corruption: &str, seed: u64) -> PyResult<Self> {
        let s = spec(corruption, seed)?;
        let mut inner = self.inner.clone();
        for (i, e) in inner.examples.iter_mut().enumerate() {
            e.x = apply(&s, &e.x, i as u64).map_err(py_err)?;
        }
        Ok(Self { inner })
    }
}

#[pyclass(module = "semcorr_py", frozen)]
struct Model {
    inner: LinearModel,
}

fn model_config(data: &families::Dataset, config: Option<&str>, seed: u64) -> PyResult<ModelConfig> {
    let mut cfg = match config {
        Some(s) => from_json("model config", s)?,
        None => default_model(data).map_err(py_err)?,
    };
    cfg.opt.seed = seed;
    Ok(cfg)
}

fn variant(method: &str, lambda_up: usize, id_epochs: usize, gamma: f64) -> PyResult<ScamVariant> {
    let v = match method {
        "erm" => ScamVariant::Erm,
        "nurd" => ScamVariant::Nurd,
        "jtt" => ScamVariant::Jtt { lambda_up, id_epochs },
        "poe" => ScamVariant::Poe { objective: PoeVariant::Renormalized },
        "poe-display" => ScamVariant::Poe { objective: PoeVariant::Display },
        "dfl" => ScamVariant::Dfl { gamma },
        _ => return Err(PyValueError::new_err(format!("unknown method {method:?}"))),
    };
    v.validate().map_err(py_err)?;
    Ok(v)
}

#[pymethods]
impl Model {
    /// Plain ERM. `config` is a model config as JSON; the default depends
    /// on the covariate kind.
    #[staticmethod]
    #[pyo3(signature = (data, seed=0, config=None))]
    fn train_erm(py: Python<'_>, data: &Dataset, seed: u64, config: Option<&str>) -> PyResult<Self> {
        let cfg = model_config(&data.inner, config, seed)?;
        let inner = py.detach(|| scams::run_erm(&data.inner, &cfg)).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// A corruption-powered method: `erm`, `nurd`, `jtt`, `poe`,
    /// `poe-display` or `dfl`. The same model config is used for the
    /// biased and the main model.
    #[staticmethod]
    #[pyo3(signature = (data, method, corruption, seed=0, config=None, lambda_up=5, id_epochs=1, gamma=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn train_scam(
        py: Python<'_>,
        data: &Dataset,
        method: &str,
        corruption: &str,
        seed: u64,
        config: Option<&str>,
        lambda_up: usize,
        id_epochs: usize,
        gamma: f64,
    ) -> PyResult<Self> {
        let cfg = model_config(&data.inner, config, seed)?;
        let s = spec(corruption, seed)?;
        let sc = ScamConfig { variant: variant(method, lambda_up, id_epochs, gamma)?, corruption: s.clone(), biased: cfg.clone(), main: cfg };
        let inner = py.detach(|| scams::run_scam(&data.inner, &s, &sc)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: harness::load_model(path.as_ref()).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        harness::save_model(&self.inner, path.as_ref()).map_err(py_err)
    }

    fn predict_proba(&self, data: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        data.inner.examples.iter().map(|e| self.inner.predict_proba(&e.x).map_err(py_err)).collect()
    }

    fn predict(&self, data: &Dataset) -> PyResult<Vec<usize>> {
        data.inner.examples.iter().map(|e| self.inner.predict(&e.x).map_err(py_err)).collect()
    }

    /// Average, per-group and worst-group accuracy.
    fn evaluate<'py>(&self, py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let r = harness::evaluate(&self.inner, &data.inner).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("average", r.average)?;
        d.set_item("group_accuracies", r.group_accuracies)?;
        d.set_item("worst_group", r.worst_group)?;
        Ok(d)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
}

/// Runs the exact-engine checks and returns `(all_passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn verify_theory(seed: u64) -> PyResult<(bool, String)> {
    let r = harness::verify_theory(seed).map_err(py_err)?;
    Ok((r.all_passed(), r.to_text()))
}

/// The 16 deterministic predictors on the two-coordinate family, as
/// `(outputs, acc_rho0, acc_rho1, min)` tuples.
#[pyfunction]
fn predictor_table() -> PyResult<Vec<(Vec<i8>, f64, f64, f64)>> {
    let rows = enumerate_16_predictors().map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.outputs.to_vec(), r.acc_rho0, r.acc_rho1, r.min)).collect())
}

/// Canonical id of a corruption id, e.g. `"pr-04"` gives `"pr-4"`.
#[pyfunction]
fn corruption_id(id: &str) -> PyResult<String> {
    Ok(spec(id, 0)?.id())
}

/// Runs an experiment config (JSON) and returns the summary rows and
/// failures, both as JSON strings.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<(String, String)> {
    let cfg: ExperimentConfig = from_json("experiment config", config)?;
    let res = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    let json = |r: serde_json::Result<String>| r.map_err(|e| PyValueError::new_err(e.to_string()));
    Ok((json(serde_json::to_string(&res.summary))?, json(serde_json::to_string(&res.failures))?))
}

#[pymodule]
fn semcorr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(verify_theory, m)?)?;
    m.add_function(wrap_pyfunction!(predictor_table, m)?)?;
    m.add_function(wrap_pyfunction!(corruption_id, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
