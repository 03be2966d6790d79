//! Python bindings. Structured results come back as plain dicts.

use std::path::{Path, PathBuf};

use demcoh::bounds::{self, ApproxFormula, CoherenceParams, DpRegime, JointTable};
use demcoh::cli::config::{self as cfg, CuratorSpec, LearnerSpec, SubpopSpec};
use demcoh::concentration::{hypergeom_tail_bound as tail_bound, HypergeomParams};
use demcoh::data::{EmpiricalDistribution, Lens};
use demcoh::experiment::{audit_report, run_trials_with_threads, AuditConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(pydemcoh, DemcohError, PyException, "Raised with the JSON error object as its message.");

fn err(e: demcoh::Error) -> PyErr {
    DemcohError::new_err(e.to_json().to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| err(e.into()))
}

fn formula(name: &str) -> PyResult<ApproxFormula> {
    match name {
        "proof-backed" => Ok(ApproxFormula::ProofBacked),
        "printed265" => Ok(ApproxFormula::Printed265),
        "printed133" => Ok(ApproxFormula::Printed133),
        other => Err(DemcohError::new_err(format!("unknown formula `{other}`"))),
    }
}

#[pyfunction]
fn wasserstein1(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    let p = EmpiricalDistribution::new(p).map_err(err)?;
    let q = EmpiricalDistribution::new(q).map_err(err)?;
    Ok(demcoh::metric::wasserstein1(&p, &q))
}

#[pyfunction]
#[pyo3(signature = (zeta, alpha, beta, collection_size = 1, n = 2))]
fn gamma_from_maxinfo(
    py: Python<'_>,
    zeta: f64,
    alpha: f64,
    beta: f64,
    collection_size: u64,
    n: u64,
) -> PyResult<Bound<'_, PyAny>> {
    let p = CoherenceParams::new(alpha, beta, collection_size, n);
    to_py(py, &bounds::gamma_from_maxinfo(zeta, &p).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (epsilon, alpha, beta, n, collection_size = 1))]
fn gamma_pure_dp(
    py: Python<'_>,
    epsilon: f64,
    alpha: f64,
    beta: f64,
    n: u64,
    collection_size: u64,
) -> PyResult<Bound<'_, PyAny>> {
    let p = CoherenceParams::new(alpha, beta, collection_size, n);
    to_py(py, &bounds::gamma_pure_dp(epsilon, &p).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (epsilon, delta, alpha, beta, n, collection_size = 1, formula_name = "proof-backed"))]
#[allow(clippy::too_many_arguments)]
fn gamma_approx_dp<'py>(
    py: Python<'py>,
    epsilon: f64,
    delta: f64,
    alpha: f64,
    beta: f64,
    n: u64,
    collection_size: u64,
    formula_name: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = CoherenceParams::new(alpha, beta, collection_size, n);
    to_py(py, &bounds::gamma_approx_dp(epsilon, delta, &p, formula(formula_name)?).map_err(err)?)
}

#[pyfunction]
fn maxinfo_pure_dp(epsilon: f64, n: u64, failure: f64) -> PyResult<f64> {
    Ok(bounds::maxinfo_pure_dp(epsilon, n, failure).map_err(err)?.zeta)
}

#[pyfunction]
#[pyo3(signature = (target_gamma, alpha, beta, n, collection_size = 1, delta = None, formula_name = "proof-backed"))]
#[allow(clippy::too_many_arguments)]
fn max_epsilon_for<'py>(
    py: Python<'py>,
    target_gamma: f64,
    alpha: f64,
    beta: f64,
    n: u64,
    collection_size: u64,
    delta: Option<f64>,
    formula_name: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = CoherenceParams::new(alpha, beta, collection_size, n);
    let regime = match delta {
        None => DpRegime::Pure,
        Some(delta) => DpRegime::Approx {
            delta,
            formula: formula(formula_name)?,
        },
    };
    to_py(py, &bounds::max_epsilon_for(target_gamma, &p, regime).map_err(err)?)
}

#[pyfunction]
fn hypergeom_tail_bound(b: u64, a: u64, s: u64, dev: f64) -> PyResult<f64> {
    let params = HypergeomParams::new(b, a, s).map_err(err)?;
    Ok(tail_bound(&params, dev).map_err(err)?.probability)
}

#[pyfunction]
#[pyo3(signature = (table, beta_level = 0.0))]
fn exact_max_information(table: Vec<Vec<f64>>, beta_level: f64) -> PyResult<f64> {
    let joint = JointTable::new(table).map_err(err)?;
    bounds::exact_max_information(&joint, beta_level).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (k, trials, confidence = 0.95))]
fn clopper_pearson(k: u64, trials: u64, confidence: f64) -> PyResult<(f64, f64)> {
    demcoh::stats::clopper_pearson(k, trials, confidence).map_err(err)
}

/// Runs the audit described by a JSON config file and returns the report.
#[pyfunction]
#[pyo3(signature = (config_path, threads = None))]
fn run_audit(py: Python<'_>, config_path: PathBuf, threads: Option<usize>) -> PyResult<Bound<'_, PyAny>> {
    let config = cfg::RunConfig::from_path(&config_path).map_err(err)?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let report = py
        .detach(|| cfg::run_audit(&config, &base, threads))
        .map_err(err)?;
    to_py(py, &report)
}

/// A loaded tabular dataset.
#[pyclass(frozen)]
struct Dataset {
    inner: demcoh::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (path, null_token = "NULL"))]
    fn from_csv(path: PathBuf, null_token: &str) -> PyResult<Self> {
        Ok(Dataset {
            inner: cfg::load_csv(&path, null_token).map_err(err)?,
        })
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.schema().names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row `i` as a list of strings, with `None` for nulls.
    fn row(&self, i: usize) -> PyResult<Vec<Option<String>>> {
        let r = self
            .inner
            .records()
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        Ok(r.values()
            .iter()
            .map(|v| v.as_bytes().map(|b| String::from_utf8_lossy(b).into_owned()))
            .collect())
    }

    /// Runs the experiment with curator and learner given as dicts in the
    /// config-file format, e.g. `{"name": "clear_release"}`.
    #[pyo3(signature = (curator, learner, alpha, gamma, trials, seed, lens = None, subpopulations = None, threads = None))]
    #[allow(clippy::too_many_arguments)]
    fn audit<'py>(
        &self,
        py: Python<'py>,
        curator: &Bound<'py, PyAny>,
        learner: &Bound<'py, PyAny>,
        alpha: f64,
        gamma: u64,
        trials: u64,
        seed: u64,
        lens: Option<Vec<String>>,
        subpopulations: Option<Vec<(String, String)>>,
        threads: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let schema = self.inner.schema();
        let curator_spec: CuratorSpec = from_py(curator)?;
        let learner_spec: LearnerSpec = from_py(learner)?;
        let subpops: Vec<SubpopSpec> = subpopulations
            .unwrap_or_default()
            .into_iter()
            .map(|(name, predicate)| SubpopSpec { name, predicate })
            .collect();
        let c = cfg::build_curator(&curator_spec, schema).map_err(err)?;
        let l = cfg::build_learner(&learner_spec, schema).map_err(err)?;
        let collection = cfg::build_collection(&subpops, schema, cfg::DEFAULT_NULL_TOKEN).map_err(err)?;
        let lens = match &lens {
            Some(names) => Lens::from_names(schema, names).map_err(err)?,
            None => Lens::full(schema.arity()),
        };
        let echo = serde_json::json!({
            "alpha": alpha,
            "gamma": gamma,
            "trials": trials,
            "seed": seed,
            "curator": curator_spec,
            "learner": learner_spec,
            "lens": lens.names(schema),
            "collection": collection.names(),
            "records": self.inner.len(),
        });
        let config = AuditConfig::new(alpha, gamma, trials, seed, collection, lens);
        let audit = py
            .detach(|| run_trials_with_threads(c.as_ref(), l.as_ref(), &self.inner, &config, threads))
            .map_err(err)?;
        to_py(py, &audit_report(&audit, echo, gamma, None))
    }
}

#[pymodule]
fn pydemcoh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DemcohError", m.py().get_type::<DemcohError>())?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_from_maxinfo, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_pure_dp, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_approx_dp, m)?)?;
    m.add_function(wrap_pyfunction!(maxinfo_pure_dp, m)?)?;
    m.add_function(wrap_pyfunction!(max_epsilon_for, m)?)?;
    m.add_function(wrap_pyfunction!(hypergeom_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exact_max_information, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson, m)?)?;
    m.add_function(wrap_pyfunction!(run_audit, m)?)?;
    Ok(())
}
