//! Python bindings. Compound reports (traces, forests, experiment records)
//! cross the boundary as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use selfish_matching::flipforest::{self, AbstractTree, FlipForest};
use selfish_matching::greedy::{self, FlipTrace};
use selfish_matching::harness::{self, EpsilonPolicy, GeneratorSpec};
use selfish_matching::instances::{self, GapDistribution};
use selfish_matching::matchings::{self, DEFAULT_MAX_ENUM};
use selfish_matching::Error;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `(u, v, w_uv, w_u, w_v)`
type UnstableRow = (usize, usize, f64, f64, f64);

#[pyclass(name = "MetricInstance", module = "selfish_matching", frozen)]
struct PyInstance {
    inner: instances::MetricInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn rt(k: u32) -> PyResult<Self> {
        instances::MetricInstance::gen_rt(k).map(|inner| Self { inner }).map_err(err)
    }

    /// `epsilon=None` uses `1 / (16 alpha k)`.
    #[staticmethod]
    #[pyo3(signature = (k, alpha, epsilon=None))]
    fn rt_alpha(k: u32, alpha: f64, epsilon: Option<f64>) -> PyResult<Self> {
        let eps = epsilon.unwrap_or_else(|| instances::default_epsilon(k, alpha));
        instances::MetricInstance::gen_rt_alpha(k, alpha, eps).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n_pairs, seed, gaps="uniform"))]
    fn random_line(n_pairs: usize, seed: u64, gaps: &str) -> PyResult<Self> {
        let dist = match gaps {
            "uniform" => GapDistribution::UniformUnit,
            "exp" => GapDistribution::Exponential,
            other => return Err(PyValueError::new_err(format!("unknown gap distribution {other:?}"))),
        };
        instances::MetricInstance::gen_random_line(n_pairs, seed, dist).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n_pairs, seed, dimension=2, bipartite=false))]
    fn random_euclidean(n_pairs: usize, seed: u64, dimension: usize, bipartite: bool) -> PyResult<Self> {
        instances::MetricInstance::gen_random_euclidean(n_pairs, seed, dimension, bipartite)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn from_line(positions: Vec<f64>) -> PyResult<Self> {
        instances::MetricInstance::from_line(positions).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn complete(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        instances::MetricInstance::build_complete(&rows).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn bipartite(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        instances::MetricInstance::build_bipartite(&rows).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        instances::MetricInstance::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_pairs(&self) -> usize {
        self.inner.num_pairs()
    }

    #[getter]
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    #[getter]
    fn positions(&self) -> Option<Vec<f64>> {
        self.inner.embedding().map(|e| e.positions().to_vec())
    }

    fn weight(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.num_vertices();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("vertex out of range for {n} vertices")));
        }
        Ok(self.inner.weight(i, j))
    }

    fn is_metric(&self) -> bool {
        self.inner.metric_check().passes()
    }

    fn __repr__(&self) -> String {
        format!("MetricInstance(num_vertices={}, diameter={})", self.inner.num_vertices(), self.inner.diameter())
    }
}

#[pyclass(name = "PerfectMatching", module = "selfish_matching", frozen)]
struct PyMatching {
    inner: matchings::PerfectMatching,
}

#[pymethods]
impl PyMatching {
    #[new]
    fn new(num_vertices: usize, pairs: Vec<(usize, usize)>) -> PyResult<Self> {
        matchings::PerfectMatching::from_pairs(num_vertices, pairs).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.pairs().to_vec()
    }

    fn partner(&self, v: usize) -> PyResult<usize> {
        if v >= self.inner.num_vertices() {
            return Err(PyValueError::new_err("vertex out of range"));
        }
        Ok(self.inner.partner(v))
    }

    fn cost(&self, instance: &PyInstance) -> PyResult<f64> {
        matchings::cost(&self.inner, &instance.inner).map_err(err)
    }

    /// Unstable edges as `(u, v, w_uv, w_u, w_v)`.
    fn unstable_edges(&self, instance: &PyInstance, alpha: f64) -> PyResult<Vec<UnstableRow>> {
        let report = matchings::stability_report(&instance.inner, &self.inner, alpha).map_err(err)?;
        Ok(report.unstable_edges.iter().map(|e| (e.u, e.v, e.w_uv, e.w_u, e.w_v)).collect())
    }

    fn is_stable(&self, instance: &PyInstance, alpha: f64) -> PyResult<bool> {
        Ok(self.unstable_edges(instance, alpha)?.is_empty())
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("PerfectMatching({:?})", self.inner.pairs())
    }
}

#[pyclass(name = "FlipTrace", module = "selfish_matching", frozen)]
struct PyTrace {
    inner: FlipTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn flips(&self) -> usize {
        self.inner.flips()
    }

    #[getter]
    fn final_matching(&self) -> PyMatching {
        PyMatching { inner: self.inner.final_matching.clone() }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// JSON object with the three lemma checks.
    fn check_lemmas(&self) -> PyResult<String> {
        let report = greedy::check_trace_lemmas(&self.inner).map_err(err)?;
        serde_json::to_string(&report).map_err(json_err)
    }

    fn forest_json(&self) -> PyResult<String> {
        Ok(FlipForest::build(&self.inner).map_err(err)?.to_json())
    }

    /// JSON object with the forest cost accounting.
    fn cost_bound(&self) -> PyResult<String> {
        let forest = FlipForest::build(&self.inner).map_err(err)?;
        let report = flipforest::forest_cost_bound(&self.inner, &forest).map_err(err)?;
        serde_json::to_string(&report).map_err(json_err)
    }
}

#[pyfunction]
#[pyo3(signature = (instance, max_enum=DEFAULT_MAX_ENUM))]
fn min_cost_matching(instance: &PyInstance, max_enum: usize) -> PyResult<(PyMatching, f64)> {
    let (m, c) = matchings::min_cost_matching(&instance.inner, max_enum).map_err(err)?;
    Ok((PyMatching { inner: m }, c))
}

#[pyfunction]
fn consecutive_matching(instance: &PyInstance) -> PyResult<PyMatching> {
    matchings::consecutive_matching(&instance.inner).map(|inner| PyMatching { inner }).map_err(err)
}

#[pyfunction]
fn line_pos_matching(instance: &PyInstance) -> PyResult<PyMatching> {
    matchings::line_pos_matching(&instance.inner).map(|inner| PyMatching { inner }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (instance, alpha, max_enum=DEFAULT_MAX_ENUM))]
fn exact_poa(instance: &PyInstance, alpha: f64, max_enum: usize) -> PyResult<(f64, PyMatching)> {
    let r = matchings::exact_poa(&instance.inner, alpha, max_enum).map_err(err)?;
    Ok((r.ratio, PyMatching { inner: r.witness }))
}

#[pyfunction]
#[pyo3(signature = (instance, alpha, max_enum=DEFAULT_MAX_ENUM))]
fn exact_pos(instance: &PyInstance, alpha: f64, max_enum: usize) -> PyResult<(f64, PyMatching)> {
    let r = matchings::exact_pos(&instance.inner, alpha, max_enum).map_err(err)?;
    Ok((r.ratio, PyMatching { inner: r.witness }))
}

#[pyfunction]
#[pyo3(signature = (instance, alpha, max_enum=DEFAULT_MAX_ENUM))]
fn count_alpha_stable(instance: &PyInstance, alpha: f64, max_enum: usize) -> PyResult<u64> {
    matchings::count_alpha_stable(&instance.inner, alpha, max_enum).map_err(err)
}

/// Runs greedy from `optimal`, or from the optimum when omitted.
#[pyfunction]
#[pyo3(signature = (instance, alpha, optimal=None, max_enum=DEFAULT_MAX_ENUM))]
fn run_greedy(
    instance: &PyInstance,
    alpha: f64,
    optimal: Option<&PyMatching>,
    max_enum: usize,
) -> PyResult<(PyMatching, PyTrace)> {
    let start = match optimal {
        Some(m) => m.inner.clone(),
        None => harness::optimal_matching(&instance.inner, max_enum).map_err(err)?.0,
    };
    let (m, trace) = greedy::run_greedy(&instance.inner, &start, alpha).map_err(err)?;
    Ok((PyMatching { inner: m }, PyTrace { inner: trace }))
}

#[pyfunction]
fn closed_form_effect(n_leaves: usize, alpha: f64) -> f64 {
    flipforest::closed_form_effect(n_leaves, alpha)
}

#[pyfunction]
fn balanced_tree_effect(n_leaves: usize, alpha: f64) -> PyResult<f64> {
    Ok(AbstractTree::balanced_complete(n_leaves, alpha).map_err(err)?.effect())
}

/// One sweep cell as a JSON record.
#[pyfunction]
#[pyo3(signature = (family, k, alpha, epsilon=None, seed=0, max_enum=DEFAULT_MAX_ENUM))]
fn run_experiment(
    family: &str,
    k: u32,
    alpha: f64,
    epsilon: Option<f64>,
    seed: u64,
    max_enum: usize,
) -> PyResult<String> {
    let spec = GeneratorSpec {
        family: family.parse().map_err(err)?,
        k,
        alpha,
        epsilon: epsilon.map_or(EpsilonPolicy::Default, EpsilonPolicy::Fixed),
        seed,
    };
    serde_json::to_string(&harness::run_experiment(&spec, max_enum, false)).map_err(json_err)
}

#[pyfunction]
#[pyo3(signature = (k, trials, seed=0))]
fn search_line_mc(k: u32, trials: u64, seed: u64) -> PyResult<String> {
    let r = harness::search_line_mc(k, trials, seed).map_err(err)?;
    serde_json::to_string(&r).map_err(json_err)
}

#[pyfunction]
#[pyo3(signature = (n_leaves, alpha, trials, seed=0))]
fn search_tree_effect(n_leaves: usize, alpha: f64, trials: u64, seed: u64) -> PyResult<String> {
    let r = harness::search_tree_effect(n_leaves, alpha, trials, seed).map_err(err)?;
    serde_json::to_string(&r).map_err(json_err)
}

#[pymodule]
#[pyo3(name = "selfish_matching")]
fn selfish_matching_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyMatching>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(min_cost_matching, m)?)?;
    m.add_function(wrap_pyfunction!(consecutive_matching, m)?)?;
    m.add_function(wrap_pyfunction!(line_pos_matching, m)?)?;
    m.add_function(wrap_pyfunction!(exact_poa, m)?)?;
    m.add_function(wrap_pyfunction!(exact_pos, m)?)?;
    m.add_function(wrap_pyfunction!(count_alpha_stable, m)?)?;
    m.add_function(wrap_pyfunction!(run_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_effect, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_tree_effect, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(search_line_mc, m)?)?;
    m.add_function(wrap_pyfunction!(search_tree_effect, m)?)?;
    Ok(())
}
