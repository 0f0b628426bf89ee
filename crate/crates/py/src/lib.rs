//! Python bindings for the reqdep toolkit: dataset loading, entity
//! extraction, graph and vector retrieval, evaluation metrics, and the
//! sustainability arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reqdep::corpus::{DataFormat, Dataset as CoreDataset};
use reqdep::error::Error;
use reqdep::extract::Extractor;
use reqdep::infer::{parse_response, render_prompt, PromptSpec, Shot, Strategy};
use reqdep::kg::{KnowledgeGraph, RoleWeights, ScoreWeights};
use reqdep::metrics::{
    compute_recall_curve, macro_prf, recall_at_k, select_k_elbow, RecallCurve, RecallMode,
};
use reqdep::sustain::{carbon_of, ecoscore, project_workload, EcoScoreMode};
use reqdep::vsr::{embed_corpus, HashedProvider, IndexKind, VectorIndex};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Lookup(m) => PyKeyError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_recall_mode(mode: &str) -> PyResult<RecallMode> {
    match mode {
        "single" => Ok(RecallMode::SingleConflict),
        "multi" => Ok(RecallMode::MultiLabel),
        other => Err(PyValueError::new_err(format!(
            "recall mode must be 'single' or 'multi', got '{other}'"
        ))),
    }
}

/// A requirements dataset with labeled pairs.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    /// Load requirements from CSV (`id,text`) or JSON; `fmt` is "csv" or
    /// "json".
    #[staticmethod]
    #[pyo3(signature = (path, fmt="csv", source=None))]
    fn load(path: PathBuf, fmt: &str, source: Option<String>) -> PyResult<Self> {
        let format = match fmt {
            "csv" => DataFormat::Csv,
            "json" => DataFormat::Json,
            other => {
                return Err(PyValueError::new_err(format!(
                    "format must be 'csv' or 'json', got '{other}'"
                )))
            }
        };
        let source = source.unwrap_or_else(|| {
            Path::new(&path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        });
        let inner =
            CoreDataset::load_requirements(&path, format, &source).map_err(to_py_err)?;
        Ok(PyDataset { inner })
    }

    /// Load the pairs CSV (`anchor_id,candidate_id,label`) and rebuild the
    /// ground-truth map.
    fn load_pairs(&mut self, path: PathBuf) -> PyResult<()> {
        self.inner.load_pairs(&path).map_err(to_py_err)
    }

    /// Collapse duplicate requirements (normalized text) and remap pairs.
    fn deduplicate(&self) -> PyDataset {
        PyDataset {
            inner: self.inner.deduplicate(),
        }
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats();
        let d = PyDict::new(py);
        d.set_item("conflict_count", s.conflict_count)?;
        d.set_item("neutral_count", s.neutral_count)?;
        d.set_item("avg_tokens_pair", s.avg_tokens_pair)?;
        d.set_item("vocabulary_size", s.vocabulary_size)?;
        Ok(d)
    }

    fn ids(&self) -> Vec<String> {
        self.inner.requirements.iter().map(|r| r.id.clone()).collect()
    }

    fn text_of(&self, id: &str) -> PyResult<String> {
        self.inner
            .text_of(id)
            .map(str::to_string)
            .map_err(to_py_err)
    }

    /// anchor id -> list of Conflict-labeled candidate ids.
    fn ground_truth(&self) -> BTreeMap<String, Vec<String>> {
        self.inner
            .ground_truth
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.requirements.len()
    }
}

/// Typed entity graph with shared-entity retrieval.
#[pyclass(name = "Graph")]
struct PyGraph {
    inner: KnowledgeGraph,
    source: String,
}

#[pymethods]
impl PyGraph {
    /// Extract entities with the bundled grammar and build the graph.
    #[staticmethod]
    fn build(dataset: &PyDataset) -> PyResult<Self> {
        let extractor = Extractor::new();
        let sets: Vec<_> = dataset
            .inner
            .requirements
            .iter()
            .map(|r| extractor.extract(r))
            .collect();
        let inner = KnowledgeGraph::from_dataset(&dataset.inner, &sets).map_err(to_py_err)?;
        Ok(PyGraph {
            inner,
            source: dataset.inner.source.clone(),
        })
    }

    /// Ranked `(candidate_id, score)` for a query.
    #[pyo3(signature = (query, k, alpha=1.0, beta=0.5, gamma=0.25, weighted=false))]
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        alpha: f64,
        beta: f64,
        gamma: f64,
        weighted: bool,
    ) -> PyResult<Vec<(String, f64)>> {
        let weights = ScoreWeights::new(alpha, beta, gamma);
        let ranked = if weighted {
            self.inner
                .retrieve_weighted(&self.source, query, k, &weights, &RoleWeights::default())
        } else {
            self.inner.retrieve(&self.source, query, k, &weights)
        }
        .map_err(to_py_err)?;
        Ok(ranked
            .into_iter()
            .map(|c| (c.candidate_id, c.score))
            .collect())
    }

    /// Shortest-path hop count between two requirements; None when
    /// unreachable.
    fn shortest_path_len(&self, q: &str, j: &str) -> PyResult<Option<usize>> {
        self.inner
            .shortest_path_len(&self.source, q, j)
            .map_err(to_py_err)
    }

    fn entities_of(&self, id: &str) -> PyResult<Vec<(String, String)>> {
        Ok(self
            .inner
            .entities_of(&self.source, id)
            .map_err(to_py_err)?
            .into_iter()
            .map(|e| (e.kind.to_string(), e.value.clone()))
            .collect())
    }

    fn export(&self) -> String {
        self.inner.export()
    }
}

/// Cosine index over hashed embeddings.
#[pyclass(name = "VectorIndex")]
struct PyVectorIndex {
    inner: VectorIndex,
    provider: HashedProvider,
    texts: BTreeMap<String, String>,
}

#[pymethods]
impl PyVectorIndex {
    /// Embed the dataset with signed feature hashing and index it.
    /// `kind` is "flat" or "ivf".
    #[staticmethod]
    #[pyo3(signature = (dataset, dimension=768, kind="flat", nlist=None, seed=42))]
    fn build(
        dataset: &PyDataset,
        dimension: usize,
        kind: &str,
        nlist: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let kind = match kind {
            "flat" => IndexKind::Flat,
            "ivf" => IndexKind::Ivf,
            other => {
                return Err(PyValueError::new_err(format!(
                    "kind must be 'flat' or 'ivf', got '{other}'"
                )))
            }
        };
        let provider = HashedProvider::new(dimension).map_err(to_py_err)?;
        let vectors =
            embed_corpus(&provider, &dataset.inner.requirements).map_err(to_py_err)?;
        let inner = VectorIndex::build(vectors, kind, nlist, seed).map_err(to_py_err)?;
        let texts = dataset
            .inner
            .requirements
            .iter()
            .map(|r| (r.id.clone(), r.text.clone()))
            .collect();
        Ok(PyVectorIndex {
            inner,
            provider,
            texts,
        })
    }

    /// Top-k `(id, cosine)` for the requirement with the given id.
    #[pyo3(signature = (query_id, k, nprobe=None))]
    fn search(&self, query_id: &str, k: usize, nprobe: Option<usize>) -> PyResult<Vec<(String, f64)>> {
        let text = self
            .texts
            .get(query_id)
            .ok_or_else(|| PyKeyError::new_err(format!("unknown requirement '{query_id}'")))?;
        let query = self.provider.embed_text(query_id, text).map_err(to_py_err)?;
        Ok(self
            .inner
            .search(&query, k, nprobe)
            .map_err(to_py_err)?
            .into_iter()
            .map(|h| (h.id, h.cosine))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Entities of a text as `(kind, value)` pairs.
#[pyfunction]
fn extract_entities(text: &str) -> Vec<(String, String)> {
    let extractor = Extractor::new();
    let req = reqdep::corpus::Requirement {
        id: "q".into(),
        source: "py".into(),
        text: text.into(),
    };
    extractor
        .extract(&req)
        .entities
        .into_iter()
        .map(|e| (e.kind.to_string(), e.value))
        .collect()
}

#[pyfunction]
fn lemmatize(token: &str) -> String {
    Extractor::new().lemmatize(token)
}

#[pyfunction]
fn normalize_tokens(text: &str) -> Vec<String> {
    reqdep::extract::normalize_tokens(text)
}

/// Recall@K; `mode` is "single" or "multi".
#[pyfunction]
#[pyo3(name = "recall_at_k", signature = (retrieved, truth, k, mode="single"))]
fn py_recall_at_k(
    retrieved: BTreeMap<String, Vec<String>>,
    truth: BTreeMap<String, Vec<String>>,
    k: usize,
    mode: &str,
) -> PyResult<f64> {
    let truth: BTreeMap<String, BTreeSet<String>> = truth
        .into_iter()
        .map(|(q, ids)| (q, ids.into_iter().collect()))
        .collect();
    recall_at_k(&retrieved, &truth, k, parse_recall_mode(mode)?).map_err(to_py_err)
}

/// `{"macro_precision", "macro_recall", "macro_f1", "per_class"}`.
#[pyfunction]
#[pyo3(name = "macro_prf")]
fn py_macro_prf<'py>(
    py: Python<'py>,
    pred: Vec<String>,
    truth: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = macro_prf(&pred, &truth).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("macro_precision", m.macro_precision)?;
    d.set_item("macro_recall", m.macro_recall)?;
    d.set_item("macro_f1", m.macro_f1)?;
    let per_class = PyDict::new(py);
    for (class, cm) in &m.per_class {
        let entry = PyDict::new(py);
        entry.set_item("precision", cm.precision)?;
        entry.set_item("recall", cm.recall)?;
        entry.set_item("f1", cm.f1)?;
        per_class.set_item(class, entry)?;
    }
    d.set_item("per_class", per_class)?;
    Ok(d)
}

/// Elbow K over `(K, recall)` points.
#[pyfunction]
#[pyo3(name = "select_k_elbow", signature = (points, epsilon=0.005))]
fn py_select_k_elbow(points: Vec<(usize, f64)>, epsilon: f64) -> PyResult<usize> {
    let curve = RecallCurve {
        points,
        mode: RecallMode::SingleConflict,
    };
    select_k_elbow(&curve, epsilon).map_err(to_py_err)
}

/// Recall curve for K = 1..=k_max as `(K, recall)` points.
#[pyfunction]
#[pyo3(name = "recall_curve", signature = (retrieved, truth, k_max, mode="single"))]
fn py_recall_curve(
    retrieved: BTreeMap<String, Vec<String>>,
    truth: BTreeMap<String, Vec<String>>,
    k_max: usize,
    mode: &str,
) -> PyResult<Vec<(usize, f64)>> {
    let truth: BTreeMap<String, BTreeSet<String>> = truth
        .into_iter()
        .map(|(q, ids)| (q, ids.into_iter().collect()))
        .collect();
    Ok(
        compute_recall_curve(&retrieved, &truth, k_max, parse_recall_mode(mode)?)
            .map_err(to_py_err)?
            .points,
    )
}

#[pyfunction]
#[pyo3(name = "carbon_of")]
fn py_carbon_of(energy_kwh: f64, intensity_g_per_kwh: f64) -> f64 {
    carbon_of(energy_kwh, intensity_g_per_kwh)
}

/// EcoScore; `mode` is "mean_f1" or "sum_f1".
#[pyfunction]
#[pyo3(name = "ecoscore", signature = (f1_per_dataset, carbon_per_dataset, mode="mean_f1"))]
fn py_ecoscore(f1_per_dataset: Vec<f64>, carbon_per_dataset: Vec<f64>, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "mean_f1" => EcoScoreMode::MeanF1,
        "sum_f1" => EcoScoreMode::SumF1,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'mean_f1' or 'sum_f1', got '{other}'"
            )))
        }
    };
    ecoscore(&f1_per_dataset, &carbon_per_dataset, mode).map_err(to_py_err)
}

/// Exhaustive-versus-pruned workload arithmetic.
#[pyfunction]
#[pyo3(name = "project_workload", signature = (n_all, n_pruned, e_per_kwh, intensity_g_per_kwh=475.0))]
fn py_project_workload<'py>(
    py: Python<'py>,
    n_all: u64,
    n_pruned: u64,
    e_per_kwh: f64,
    intensity_g_per_kwh: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = project_workload(n_all, n_pruned, e_per_kwh, intensity_g_per_kwh).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("n_all", p.n_all)?;
    d.set_item("n_pruned", p.n_pruned)?;
    d.set_item("e_per_kwh", p.e_per_kwh)?;
    d.set_item("e_vanilla_kwh", p.e_vanilla_kwh)?;
    d.set_item("e_pruned_kwh", p.e_pruned_kwh)?;
    d.set_item("reduction", p.reduction)?;
    d.set_item("carbon_vanilla_kg", p.carbon_vanilla_kg)?;
    d.set_item("carbon_pruned_kg", p.carbon_pruned_kg)?;
    Ok(d)
}

/// Render a classification prompt; `strategy` is "zeroshot", "fewshot", or
/// "cot". Few-shot uses the bundled shots unless `shots` is given as
/// `(anchor, candidate, label)` triples.
#[pyfunction]
#[pyo3(name = "render_prompt", signature = (strategy, anchor, candidate, shots=None))]
fn py_render_prompt(
    strategy: &str,
    anchor: &str,
    candidate: &str,
    shots: Option<Vec<(String, String, String)>>,
) -> PyResult<String> {
    let strategy = match strategy {
        "zeroshot" => Strategy::ZeroShot,
        "fewshot" => Strategy::FewShot,
        "cot" => Strategy::ChainOfThought,
        other => {
            return Err(PyValueError::new_err(format!(
                "strategy must be 'zeroshot', 'fewshot', or 'cot', got '{other}'"
            )))
        }
    };
    let mut spec = PromptSpec::new(strategy, anchor, candidate);
    if strategy == Strategy::FewShot {
        spec = spec.with_shots(match shots {
            None => reqdep::infer::default_shots(),
            Some(triples) => triples
                .into_iter()
                .map(|(anchor, candidate, label)| {
                    let label = reqdep::corpus::PairLabel::parse(&label).ok_or_else(|| {
                        PyValueError::new_err(format!("unknown label '{label}'"))
                    })?;
                    Ok(Shot {
                        anchor,
                        candidate,
                        label,
                    })
                })
                .collect::<PyResult<Vec<Shot>>>()?,
        });
    }
    render_prompt(&spec).map_err(to_py_err)
}

/// Parse a model reply into `(label, confidence)`; None when the reply
/// violates the output contract.
#[pyfunction]
#[pyo3(name = "parse_response")]
fn py_parse_response(raw: &str) -> Option<(String, f64)> {
    parse_response(raw)
        .ok()
        .map(|r| (r.label.to_string(), r.confidence))
}

#[pyfunction]
fn percent_reduction(value: f64, baseline: f64) -> f64 {
    reqdep::report::percent_reduction(value, baseline)
}

#[pyfunction]
fn percent_overhead(value: f64, baseline: f64) -> f64 {
    reqdep::report::percent_overhead(value, baseline)
}

#[pymodule]
fn reqdep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyVectorIndex>()?;
    m.add_function(wrap_pyfunction!(extract_entities, m)?)?;
    m.add_function(wrap_pyfunction!(lemmatize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(py_recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(py_recall_curve, m)?)?;
    m.add_function(wrap_pyfunction!(py_macro_prf, m)?)?;
    m.add_function(wrap_pyfunction!(py_select_k_elbow, m)?)?;
    m.add_function(wrap_pyfunction!(py_carbon_of, m)?)?;
    m.add_function(wrap_pyfunction!(py_ecoscore, m)?)?;
    m.add_function(wrap_pyfunction!(py_project_workload, m)?)?;
    m.add_function(wrap_pyfunction!(py_render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(py_parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(percent_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(percent_overhead, m)?)?;
    Ok(())
}
