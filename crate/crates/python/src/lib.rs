//! Python bindings for the relation extraction pipeline.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use medrel_core::corpus::{self, generate_candidates, CorpusPaths, InstanceKey, RelationLabel};
use medrel_core::features::AssertionLexicons;
use medrel_core::hybrid::{merge_predictions, MergePolicy, PredictionSet};
use medrel_core::metrics::{self, EvalReport};
use medrel_core::network::TrainConfig;
use medrel_core::pipeline::{self, PipelineError, TrainedSystem};
use medrel_core::rules::{ParseIndex, RuleSet};
use medrel_core::synthetic::{self, HybridCorpusConfig};

/// `(doc_id, line, (treatment_start, treatment_end), (problem_start, problem_end))`
type PyKey = (String, usize, (usize, usize), (usize, usize));

fn to_py_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn key_to_py(k: &InstanceKey) -> PyKey {
    (k.doc_id.clone(), k.line, k.treatment, k.problem)
}

fn key_from_py(k: PyKey) -> InstanceKey {
    InstanceKey {
        doc_id: k.0,
        line: k.1,
        treatment: k.2,
        problem: k.3,
    }
}

fn preds_to_py(p: &PredictionSet) -> HashMap<PyKey, String> {
    p.iter().map(|(k, l)| (key_to_py(k), l.to_string())).collect()
}

fn preds_from_py(p: HashMap<PyKey, String>) -> PyResult<PredictionSet> {
    p.into_iter()
        .map(|(k, l)| Ok((key_from_py(k), l.parse::<RelationLabel>().map_err(value_err)?)))
        .collect()
}

/// An annotated corpus: sentences, concepts and gold relations.
#[pyclass(name = "Corpus", module = "medrel", skip_from_py_object)]
#[derive(Clone)]
struct PyCorpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Loads `.txt`, `.con`, `.rel` and optional `.tags` files from one directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let inner = corpus::load_corpus(&CorpusPaths::single(dir)).map_err(|e| to_py_err(e.into()))?;
        Ok(PyCorpus { inner })
    }

    /// Generated corpus with pattern-governed labels, plus the matching rules.
    #[staticmethod]
    #[pyo3(signature = (n_instances=2000, seed=7))]
    fn synthetic(n_instances: usize, seed: u64) -> (Self, PyRuleSet) {
        let (inner, rules) = synthetic::hybrid_corpus(&HybridCorpusConfig {
            n_instances,
            seed,
            ..Default::default()
        });
        (PyCorpus { inner }, PyRuleSet { inner: rules })
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write_to(&dir).map_err(|e| to_py_err(e.into()))
    }

    #[getter]
    fn document_ids(&self) -> Vec<String> {
        self.inner.documents.iter().map(|d| d.id.clone()).collect()
    }

    #[getter]
    fn n_sentences(&self) -> usize {
        self.inner.n_sentences()
    }

    #[getter]
    fn n_concepts(&self) -> usize {
        self.inner.n_concepts()
    }

    #[getter]
    fn n_relations(&self) -> usize {
        self.inner.n_relations()
    }

    /// Every (treatment, problem) pair as `(key, treatment_text, problem_text, label)`.
    fn candidates(&self) -> Vec<(PyKey, String, String, String)> {
        generate_candidates(&self.inner)
            .iter()
            .map(|i| {
                (
                    key_to_py(&i.key()),
                    i.treatment.text.clone(),
                    i.problem.text.clone(),
                    i.label.to_string(),
                )
            })
            .collect()
    }

    /// Gold label of every candidate pair (`Null` when unrelated).
    fn gold(&self) -> HashMap<PyKey, String> {
        preds_to_py(&pipeline::gold_set(&self.inner))
    }

    /// Seeded document-level split into `(train, test)`.
    #[pyo3(signature = (test_fraction=0.1, seed=42))]
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = pipeline::split_documents(&self.inner, test_fraction, seed).map_err(to_py_err)?;
        Ok((PyCorpus { inner: a }, PyCorpus { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.documents.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(documents={}, sentences={}, relations={})",
            self.inner.documents.len(),
            self.inner.n_sentences(),
            self.inner.n_relations()
        )
    }
}

/// Training hyperparameters.
#[pyclass(name = "TrainConfig", module = "medrel", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    epochs: usize,
    hidden: usize,
    embedding_size: usize,
    pos_size: usize,
    chunk_size: usize,
    position_size: usize,
    max_distance: usize,
    neg_samples: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
    class_weighting: bool,
    init_scale: f64,
}

impl From<&PyTrainConfig> for TrainConfig {
    fn from(c: &PyTrainConfig) -> Self {
        TrainConfig {
            epochs: c.epochs,
            lstm_hidden: c.hidden,
            d_w: c.embedding_size,
            d_p: c.pos_size,
            d_c: c.chunk_size,
            d_pos: c.position_size,
            p_max: c.max_distance,
            neg_samples: c.neg_samples,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            seed: c.seed,
            class_weighting: c.class_weighting,
            init_scale: c.init_scale,
        }
    }
}

impl From<&TrainConfig> for PyTrainConfig {
    fn from(c: &TrainConfig) -> Self {
        PyTrainConfig {
            epochs: c.epochs,
            hidden: c.lstm_hidden,
            embedding_size: c.d_w,
            pos_size: c.d_p,
            chunk_size: c.d_c,
            position_size: c.d_pos,
            max_distance: c.p_max,
            neg_samples: c.neg_samples,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            seed: c.seed,
            class_weighting: c.class_weighting,
            init_scale: c.init_scale,
        }
    }
}

#[pymethods]
impl PyTrainConfig {
    /// Defaults; any field may be overridden by keyword.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let cfg = Bound::new(py, PyTrainConfig::from(&TrainConfig::default()))?;
        if let Some(d) = kwargs {
            for (k, v) in d.iter() {
                cfg.setattr(k.extract::<String>()?.as_str(), v)?;
            }
        }
        let out = cfg.borrow().clone();
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(epochs={}, hidden={}, embedding_size={}, neg_samples={}, seed={})",
            self.epochs, self.hidden, self.embedding_size, self.neg_samples, self.seed
        )
    }
}

/// A trained network with its feature tables.
#[pyclass(name = "Model", module = "medrel")]
struct PyModel {
    inner: TrainedSystem,
    #[pyo3(get)]
    loss_trace: Vec<f64>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: TrainedSystem::load(&path).map_err(to_py_err)?,
            loss_trace: Vec::new(),
        })
    }

    /// Writes the model file and its `.features.json` sidecar.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[getter]
    fn config(&self) -> PyTrainConfig {
        PyTrainConfig::from(&self.inner.model.config)
    }

    /// Label for every candidate pair of `corpus`.
    fn predict(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<HashMap<PyKey, String>> {
        let preds = py
            .detach(|| pipeline::predict_corpus(&self.inner, &corpus.inner))
            .map_err(to_py_err)?;
        Ok(preds_to_py(&preds))
    }

    /// Model file bytes.
    fn to_bytes(&self) -> Vec<u8> {
        medrel_core::network::to_bytes(&self.inner.model)
    }
}

/// Trains the network on `corpus`.
#[pyfunction]
#[pyo3(signature = (corpus, config=None))]
fn train(py: Python<'_>, corpus: &PyCorpus, config: Option<&PyTrainConfig>) -> PyResult<PyModel> {
    let cfg = config.map(TrainConfig::from).unwrap_or_default();
    let run = py
        .detach(|| pipeline::train_system(&corpus.inner, &cfg, AssertionLexicons::starter(), None))
        .map_err(to_py_err)?;
    Ok(PyModel {
        inner: run.system,
        loss_trace: run.loss_trace,
    })
}

/// Phrase patterns and path verbs.
#[pyclass(name = "RuleSet", module = "medrel")]
struct PyRuleSet {
    inner: RuleSet,
}

#[pymethods]
impl PyRuleSet {
    /// The bundled starter patterns and verbs.
    #[staticmethod]
    fn starter() -> Self {
        PyRuleSet {
            inner: RuleSet::starter(),
        }
    }

    #[staticmethod]
    fn from_text(patterns: &str, verbs: &str) -> PyResult<Self> {
        Ok(PyRuleSet {
            inner: RuleSet::from_texts(patterns, verbs).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(patterns: PathBuf, verbs: PathBuf) -> PyResult<Self> {
        Ok(PyRuleSet {
            inner: RuleSet::load(&patterns, &verbs).map_err(|e| to_py_err(e.into()))?,
        })
    }

    /// Labels for the candidate pairs the rules fire on. `parses` optionally
    /// names a directory of `<id>.dep` files.
    #[pyo3(signature = (corpus, parses=None))]
    fn predict(&self, corpus: &PyCorpus, parses: Option<PathBuf>) -> PyResult<HashMap<PyKey, String>> {
        let index = parses
            .map(|d| ParseIndex::load(&d, &corpus.inner))
            .transpose()
            .map_err(|e| to_py_err(e.into()))?;
        let preds = pipeline::rules_corpus(&self.inner, &corpus.inner, index.as_ref()).map_err(to_py_err)?;
        Ok(preds_to_py(&preds))
    }

    #[getter]
    fn patterns(&self) -> Vec<String> {
        self.inner.patterns().iter().map(|p| p.to_string()).collect()
    }
}

/// Network labels overridden by rule labels; rule TrAP is ignored unless
/// `keep_trap` is set.
#[pyfunction]
#[pyo3(signature = (network, rules, keep_trap=false))]
fn merge(
    network: HashMap<PyKey, String>,
    rules: HashMap<PyKey, String>,
    keep_trap: bool,
) -> PyResult<HashMap<PyKey, String>> {
    let policy = if keep_trap {
        MergePolicy::keep_all()
    } else {
        MergePolicy::default()
    };
    let merged = merge_predictions(&preds_from_py(network)?, &preds_from_py(rules)?, &policy);
    Ok(preds_to_py(&merged))
}

/// `(tp, fp, fn, precision, recall, f)`
type ClassRow = (u64, u64, u64, f64, f64, f64);

fn report_to_py(r: &EvalReport) -> HashMap<String, ClassRow> {
    let names = RelationLabel::POSITIVE.iter().map(|l| l.to_string()).chain(["Total".to_string()]);
    names
        .zip(r.per_class.iter().chain([&r.total]))
        .map(|(n, m)| (n, (m.counts.tp, m.counts.fp, m.counts.fn_, m.precision, m.recall, m.f)))
        .collect()
}

/// Per-class and micro-total `(tp, fp, fn, precision, recall, f)` keyed by
/// label name and `"Total"`.
#[pyfunction]
fn evaluate(
    gold: HashMap<PyKey, String>,
    predicted: HashMap<PyKey, String>,
) -> PyResult<HashMap<String, ClassRow>> {
    let report = metrics::evaluate(&preds_from_py(gold)?, &preds_from_py(predicted)?).map_err(value_err)?;
    Ok(report_to_py(&report))
}

/// `(precision, recall, f)` from counts; 0/0 is 0.
#[pyfunction]
#[pyo3(name = "prf")]
fn py_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    metrics::prf(tp, fp, fn_)
}

/// Signed token distances to the span `[start, end]` in a sentence of `length` tokens.
#[pyfunction]
fn position_vector(length: usize, start: usize, end: usize) -> PyResult<Vec<i64>> {
    let span = corpus::ConceptSpan {
        text: String::new(),
        line: 1,
        tok_start: start,
        tok_end: end,
        ctype: corpus::ConceptType::Treatment,
    };
    medrel_core::features::position_vector(length, &span).map_err(value_err)
}

#[pymodule]
fn medrel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyRuleSet>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(py_prf, m)?)?;
    m.add_function(wrap_pyfunction!(position_vector, m)?)?;
    m.add("LABELS", RelationLabel::ALL.iter().map(|l| l.to_string()).collect::<Vec<_>>())?;
    Ok(())
}
