//! Python bindings: lexicon matching, the ingest/rebuild pipeline, semantic
//! queries and evaluation.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use litknow_core::embed::{build_graph, embed_graph, SgnsConfig, WalkConfig};
use litknow_core::eval;
use litknow_core::extractor::{match_concepts, tokenize as tokenize_text, SpeciesLexicon};
use litknow_core::lexicon::{self, compile_surface_index, ConceptId, Stoplist, SurfaceIndex};
use litknow_core::pipeline::{current_snapshot, Pipeline, PipelineConfig, SystemClock};
use litknow_core::semantics::{combine, related_not_connected_multi, top_k_related};
use litknow_core::store::{Ratio, Snapshot};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::Value;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(runtime_err)?)
}

fn read_lexicon(path: &Path) -> PyResult<lexicon::Lexicon> {
    let file = File::open(path).map_err(value_err)?;
    lexicon::load_lexicon(BufReader::new(file), &Stoplist::default()).map_err(value_err)
}

fn ratio_tuple(r: Ratio) -> (u64, u64, String) {
    (r.numerator, r.denominator, r.display())
}

/// Folded word tokens of `text`.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    tokenize_text(text).into_iter().map(|t| t.folded).collect()
}

/// Rank-sum AUROC with ties counted as one half.
#[pyfunction]
fn auroc(positives: Vec<f64>, negatives: Vec<f64>) -> PyResult<f64> {
    eval::auroc(&positives, &negatives).map_err(value_err)
}

/// `numerator / denominator` rounded to three significant digits.
#[pyfunction]
fn format_ratio(numerator: u64, denominator: u64) -> String {
    Ratio::new(numerator, denominator).display()
}

/// Trains node vectors on a weighted edge list and returns them by id.
#[pyfunction]
#[pyo3(signature = (edges, dimension = 32, walk_length = 40, walks_per_node = 10, epochs = 3, seed = 42))]
fn embed_edges(
    edges: Vec<(String, String, u64)>,
    dimension: usize,
    walk_length: usize,
    walks_per_node: usize,
    epochs: usize,
    seed: u64,
) -> PyResult<Vec<(String, Vec<f32>)>> {
    let ids: Vec<(ConceptId, ConceptId, u64)> =
        edges.into_iter().map(|(a, b, w)| (ConceptId::new(a), ConceptId::new(b), w)).collect();
    let graph = build_graph(ids.iter().map(|(a, b, w)| (a, b, *w)));
    let walk = WalkConfig {
        walk_length,
        walks_per_node,
        seed,
        ..WalkConfig::default()
    };
    let sgns = SgnsConfig {
        dimension,
        epochs,
        seed,
        ..SgnsConfig::default()
    };
    let model = embed_graph(&graph, &walk, &sgns).map_err(value_err)?;
    Ok(model.iter().map(|(id, v)| (id.as_str().to_string(), v.to_vec())).collect())
}

/// A concept lexicon compiled for matching.
#[pyclass(name = "Lexicon", unsendable)]
struct PyLexicon {
    lexicon: lexicon::Lexicon,
    index: SurfaceIndex,
}

#[pymethods]
impl PyLexicon {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        let lexicon = read_lexicon(&path)?;
        let index = compile_surface_index(&lexicon).map_err(value_err)?;
        Ok(PyLexicon { lexicon, index })
    }

    fn __len__(&self) -> usize {
        self.lexicon.len()
    }

    fn concept_ids(&self) -> Vec<String> {
        self.lexicon.entries().iter().map(|e| e.id.as_str().to_string()).collect()
    }

    /// `(concept, start, end)` per mention, with byte offsets into `text`.
    fn mentions(&self, text: &str) -> Vec<(String, usize, usize)> {
        let tokens = tokenize_text(text);
        match_concepts(&tokens, &self.index)
            .into_iter()
            .map(|m| {
                let start = tokens[m.tokens.start].span.0;
                let end = tokens[m.tokens.end - 1].span.1;
                (m.concept.as_str().to_string(), start, end)
            })
            .collect()
    }
}

/// A writable data directory plus its current snapshot.
#[pyclass(unsendable)]
struct Engine {
    pipeline: Pipeline,
    snapshot: Snapshot,
}

impl Engine {
    fn model(&self) -> PyResult<&litknow_core::embed::EmbeddingModel> {
        self.snapshot
            .embedding
            .as_deref()
            .ok_or_else(|| PyRuntimeError::new_err("no embedding yet; call rebuild()"))
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (data_dir, lexicon, config = None))]
    fn new(data_dir: PathBuf, lexicon: PathBuf, config: Option<PathBuf>) -> PyResult<Self> {
        let lex = read_lexicon(&lexicon)?;
        let config = match config {
            Some(p) => PipelineConfig::read(&p).map_err(value_err)?,
            None => PipelineConfig::default(),
        };
        let pipeline = Pipeline::open(&data_dir, &lex, SpeciesLexicon::bundled(), config, Arc::new(SystemClock))
            .map_err(runtime_err)?;
        let snapshot = current_snapshot(&data_dir, pipeline.catalog().clone()).map_err(runtime_err)?;
        Ok(Engine { pipeline, snapshot })
    }

    /// Ingests every pending file in `updates`; returns the ingest report.
    fn ingest<'py>(&mut self, py: Python<'py>, updates: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let report = self.pipeline.ingest(&updates).map_err(runtime_err)?;
        serialize(py, &report)
    }

    /// Retrains the embedding, publishes a snapshot and returns its id.
    fn rebuild(&mut self) -> PyResult<u64> {
        self.snapshot = self.pipeline.rebuild().map_err(runtime_err)?;
        Ok(self.snapshot.id)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("concepts", self.snapshot.concept_count())?;
        d.set_item("relations", self.snapshot.relation_count())?;
        d.set_item("triples", self.snapshot.triple_count())?;
        d.set_item("articles", self.snapshot.article_count())?;
        d.set_item("snapshot_id", self.snapshot.id)?;
        Ok(d)
    }

    /// `(P(b|a), P(a|b))`, each as `(numerator, denominator, display)`.
    #[allow(clippy::type_complexity)]
    fn conditional_probability(&self, a: &str, b: &str) -> PyResult<((u64, u64, String), (u64, u64, String))> {
        let p = self
            .snapshot
            .conditional_probability(&ConceptId::new(a), &ConceptId::new(b))
            .map_err(|e| PyKeyError::new_err(e.to_string()))?;
        Ok((ratio_tuple(p.p_b_given_a()), ratio_tuple(p.p_a_given_b())))
    }

    /// `(concept, cosine, directly_related)` for the top `k` concepts.
    #[pyo3(signature = (concepts, k = 20, exclude_direct = false))]
    fn related(&self, concepts: Vec<String>, k: usize, exclude_direct: bool) -> PyResult<Vec<(String, f64, bool)>> {
        let model = self.model()?;
        let ids: Vec<ConceptId> = concepts.into_iter().map(ConceptId::new).collect();
        let hits = if exclude_direct {
            related_not_connected_multi(&ids, k, model, &self.snapshot.graph)
        } else {
            combine(&ids, model).map(|q| top_k_related(&q, k, &HashSet::new(), model, &self.snapshot.graph))
        }
        .map_err(|e| value_err(format!("{e:?}")))?;
        Ok(hits
            .into_iter()
            .map(|h| (h.concept.as_str().to_string(), h.score, h.directly_related))
            .collect())
    }

    /// Link-prediction AUROC of the current embedding.
    #[pyo3(signature = (negative_ratio = 1.0, seed = 42))]
    fn auroc<'py>(&self, py: Python<'py>, negative_ratio: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let model = self.model()?;
        let report = eval::auroc_link_prediction(&self.snapshot.graph, model, negative_ratio, seed).map_err(value_err)?;
        serialize(py, &report)
    }

    /// Temporal holdout at `cutoff` (YYYY-MM-DD), retraining on older data.
    #[pyo3(signature = (cutoff, k = 40))]
    fn holdout<'py>(&self, py: Python<'py>, cutoff: &str, k: usize) -> PyResult<Bound<'py, PyAny>> {
        let cutoff = NaiveDate::parse_from_str(cutoff, "%Y-%m-%d").map_err(value_err)?;
        let config = self.pipeline.config();
        let report =
            eval::temporal_holdout(&self.snapshot, cutoff, &config.walk, &config.sgns, k).map_err(value_err)?;
        serialize(py, &report)
    }
}

#[pymodule]
fn litknow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(format_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(embed_edges, m)?)?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<Engine>()?;
    Ok(())
}
