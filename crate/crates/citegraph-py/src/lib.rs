//! Python bindings for the citegraph pipeline. The module mirrors the core
//! operations: budget sizing, two-pass scoring, graph construction from
//! cached metadata plus TEI full text, prompt serialization, and the surface
//! metrics. All functions run with the built-in default configuration.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use citegraph::config::PipelineConfig;
use citegraph::dataset::GraphFile;
use citegraph::metrics::{self, IdeaVectors};
use citegraph::model::{canonical_json, validate_subgraph, PaperId};
use citegraph::s2::load_cache_dir;
use citegraph::serialize;
use citegraph::subgraph;
use citegraph::tei::{
    build_citation_profile, match_bib_to_records, parse_tei_file, profile_by_paper_id,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_graph_json(graph_json: &str) -> PyResult<citegraph::model::AnnotatedSubgraph> {
    let file: GraphFile = serde_json::from_str(graph_json).map_err(err)?;
    Ok(file.graph)
}

/// Retention budget for a seed with `num_refs` references.
#[pyfunction]
fn compute_budget(num_refs: usize) -> usize {
    subgraph::compute_budget(num_refs, &PipelineConfig::default().budget)
}

/// Whitespace-and-punctuation token estimate used for prompt sizing.
#[pyfunction]
fn estimate_tokens(text: &str) -> usize {
    serialize::estimate_tokens(text)
}

/// Pass-1 and pass-2 relevance scores for one candidate's component values.
#[pyfunction]
fn score_components(s_cite: f64, s_sec: f64, s_infl: f64, s_sib: f64) -> (f64, f64) {
    let config = PipelineConfig::default();
    let w1 = &config.score1_weights;
    let w2 = &config.score2_weights;
    (
        w1.cite * s_cite + w1.section * s_sec + w1.influential * s_infl,
        w2.cite * s_cite + w2.section * s_sec + w2.influential * s_infl + w2.sibling * s_sib,
    )
}

/// ROUGE-L F1 between two texts under the library tokenizer.
#[pyfunction]
fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    metrics::rouge_l_f1(candidate, reference)
}

/// Cosine similarity of two equal-length vectors.
#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    metrics::cosine(&u, &v).map_err(err)
}

/// Best weighted per-field cosine over candidates; returns (index, score).
/// Vector maps use field slugs: problem, existing_methods, motivation,
/// proposed_method, experiment_plan. Weights default to 0.2 each.
#[pyfunction]
#[pyo3(signature = (candidates, gold, weights=None))]
fn wtop1(
    candidates: Vec<BTreeMap<String, Vec<f64>>>,
    gold: BTreeMap<String, Vec<f64>>,
    weights: Option<[f64; 5]>,
) -> PyResult<(usize, f64)> {
    let candidates: Vec<IdeaVectors> =
        candidates.into_iter().map(|fields| IdeaVectors { fields }).collect();
    let gold = IdeaVectors { fields: gold };
    let weights = weights.unwrap_or(PipelineConfig::default().wtop1_field_weights);
    metrics::wtop1(&candidates, &gold, &weights).map_err(err)
}

/// Builds the annotated subgraph for a cached seed and its TEI full text,
/// returning the same graph JSON document the command-line tool writes.
#[pyfunction]
fn build_graph_json(seed_id: &str, cache_dir: &str, tei_path: &str) -> PyResult<String> {
    let config = PipelineConfig::default();
    let records = load_cache_dir(Path::new(cache_dir)).map_err(err)?;
    let seed_id = PaperId::new(seed_id).map_err(err)?;
    let seed = records
        .get(&seed_id)
        .ok_or_else(|| err(format!("seed {seed_id} not in cache")))?;
    let parsed = parse_tei_file(Path::new(tei_path), &config).map_err(err)?;
    let refs: Vec<_> =
        seed.reference_ids.iter().filter_map(|id| records.get(id)).cloned().collect();
    let profiles = profile_by_paper_id(
        &build_citation_profile(&parsed),
        &match_bib_to_records(&parsed, &refs, &config),
    );
    let outcome = subgraph::build_graph(seed, &records, &profiles, &config).map_err(err)?;
    let file = GraphFile { config_hash: config.config_hash(), graph: outcome.graph };
    canonical_json(&file).map_err(err)
}

/// Renders a graph JSON document as the graph-structured prompt.
#[pyfunction]
fn serialize_graph(graph_json: &str) -> PyResult<String> {
    serialize::serialize_graph(&parse_graph_json(graph_json)?).map_err(err)
}

/// Renders a graph JSON document as the structure-free prompt variant.
#[pyfunction]
fn serialize_plain(graph_json: &str) -> PyResult<String> {
    serialize::serialize_plain(&parse_graph_json(graph_json)?).map_err(err)
}

/// Invariant violations in a graph JSON document; empty means well formed.
#[pyfunction]
fn validate_graph(graph_json: &str) -> PyResult<Vec<String>> {
    Ok(validate_subgraph(&parse_graph_json(graph_json)?))
}

/// Node count and per-class edge counts of a graph JSON document, as the
/// tuple (nodes, explicit_pred, parallel_pred, direct_to_seed).
#[pyfunction]
fn edge_class_counts(graph_json: &str) -> PyResult<(usize, usize, usize, usize)> {
    let graph = parse_graph_json(graph_json)?;
    let counts = graph.edge_class_counts();
    Ok((graph.nodes.len(), counts.explicit_pred, counts.parallel_pred, counts.direct_to_seed))
}

#[pymodule]
fn citegraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compute_budget, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(score_components, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l_f1, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(wtop1, m)?)?;
    m.add_function(wrap_pyfunction!(build_graph_json, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_graph, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_plain, m)?)?;
    m.add_function(wrap_pyfunction!(validate_graph, m)?)?;
    m.add_function(wrap_pyfunction!(edge_class_counts, m)?)?;
    Ok(())
}
