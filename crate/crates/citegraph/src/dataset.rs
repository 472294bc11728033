//! Corpus construction: drives the full per-seed pipeline (metadata, TEI
//! profile, graph build, idea extraction, serialization) across a split
//! manifest, writes per-seed artifact directories plus corpus-level SFT
//! files, and checks train/test splits for leakage.
//!
//! Seeds build in parallel but everything lands on disk in one sequential
//! pass afterwards, so two runs over the same inputs produce byte-identical
//! trees except for the manifest timestamp.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, SamplingConfig};
use crate::gateway::Gateway;
use crate::model::{
    canonical_json, AnnotatedSubgraph, PaperId, PaperRecord, PromptVariant, SftExample,
};
use crate::serialize::{estimate_tokens, make_sft_example};
use crate::subgraph::build_graph;
use crate::tei::{
    build_citation_profile, match_bib_to_records, normalize_title, parse_tei_file,
    profile_by_paper_id, seed_context_text,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Split manifests

/// One row of a split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub id: PaperId,
    pub year: i32,
    pub venue: String,
}

/// A train or test split: tab-separated `id`, `year`, `venue` rows under a
/// fixed header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub entries: Vec<SplitEntry>,
}

const SPLIT_HEADER: &str = "id\tyear\tvenue";

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Dataset(format!("{}: empty split file", path.display())))?;
        if header != SPLIT_HEADER {
            return Err(Error::Dataset(format!(
                "{}: bad header {header:?}, expected {SPLIT_HEADER:?}",
                path.display()
            )));
        }
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (line_number, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let columns: Vec<&str> = line.split('\t').collect();
            if columns.len() != 3 {
                return Err(Error::Dataset(format!(
                    "{} line {}: expected 3 columns, got {}",
                    path.display(),
                    line_number + 2,
                    columns.len()
                )));
            }
            let id = PaperId::new(columns[0])?;
            let year: i32 = columns[1].parse().map_err(|_| {
                Error::Dataset(format!(
                    "{} line {}: bad year {:?}",
                    path.display(),
                    line_number + 2,
                    columns[1]
                ))
            })?;
            if !seen.insert(id.clone()) {
                return Err(Error::Dataset(format!(
                    "{} line {}: duplicate id {id}",
                    path.display(),
                    line_number + 2
                )));
            }
            entries.push(SplitEntry { id, year, venue: columns[2].to_string() });
        }
        if entries.is_empty() {
            return Err(Error::Dataset(format!("{}: no entries", path.display())));
        }
        Ok(SplitManifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from(SPLIT_HEADER);
        out.push('\n');
        for entry in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", entry.id, entry.year, entry.venue);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn ids(&self) -> BTreeSet<PaperId> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Corpus build

/// Everything a corpus build needs.
pub struct CorpusRequest<'a> {
    pub split: &'a SplitManifest,
    /// Path of the split file, digested into the manifest.
    pub split_path: &'a Path,
    /// Metadata records for seeds, references, and two-hop discoveries.
    pub records: &'a BTreeMap<PaperId, PaperRecord>,
    /// Directory of `<seed_id>.xml` TEI full texts.
    pub tei_dir: &'a Path,
    pub gateway: &'a Gateway,
    pub config: &'a PipelineConfig,
    pub out_dir: &'a Path,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed_id: PaperId,
    pub reason: String,
}

/// Corpus-level manifest written next to the per-seed directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config_hash: String,
    pub input_digests: InputDigests,
    pub sampling: SamplingConfig,
    /// Wall-clock build time, seconds since the Unix epoch. The only
    /// nondeterministic byte in the corpus.
    pub generated_at_unix: u64,
    pub seed_count: usize,
    pub built: Vec<PaperId>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigests {
    pub split_sha256: String,
    pub records_sha256: String,
    pub tei_sha256: String,
}

/// Per-seed graph artifact: the annotated graph stamped with the config
/// hash that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub config_hash: String,
    pub graph: AnnotatedSubgraph,
}

#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub built: Vec<PaperId>,
    pub failures: Vec<FailureRecord>,
    pub manifest_path: PathBuf,
}

struct SeedBuild {
    seed_id: PaperId,
    graph_file: String,
    prompt_graph: String,
    prompt_plain: String,
    sft_graph: SftExample,
    sft_plain: SftExample,
    log: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn is_safe_id(id: &PaperId) -> bool {
    let text = id.as_str();
    !text.is_empty()
        && text.len() <= 128
        && text.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || b == b'-')
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn input_digests(request: &CorpusRequest) -> Result<InputDigests> {
    let split_bytes =
        std::fs::read(request.split_path).map_err(|e| Error::io(request.split_path, e))?;

    let mut records_hasher = Sha256::new();
    for (id, record) in request.records {
        records_hasher.update(id.as_str().as_bytes());
        records_hasher.update([0u8]);
        records_hasher.update(canonical_json(record)?.as_bytes());
    }

    let mut tei_hasher = Sha256::new();
    for entry in &request.split.entries {
        let path = request.tei_dir.join(format!("{}.xml", entry.id));
        tei_hasher.update(entry.id.as_str().as_bytes());
        tei_hasher.update([0u8]);
        if let Ok(bytes) = std::fs::read(&path) {
            tei_hasher.update(&bytes);
        }
        tei_hasher.update([0u8]);
    }

    Ok(InputDigests {
        split_sha256: sha256_hex(&split_bytes),
        records_sha256: hex::encode(records_hasher.finalize()),
        tei_sha256: hex::encode(tei_hasher.finalize()),
    })
}

fn build_seed(request: &CorpusRequest, seed_id: &PaperId) -> std::result::Result<SeedBuild, String> {
    if !is_safe_id(seed_id) {
        return Err("seed id is not filesystem safe".into());
    }
    let seed = request
        .records
        .get(seed_id)
        .ok_or_else(|| "no metadata record in cache".to_string())?;

    let tei_path = request.tei_dir.join(format!("{seed_id}.xml"));
    let parsed = parse_tei_file(&tei_path, request.config)
        .map_err(|e| format!("TEI parse failed: {e}"))?;

    let reference_records: Vec<PaperRecord> = seed
        .reference_ids
        .iter()
        .filter_map(|id| request.records.get(id))
        .cloned()
        .collect();
    let profile = build_citation_profile(&parsed);
    let matches = match_bib_to_records(&parsed, &reference_records, request.config);
    let profiles = profile_by_paper_id(&profile, &matches);

    let outcome = build_graph(seed, request.records, &profiles, request.config)
        .map_err(|e| format!("graph build failed: {e}"))?;
    let mut graph = outcome.graph;

    // The training target: a pre-extracted idea on the seed record wins,
    // otherwise the introduction and method text feeds the extractor.
    let (seed_idea, seed_idea_source) = match &seed.idea {
        Some(idea) => (idea.clone(), "preexisting"),
        None => {
            let context = seed_context_text(&parsed);
            let basis = if context.trim().is_empty() { &seed.abstract_text } else { &context };
            if basis.trim().is_empty() {
                return Err("no seed text available for idea extraction".into());
            }
            let paper_text = format!("TITLE: {}\n\n{}", seed.title, basis);
            let idea = request
                .gateway
                .extract_idea(&paper_text)
                .map_err(|e| format!("seed idea extraction failed: {e}"))?;
            (idea, "extracted")
        }
    };

    // Node ideas are best effort: extraction failures render as
    // `unavailable` rather than failing the seed.
    let mut ideas_extracted = 0usize;
    let mut ideas_preexisting = 0usize;
    let mut ideas_unavailable = 0usize;
    for node in &mut graph.nodes {
        if node.record.idea.is_some() {
            ideas_preexisting += 1;
            continue;
        }
        let paper_text =
            format!("TITLE: {}\n\n{}", node.record.title, node.record.abstract_text);
        match request.gateway.extract_idea(&paper_text) {
            Ok(idea) => {
                node.record.idea = Some(idea);
                ideas_extracted += 1;
            }
            Err(_) => ideas_unavailable += 1,
        }
    }

    let sft_graph = make_sft_example(&graph, PromptVariant::Graph, &seed_idea)
        .map_err(|e| format!("graph serialization failed: {e}"))?;
    let sft_plain = make_sft_example(&graph, PromptVariant::Plain, &seed_idea)
        .map_err(|e| format!("plain serialization failed: {e}"))?;
    let graph_tokens = estimate_tokens(&sft_graph.prompt);
    let plain_tokens = estimate_tokens(&sft_plain.prompt);
    if graph_tokens > request.config.max_prompt_tokens {
        return Err(format!(
            "graph prompt estimates {graph_tokens} tokens, over the {} budget",
            request.config.max_prompt_tokens
        ));
    }

    let counts = graph.edge_class_counts();
    let mut log = String::new();
    let _ = writeln!(log, "seed: {seed_id}");
    let _ = writeln!(log, "pool_size: {}", outcome.pool_size);
    let _ = writeln!(log, "pool_in_cone: {}", outcome.pool_size_in_cone);
    let _ = writeln!(log, "budget_k: {}", graph.k_budget);
    let _ = writeln!(log, "retained_nodes: {}", graph.nodes.len());
    let skipped = if outcome.skipped.is_empty() {
        "none".to_string()
    } else {
        outcome.skipped.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ")
    };
    let _ = writeln!(log, "skipped_refs: {skipped}");
    let _ = writeln!(log, "dropped_future_edges: {}", outcome.dropped_future_edges);
    let removed = if outcome.removed_cycle_edges.is_empty() {
        "none".to_string()
    } else {
        outcome
            .removed_cycle_edges
            .iter()
            .map(|(from, to)| format!("{from}->{to}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(log, "removed_cycle_edges: {removed}");
    let _ = writeln!(
        log,
        "edge_counts: explicit={} parallel={} direct={}",
        counts.explicit_pred, counts.parallel_pred, counts.direct_to_seed
    );
    let _ = writeln!(log, "seed_idea_source: {seed_idea_source}");
    let _ = writeln!(
        log,
        "node_ideas: extracted={ideas_extracted} preexisting={ideas_preexisting} unavailable={ideas_unavailable}"
    );
    let _ = writeln!(log, "token_estimate_graph: {graph_tokens}");
    let _ = writeln!(log, "token_estimate_plain: {plain_tokens}");

    let graph_file = canonical_json(&GraphFile {
        config_hash: request.config.config_hash(),
        graph: graph.clone(),
    })
    .map_err(|e| format!("graph encoding failed: {e}"))?;

    Ok(SeedBuild {
        seed_id: seed_id.clone(),
        graph_file,
        prompt_graph: sft_graph.prompt.clone(),
        prompt_plain: sft_plain.prompt.clone(),
        sft_graph,
        sft_plain,
        log,
    })
}

/// Builds the corpus for one split. Seeds run in parallel; failures are
/// tolerated up to the configured fraction and recorded in the manifest.
pub fn build_corpus(request: &CorpusRequest) -> Result<CorpusSummary> {
    request.config.validate()?;
    if request.split.entries.is_empty() {
        return Err(Error::Dataset("split manifest has no entries".into()));
    }
    std::fs::create_dir_all(request.out_dir).map_err(|e| Error::io(request.out_dir, e))?;

    let results: Vec<std::result::Result<SeedBuild, FailureRecord>> = request
        .split
        .entries
        .par_iter()
        .map(|entry| {
            build_seed(request, &entry.id).map_err(|reason| FailureRecord {
                seed_id: entry.id.clone(),
                reason,
            })
        })
        .collect();

    let mut builds: Vec<SeedBuild> = Vec::new();
    let mut failures: Vec<FailureRecord> = Vec::new();
    for result in results {
        match result {
            Ok(build) => builds.push(build),
            Err(failure) => failures.push(failure),
        }
    }
    builds.sort_by(|a, b| a.seed_id.cmp(&b.seed_id));
    failures.sort_by(|a, b| a.seed_id.cmp(&b.seed_id));

    let total = request.split.entries.len();
    let budget = request.config.max_failure_fraction * total as f64;
    if failures.len() as f64 > budget {
        let detail: Vec<String> =
            failures.iter().map(|f| format!("{}: {}", f.seed_id, f.reason)).collect();
        return Err(Error::Dataset(format!(
            "{} of {} seeds failed, over the {:.0}% budget: {}",
            failures.len(),
            total,
            request.config.max_failure_fraction * 100.0,
            detail.join("; ")
        )));
    }

    let mut sft_graph_lines = String::new();
    let mut sft_plain_lines = String::new();
    for build in &builds {
        let seed_dir = request.out_dir.join(build.seed_id.as_str());
        std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
        write_text(&seed_dir.join("graph.json"), &build.graph_file)?;
        write_text(&seed_dir.join("prompt_graph.txt"), &build.prompt_graph)?;
        write_text(&seed_dir.join("prompt_plain.txt"), &build.prompt_plain)?;
        let graph_line = serde_json::to_string(&build.sft_graph)?;
        let plain_line = serde_json::to_string(&build.sft_plain)?;
        write_text(&seed_dir.join("sft.jsonl"), &format!("{graph_line}\n{plain_line}\n"))?;
        write_text(&seed_dir.join("log.txt"), &build.log)?;
        sft_graph_lines.push_str(&graph_line);
        sft_graph_lines.push('\n');
        sft_plain_lines.push_str(&plain_line);
        sft_plain_lines.push('\n');
    }
    write_text(&request.out_dir.join("sft_graph.jsonl"), &sft_graph_lines)?;
    write_text(&request.out_dir.join("sft_plain.jsonl"), &sft_plain_lines)?;

    let manifest = CorpusManifest {
        config_hash: request.config.config_hash(),
        input_digests: input_digests(request)?,
        sampling: request.config.sampling.clone(),
        generated_at_unix: unix_now(),
        seed_count: total,
        built: builds.iter().map(|b| b.seed_id.clone()).collect(),
        failures: failures.clone(),
    };
    let manifest_path = request.out_dir.join("manifest.json");
    write_text(&manifest_path, &canonical_json(&manifest)?)?;

    Ok(CorpusSummary {
        built: manifest.built.clone(),
        failures,
        manifest_path,
    })
}

// ---------------------------------------------------------------------------
// Leak checking

/// Split hygiene findings. Each violation names the offending test id once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LeakReport {
    pub id_violations: Vec<String>,
    pub title_violations: Vec<String>,
    pub temporal_violations: Vec<String>,
}

impl LeakReport {
    pub fn is_clean(&self) -> bool {
        self.id_violations.is_empty()
            && self.title_violations.is_empty()
            && self.temporal_violations.is_empty()
    }

    pub fn total_violations(&self) -> usize {
        self.id_violations.len() + self.title_violations.len() + self.temporal_violations.len()
    }
}

/// Checks a test split against everything the train side has seen: train
/// seed ids, retained node ids, and both seed-level and node-level reference
/// lists, plus normalized titles and the temporal split boundary.
pub fn leak_check(
    train: &SplitManifest,
    test: &SplitManifest,
    test_titles: &BTreeMap<PaperId, String>,
    train_graphs: &[AnnotatedSubgraph],
) -> LeakReport {
    let mut coverage: BTreeMap<PaperId, &'static str> = BTreeMap::new();
    for entry in &train.entries {
        coverage.entry(entry.id.clone()).or_insert("train seed");
    }
    let mut train_titles: BTreeMap<String, String> = BTreeMap::new();
    for graph in train_graphs {
        coverage.entry(graph.seed.id.clone()).or_insert("train seed");
        let normalized = normalize_title(&graph.seed.title);
        if !normalized.is_empty() {
            train_titles.entry(normalized).or_insert_with(|| format!("seed {}", graph.seed.id));
        }
        for reference in &graph.seed.reference_ids {
            coverage.entry(reference.clone()).or_insert("train seed reference");
        }
        for node in &graph.nodes {
            coverage.entry(node.record.id.clone()).or_insert("retained train node");
            let normalized = normalize_title(&node.record.title);
            if !normalized.is_empty() {
                train_titles
                    .entry(normalized)
                    .or_insert_with(|| format!("node {}", node.record.id));
            }
            for reference in &node.record.reference_ids {
                coverage.entry(reference.clone()).or_insert("train node reference");
            }
        }
    }

    let mut report = LeakReport::default();
    for id in test.ids() {
        if let Some(role) = coverage.get(&id) {
            report.id_violations.push(format!("test id {id} appears in train data as {role}"));
        }
    }
    for (id, title) in test_titles {
        let normalized = normalize_title(title);
        if normalized.is_empty() {
            continue;
        }
        if let Some(source) = train_titles.get(&normalized) {
            report
                .title_violations
                .push(format!("test paper {id} title duplicates train {source}"));
        }
    }

    let max_train_year = train.entries.iter().map(|e| e.year).max();
    let min_test_year = test.entries.iter().map(|e| e.year).min();
    if let (Some(train_year), Some(test_year)) = (max_train_year, min_test_year) {
        if test_year <= train_year {
            report.temporal_violations.push(format!(
                "test split starts at {test_year} but train split reaches {train_year}"
            ));
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Corpus statistics

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RangeSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl RangeSummary {
    fn over(values: &[usize]) -> Self {
        if values.is_empty() {
            return RangeSummary::default();
        }
        RangeSummary {
            min: *values.iter().min().expect("non-empty"),
            max: *values.iter().max().expect("non-empty"),
            mean: values.iter().sum::<usize>() as f64 / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub seed_count: usize,
    pub built: usize,
    pub failed: usize,
    pub nodes: RangeSummary,
    pub explicit_edges: usize,
    pub parallel_edges: usize,
    pub direct_nodes: usize,
    pub graph_tokens: RangeSummary,
    pub plain_tokens: RangeSummary,
    pub sft_examples: usize,
}

/// Reads a built corpus directory back and summarizes it.
pub fn corpus_stats(corpus_dir: &Path) -> Result<CorpusStats> {
    let manifest_path = corpus_dir.join("manifest.json");
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&manifest_text)?;

    let mut node_counts = Vec::new();
    let mut graph_tokens = Vec::new();
    let mut plain_tokens = Vec::new();
    let mut explicit_edges = 0usize;
    let mut parallel_edges = 0usize;
    let mut direct_nodes = 0usize;
    let mut sft_examples = 0usize;
    for seed_id in &manifest.built {
        let seed_dir = corpus_dir.join(seed_id.as_str());
        let graph_path = seed_dir.join("graph.json");
        let graph_text =
            std::fs::read_to_string(&graph_path).map_err(|e| Error::io(&graph_path, e))?;
        let graph_file: GraphFile = serde_json::from_str(&graph_text)?;
        let counts = graph_file.graph.edge_class_counts();
        node_counts.push(graph_file.graph.nodes.len());
        explicit_edges += counts.explicit_pred;
        parallel_edges += counts.parallel_pred;
        direct_nodes += counts.direct_to_seed;

        for (name, sink) in
            [("prompt_graph.txt", &mut graph_tokens), ("prompt_plain.txt", &mut plain_tokens)]
        {
            let path = seed_dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            sink.push(estimate_tokens(&text));
        }

        let sft_path = seed_dir.join("sft.jsonl");
        let sft_text = std::fs::read_to_string(&sft_path).map_err(|e| Error::io(&sft_path, e))?;
        for line in sft_text.lines().filter(|l| !l.trim().is_empty()) {
            let example: SftExample = serde_json::from_str(line)?;
            example.validate().map_err(|e| {
                Error::Dataset(format!("{}: invalid example: {e}", sft_path.display()))
            })?;
            sft_examples += 1;
        }
    }

    Ok(CorpusStats {
        seed_count: manifest.seed_count,
        built: manifest.built.len(),
        failed: manifest.failures.len(),
        nodes: RangeSummary::over(&node_counts),
        explicit_edges,
        parallel_edges,
        direct_nodes,
        graph_tokens: RangeSummary::over(&graph_tokens),
        plain_tokens: RangeSummary::over(&plain_tokens),
        sft_examples,
    })
}
