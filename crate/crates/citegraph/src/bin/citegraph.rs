//! Command-line front end for the citation subgraph pipeline: fetching
//! metadata, building graphs, serializing prompts, building corpora, running
//! judged tournaments, computing metrics, and checking split hygiene.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use citegraph::config::PipelineConfig;
use citegraph::dataset::{
    build_corpus, corpus_stats, leak_check, CorpusRequest, GraphFile, SplitManifest,
};
use citegraph::gateway::{Gateway, HashedJudgeBackend, HttpChatBackend, StubBackend};
use citegraph::metrics::{load_embeddings, metrics_report};
use citegraph::model::{canonical_json, AnnotatedSubgraph, FiveFieldIdea, PaperId, PaperRecord};
use citegraph::s2::{load_cache_dir, FetchPolicy, HttpTransport, S2Client};
use citegraph::serialize::{estimate_tokens, serialize_graph, serialize_plain};
use citegraph::subgraph::build_graph;
use citegraph::tei::{
    build_citation_profile, match_bib_to_records, parse_tei_file, profile_by_paper_id,
};
use citegraph::tournament::{render_report, run_round_robin, MethodEntry};
use citegraph::{Error, Result};

const DEFAULT_METADATA_URL: &str = "https://api.semanticscholar.org";

#[derive(Parser)]
#[command(
    name = "citegraph",
    version,
    about = "Citation evolution subgraphs: construction, serialization, and evaluation"
)]
struct Cli {
    /// Pipeline configuration TOML; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Graph,
    Plain,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch a seed's metadata and citation neighborhood into the cache.
    Fetch {
        /// Seed paper id.
        #[arg(long)]
        seed: String,
        /// Metadata cache directory.
        #[arg(long)]
        cache_dir: PathBuf,
        /// Metadata API base URL.
        #[arg(long, default_value = DEFAULT_METADATA_URL)]
        base_url: String,
        /// Also fetch references of references.
        #[arg(long)]
        two_hop: bool,
    },
    /// Build one annotated subgraph from cached records and a TEI full text.
    BuildGraph {
        /// Seed paper id.
        #[arg(long)]
        seed: String,
        /// Metadata cache directory.
        #[arg(long)]
        cache_dir: PathBuf,
        /// TEI XML of the seed's full text.
        #[arg(long)]
        tei: PathBuf,
        /// Output graph JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a graph JSON file as prompt text.
    Serialize {
        /// Graph JSON produced by build-graph or dataset.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "graph")]
        variant: VariantArg,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the full corpus for a split manifest.
    Dataset {
        /// Split manifest TSV (id, year, venue).
        #[arg(long)]
        split: PathBuf,
        /// Metadata cache directory.
        #[arg(long)]
        cache_dir: PathBuf,
        /// Directory of <seed_id>.xml TEI files.
        #[arg(long)]
        tei_dir: PathBuf,
        /// LLM backend: stub:<script.json>, stub-hash, or <http_url>,<model>.
        #[arg(long)]
        backend: String,
        /// Corpus output directory.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a judged round-robin tournament over per-seed candidate ideas.
    Tournament {
        /// Competing method as name=ideas.jsonl; repeat for each method.
        #[arg(long, required = true, num_args = 1..)]
        method: Vec<String>,
        /// JSON object mapping seed ids to seed context text.
        #[arg(long)]
        contexts: PathBuf,
        /// LLM backend: stub:<script.json>, stub-hash, or <http_url>,<model>.
        #[arg(long)]
        backend: String,
        /// Write the full result JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the text report here in addition to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute surface metrics for candidate ideas against gold ideas.
    Metrics {
        /// Gold ideas JSONL ({"seed_id", "idea"} per line).
        #[arg(long)]
        gold: PathBuf,
        /// Candidate ideas JSONL; multiple lines per seed allowed.
        #[arg(long)]
        candidates: PathBuf,
        /// Embedding file for cosine-based metrics.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a built corpus directory.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Check a train/test split pair for id, title, and temporal leakage.
    LeakCheck {
        /// Train split manifest TSV.
        #[arg(long)]
        train: PathBuf,
        /// Test split manifest TSV.
        #[arg(long)]
        test: PathBuf,
        /// Metadata cache directory supplying test paper titles.
        #[arg(long)]
        cache_dir: PathBuf,
        /// Built train corpus directory for node-level coverage.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    let config = match path {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn make_gateway(spec: &str, config: &PipelineConfig) -> Result<Gateway> {
    if let Some(path) = spec.strip_prefix("stub:") {
        let backend = StubBackend::from_file(Path::new(path))?;
        return Ok(Gateway::new(Box::new(backend)));
    }
    if spec == "stub-hash" {
        let backend = HashedJudgeBackend::new(config.judge_dimensions.clone());
        return Ok(Gateway::new(Box::new(backend)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let (base_url, model) = spec.rsplit_once(',').ok_or_else(|| {
            Error::BadRequest("HTTP backend spec is <base_url>,<model>".into())
        })?;
        let api_key = std::env::var("CITEGRAPH_API_KEY").ok();
        let backend = HttpChatBackend::new(base_url, model, api_key)?;
        return Ok(Gateway::new(Box::new(backend)));
    }
    Err(Error::BadRequest(format!(
        "unknown backend spec {spec:?}; use stub:<script.json>, stub-hash, or <http_url>,<model>"
    )))
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph_file(path: &Path) -> Result<GraphFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn reference_records(
    seed: &PaperRecord,
    records: &BTreeMap<PaperId, PaperRecord>,
) -> Vec<PaperRecord> {
    seed.reference_ids.iter().filter_map(|id| records.get(id)).cloned().collect()
}

#[derive(serde::Deserialize)]
struct IdeaLine {
    seed_id: PaperId,
    idea: FiveFieldIdea,
}

fn load_idea_lines(path: &Path) -> Result<Vec<IdeaLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (line_number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: IdeaLine = serde_json::from_str(line).map_err(|e| {
            Error::BadMetricInput(format!("{} line {}: {e}", path.display(), line_number + 1))
        })?;
        parsed.idea.validate()?;
        lines.push(parsed);
    }
    if lines.is_empty() {
        return Err(Error::BadMetricInput(format!("{}: no idea lines", path.display())));
    }
    Ok(lines)
}

fn cmd_fetch(config: &PipelineConfig, seed: &str, cache_dir: &Path, base_url: &str, two_hop: bool) -> Result<()> {
    let _ = config;
    let seed_id = PaperId::new(seed)?;
    let client = S2Client::new(
        base_url,
        FetchPolicy::online(cache_dir),
        Box::new(HttpTransport::new()?),
    );
    let record = client.fetch_record(&seed_id)?;
    println!("seed: {} ({})", record.title, record.year.map_or("year unknown".into(), |y| y.to_string()));
    let references = client.fetch_seed_references(&seed_id)?;
    println!("cached {} reference records", references.len());
    if two_hop {
        // References of references carry no citation-pair properties, so
        // they fetch one by one without touching layer-1 cache entries.
        let mut fetched = 0usize;
        let mut missing = 0usize;
        for reference in &references {
            for second_hop in &reference.reference_ids {
                match client.fetch_record(second_hop) {
                    Ok(_) => fetched += 1,
                    Err(_) => missing += 1,
                }
            }
        }
        println!("cached {fetched} two-hop records ({missing} unavailable)");
    }
    Ok(())
}

fn cmd_build_graph(
    config: &PipelineConfig,
    seed: &str,
    cache_dir: &Path,
    tei: &Path,
    out: &Path,
) -> Result<()> {
    let records = load_cache_dir(cache_dir)?;
    let seed_id = PaperId::new(seed)?;
    let seed_record = records
        .get(&seed_id)
        .ok_or_else(|| Error::NotFound(format!("seed {seed_id} not in cache")))?;
    let parsed = parse_tei_file(tei, config)?;
    let refs = reference_records(seed_record, &records);
    let profile = build_citation_profile(&parsed);
    let matches = match_bib_to_records(&parsed, &refs, config);
    let profiles = profile_by_paper_id(&profile, &matches);
    let outcome = build_graph(seed_record, &records, &profiles, config)?;

    let counts = outcome.graph.edge_class_counts();
    println!(
        "retained {} of {} in-cone candidates (pool {}, budget {})",
        outcome.graph.nodes.len(),
        outcome.pool_size_in_cone,
        outcome.pool_size,
        outcome.graph.k_budget
    );
    println!(
        "edges: explicit={} parallel={} direct={}  dropped_future={} removed_cycle={}",
        counts.explicit_pred,
        counts.parallel_pred,
        counts.direct_to_seed,
        outcome.dropped_future_edges,
        outcome.removed_cycle_edges.len()
    );
    if !outcome.skipped.is_empty() {
        let skipped: Vec<String> = outcome.skipped.iter().map(|id| id.to_string()).collect();
        println!("skipped unfetchable refs: {}", skipped.join(", "));
    }
    let graph_file =
        GraphFile { config_hash: config.config_hash(), graph: outcome.graph };
    std::fs::write(out, canonical_json(&graph_file)?).map_err(|e| Error::io(out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_serialize(graph_path: &Path, variant: VariantArg, out: &Option<PathBuf>) -> Result<()> {
    let graph_file = load_graph_file(graph_path)?;
    let text = match variant {
        VariantArg::Graph => serialize_graph(&graph_file.graph)?,
        VariantArg::Plain => serialize_plain(&graph_file.graph)?,
    };
    write_or_print(out, &text)?;
    if out.is_some() {
        eprintln!("estimated tokens: {}", estimate_tokens(&text));
    }
    Ok(())
}

fn cmd_dataset(
    config: &PipelineConfig,
    split_path: &Path,
    cache_dir: &Path,
    tei_dir: &Path,
    backend: &str,
    out_dir: &Path,
) -> Result<()> {
    let split = SplitManifest::load(split_path)?;
    let records = load_cache_dir(cache_dir)?;
    let gateway = make_gateway(backend, config)?;
    let summary = build_corpus(&CorpusRequest {
        split: &split,
        split_path,
        records: &records,
        tei_dir,
        gateway: &gateway,
        config,
        out_dir,
    })?;
    println!(
        "built {} of {} seeds into {}",
        summary.built.len(),
        split.entries.len(),
        out_dir.display()
    );
    for failure in &summary.failures {
        println!("failed {}: {}", failure.seed_id, failure.reason);
    }
    Ok(())
}

fn cmd_tournament(
    config: &PipelineConfig,
    method_specs: &[String],
    contexts_path: &Path,
    backend: &str,
    json_out: &Option<PathBuf>,
    report_out: &Option<PathBuf>,
) -> Result<()> {
    let mut methods = Vec::new();
    for spec in method_specs {
        let (name, path) = spec.split_once('=').ok_or_else(|| {
            Error::BadTournament(format!("method spec {spec:?} is not name=path"))
        })?;
        methods.push(MethodEntry::load(name, Path::new(path))?);
    }
    let contexts_text =
        std::fs::read_to_string(contexts_path).map_err(|e| Error::io(contexts_path, e))?;
    let contexts: BTreeMap<PaperId, String> = serde_json::from_str(&contexts_text)?;
    let gateway = make_gateway(backend, config)?;
    let result = run_round_robin(&gateway, &methods, &contexts, config)?;
    let report = render_report(&result);
    print!("{report}");
    if let Some(path) = report_out {
        std::fs::write(path, &report).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = json_out {
        std::fs::write(path, canonical_json(&result)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn cmd_metrics(
    config: &PipelineConfig,
    gold_path: &Path,
    candidates_path: &Path,
    embeddings_path: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let mut gold: BTreeMap<PaperId, FiveFieldIdea> = BTreeMap::new();
    for line in load_idea_lines(gold_path)? {
        if gold.insert(line.seed_id.clone(), line.idea).is_some() {
            return Err(Error::BadMetricInput(format!(
                "{}: seed {} has two gold ideas",
                gold_path.display(),
                line.seed_id
            )));
        }
    }
    let mut candidates: BTreeMap<PaperId, Vec<FiveFieldIdea>> = BTreeMap::new();
    for line in load_idea_lines(candidates_path)? {
        candidates.entry(line.seed_id).or_default().push(line.idea);
    }
    let embeddings = match embeddings_path {
        Some(path) => Some(load_embeddings(path)?),
        None => None,
    };
    let report =
        metrics_report(&gold, &candidates, embeddings.as_ref(), &config.wtop1_field_weights)?;
    write_or_print(out, &canonical_json(&report)?)
}

fn cmd_stats(corpus: &Path) -> Result<()> {
    let stats = corpus_stats(corpus)?;
    print!("{}", canonical_json(&stats)?);
    Ok(())
}

fn cmd_leak_check(
    train_path: &Path,
    test_path: &Path,
    cache_dir: &Path,
    corpus: &Option<PathBuf>,
) -> Result<bool> {
    let train = SplitManifest::load(train_path)?;
    let test = SplitManifest::load(test_path)?;
    let records = load_cache_dir(cache_dir)?;
    let test_titles: BTreeMap<PaperId, String> = test
        .entries
        .iter()
        .filter_map(|entry| {
            records.get(&entry.id).map(|record| (entry.id.clone(), record.title.clone()))
        })
        .collect();

    let mut graphs: Vec<AnnotatedSubgraph> = Vec::new();
    if let Some(corpus_dir) = corpus {
        for entry in &train.entries {
            let path = corpus_dir.join(entry.id.as_str()).join("graph.json");
            if path.exists() {
                graphs.push(load_graph_file(&path)?.graph);
            }
        }
    }

    let report = leak_check(&train, &test, &test_titles, &graphs);
    for violation in report
        .id_violations
        .iter()
        .chain(&report.title_violations)
        .chain(&report.temporal_violations)
    {
        println!("LEAK: {violation}");
    }
    if report.is_clean() {
        println!(
            "leak check passed: {} test seeds against {} train seeds ({} graphs)",
            test.entries.len(),
            train.entries.len(),
            graphs.len()
        );
    } else {
        println!("leak check failed with {} violations", report.total_violations());
    }
    Ok(report.is_clean())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let config = load_config(&cli.config)?;
    match &cli.command {
        Command::Fetch { seed, cache_dir, base_url, two_hop } => {
            cmd_fetch(&config, seed, cache_dir, base_url, *two_hop)?;
        }
        Command::BuildGraph { seed, cache_dir, tei, out } => {
            cmd_build_graph(&config, seed, cache_dir, tei, out)?;
        }
        Command::Serialize { graph, variant, out } => {
            cmd_serialize(graph, *variant, out)?;
        }
        Command::Dataset { split, cache_dir, tei_dir, backend, out_dir } => {
            cmd_dataset(&config, split, cache_dir, tei_dir, backend, out_dir)?;
        }
        Command::Tournament { method, contexts, backend, json, report } => {
            cmd_tournament(&config, method, contexts, backend, json, report)?;
        }
        Command::Metrics { gold, candidates, embeddings, out } => {
            cmd_metrics(&config, gold, candidates, embeddings, out)?;
        }
        Command::Stats { corpus } => {
            cmd_stats(corpus)?;
        }
        Command::LeakCheck { train, test, cache_dir, corpus } => {
            if !cmd_leak_check(train, test, cache_dir, corpus)? {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(1)
        }
    }
}
