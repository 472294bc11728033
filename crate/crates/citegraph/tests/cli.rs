//! End-to-end checks of the command-line binary: argument handling, output
//! formats, and exit codes, all against the committed fixtures.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

struct CliRun {
    code: Option<i32>,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> CliRun {
    let output = Command::new(env!("CARGO_BIN_EXE_citegraph"))
        .args(args)
        .output()
        .expect("binary runs");
    CliRun {
        code: output.status.code(),
        stdout: String::from_utf8(output.stdout).expect("stdout is UTF-8"),
        stderr: String::from_utf8(output.stderr).expect("stderr is UTF-8"),
    }
}

#[test]
fn serialize_renders_graph_variant_to_stdout() {
    let graph = fixture("golden_corpus/P0201/graph.json");
    let run = run(&["serialize", "--graph", graph.to_str().unwrap()]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    let expected =
        std::fs::read_to_string(fixture("golden_corpus/P0201/prompt_graph.txt")).unwrap();
    assert_eq!(run.stdout, expected);
}

#[test]
fn serialize_writes_plain_variant_to_file_and_reports_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plain.txt");
    let graph = fixture("golden_corpus/P0201/graph.json");
    let run = run(&[
        "serialize",
        "--graph",
        graph.to_str().unwrap(),
        "--variant",
        "plain",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    let expected =
        std::fs::read_to_string(fixture("golden_corpus/P0201/prompt_plain.txt")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), expected);
    assert!(
        run.stderr.contains("estimated tokens: 964"),
        "stderr was: {}",
        run.stderr
    );
}

#[test]
fn build_graph_reports_counts_and_writes_parseable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.json");
    let run = run(&[
        "build-graph",
        "--seed",
        "P0201",
        "--cache-dir",
        fixture("s2_cache").to_str().unwrap(),
        "--tei",
        fixture("tei/P0201.xml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    assert!(
        run.stdout.contains("retained 5 of 5 in-cone candidates (pool 8, budget 12)"),
        "stdout was: {}",
        run.stdout
    );
    assert!(
        run.stdout
            .contains("edges: explicit=4 parallel=1 direct=2  dropped_future=0 removed_cycle=0"),
        "stdout was: {}",
        run.stdout
    );

    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written["graph"]["nodes"].as_array().unwrap().len(), 5);
    // Same default config as the committed corpus, so the same hash.
    let golden: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixture("golden_corpus/P0201/graph.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(written["config_hash"], golden["config_hash"]);
}

#[test]
fn stats_summarizes_a_built_corpus() {
    let run = run(&["stats", "--corpus", fixture("golden_corpus").to_str().unwrap()]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    let stats: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(stats["seed_count"], serde_json::json!(3));
    assert_eq!(stats["built"], serde_json::json!(3));
    assert_eq!(stats["failed"], serde_json::json!(0));
    assert_eq!(stats["nodes"]["min"], serde_json::json!(5));
    assert_eq!(stats["nodes"]["max"], serde_json::json!(18));
    assert_eq!(stats["explicit_edges"], serde_json::json!(65));
    assert_eq!(stats["parallel_edges"], serde_json::json!(34));
    assert_eq!(stats["direct_nodes"], serde_json::json!(9));
    assert_eq!(stats["sft_examples"], serde_json::json!(6));
    assert_eq!(stats["graph_tokens"]["max"], serde_json::json!(7179));
}

#[test]
fn tournament_writes_report_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("result.json");
    let report_path = dir.path().join("report.txt");
    let method = |name: &str| format!("{}={}", name, fixture(&format!("methods/{name}.jsonl")).display());
    let run = run(&[
        "tournament",
        "--method",
        &method("alpha"),
        &method("beta"),
        &method("gamma"),
        "--contexts",
        fixture("methods/contexts.json").to_str().unwrap(),
        "--backend",
        "stub-hash",
        "--json",
        json_path.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    assert!(run.stdout.contains("JUDGED ROUND-ROBIN TOURNAMENT"));
    assert!(run.stdout.contains("abstentions: 0"));
    assert_eq!(std::fs::read_to_string(&report_path).unwrap(), run.stdout);

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let means = result["scores"]["mean_points"].as_object().unwrap();
    assert_eq!(means.len(), 3);
    let total: f64 = means.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 60.0).abs() < 1e-9, "mean points total {total}");
    let rank1 = result["scores"]["rank1_counts"].as_object().unwrap();
    let rank1_total: u64 = rank1.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(rank1_total, 3);
}

#[test]
fn metrics_without_embeddings_reports_rouge_only() {
    let run = run(&[
        "metrics",
        "--gold",
        fixture("metrics/gold.jsonl").to_str().unwrap(),
        "--candidates",
        fixture("metrics/candidates.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    let report: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(report["mean_mrouge"], serde_json::json!(1.0));
    assert!(report["mean_wtop1"].is_null());
    assert!(report["embedding_source_tag"].is_null());
    assert!(report["bert_f1"].as_str().unwrap().contains("out_of_scope"));
}

#[test]
fn metrics_with_embeddings_adds_cosine_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let run = run(&[
        "metrics",
        "--gold",
        fixture("metrics/gold.jsonl").to_str().unwrap(),
        "--candidates",
        fixture("metrics/candidates.jsonl").to_str().unwrap(),
        "--embeddings",
        fixture("embeddings/embeddings.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stderr: {}", run.stderr);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["embedding_source_tag"], serde_json::json!("fixture-embed-v1"));
    let mean_wtop1 = report["mean_wtop1"].as_f64().unwrap();
    assert!((mean_wtop1 - 1.0).abs() < 1e-9, "mean_wtop1 {mean_wtop1}");
    for seed in report["seeds"].as_array().unwrap() {
        if !seed["wtop1"].is_null() {
            // The doubled-gold candidate sits at index 0 for every seed.
            assert_eq!(seed["wtop1_index"], serde_json::json!(0));
        }
    }
}

#[test]
fn leak_check_passes_on_disjoint_splits() {
    let run = run(&[
        "leak-check",
        "--train",
        fixture("seeds/train.tsv").to_str().unwrap(),
        "--test",
        fixture("seeds/test.tsv").to_str().unwrap(),
        "--cache-dir",
        fixture("s2_cache").to_str().unwrap(),
        "--corpus",
        fixture("golden_corpus").to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(0), "stdout: {}\nstderr: {}", run.stdout, run.stderr);
    assert!(
        run.stdout.contains("leak check passed: 1 test seeds against 3 train seeds (3 graphs)"),
        "stdout was: {}",
        run.stdout
    );
    assert!(!run.stdout.contains("LEAK:"));
}

#[test]
fn leak_check_flags_planted_leaks_with_exit_two() {
    let run = run(&[
        "leak-check",
        "--train",
        fixture("seeds/train.tsv").to_str().unwrap(),
        "--test",
        fixture("seeds/test_leaky.tsv").to_str().unwrap(),
        "--cache-dir",
        fixture("s2_cache").to_str().unwrap(),
        "--corpus",
        fixture("golden_corpus").to_str().unwrap(),
    ]);
    assert_eq!(run.code, Some(2), "stdout: {}\nstderr: {}", run.stdout, run.stderr);
    assert_eq!(run.stdout.matches("LEAK:").count(), 3, "stdout was: {}", run.stdout);
    assert!(run.stdout.contains("A05"), "stdout was: {}", run.stdout);
    assert!(run.stdout.contains("P0999"), "stdout was: {}", run.stdout);
    assert!(run.stdout.contains("leak check failed with 3 violations"));
}

#[test]
fn unknown_backend_spec_exits_one() {
    let run = run(&[
        "tournament",
        "--method",
        &format!("alpha={}", fixture("methods/alpha.jsonl").display()),
        "--contexts",
        fixture("methods/contexts.json").to_str().unwrap(),
        "--backend",
        "carrier-pigeon",
    ]);
    assert_eq!(run.code, Some(1));
    assert!(run.stderr.contains("unknown backend spec"), "stderr was: {}", run.stderr);
}

#[test]
fn malformed_method_spec_exits_one() {
    let run = run(&[
        "tournament",
        "--method",
        "alpha-without-a-path",
        "--contexts",
        fixture("methods/contexts.json").to_str().unwrap(),
        "--backend",
        "stub-hash",
    ]);
    assert_eq!(run.code, Some(1));
    assert!(run.stderr.contains("not name=path"), "stderr was: {}", run.stderr);
}

#[test]
fn missing_input_file_exits_one() {
    let run = run(&["serialize", "--graph", "/nonexistent/graph.json"]);
    assert_eq!(run.code, Some(1));
    assert!(run.stderr.starts_with("error:"), "stderr was: {}", run.stderr);
}
