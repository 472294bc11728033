//! Surface metrics for generated ideas: ROUGE-L F1 over a documented
//! tokenization, cosine similarity with typed failure modes, weighted top-1
//! embedding selection, and oracle top-1 helpers. Embedding vectors are
//! ingested from a line-oriented JSON file; nothing here computes neural
//! similarity scores.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{FiveFieldIdea, IdeaField, PaperId};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// ROUGE-L

/// Lowercases and splits on every non-alphanumeric character, so both
/// whitespace and punctuation separate tokens. Unicode-aware.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // Two-row DP keeps memory linear in the shorter side.
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for token_a in a {
        for (j, token_b) in b.iter().enumerate() {
            curr[j + 1] = if token_a == token_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L F1 between candidate and reference text. Returns 0.0 when either
/// side has no tokens.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(&cand, &refr) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / cand.len() as f64;
    let recall = lcs / refr.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

// ---------------------------------------------------------------------------
// Cosine

/// Cosine similarity. Errors on length mismatch or a zero-norm input.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let mut dot = 0.0;
    let mut norm_u = 0.0;
    let mut norm_v = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        norm_u += a * a;
        norm_v += b * b;
    }
    if norm_u == 0.0 || norm_v == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (norm_u.sqrt() * norm_v.sqrt()))
}

// ---------------------------------------------------------------------------
// Embedding ingestion

/// One idea's embeddings: a vector per schema field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaVectors {
    pub fields: BTreeMap<String, Vec<f64>>,
}

impl IdeaVectors {
    pub fn vector(&self, field: IdeaField) -> Option<&Vec<f64>> {
        self.fields.get(field.slug())
    }

    fn complete(&self) -> bool {
        IdeaField::ALL.iter().all(|f| self.fields.contains_key(f.slug()))
    }
}

/// Per-seed embeddings: the gold idea plus index-ordered candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedEmbeddings {
    pub gold: IdeaVectors,
    pub candidates: Vec<IdeaVectors>,
}

/// Parsed embedding file: provenance header plus per-seed vector sets.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dimension: usize,
    pub source_tag: String,
    pub seeds: BTreeMap<PaperId, SeedEmbeddings>,
}

#[derive(Deserialize)]
struct EmbeddingHeader {
    dimension: usize,
    source_tag: String,
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    seed_id: PaperId,
    role: String,
    field: String,
    vector: Vec<f64>,
}

type FieldVectors = BTreeMap<String, Vec<f64>>;

/// Reads an embedding file: a header line `{"dimension", "source_tag"}`
/// followed by one record per line with `seed_id`, `role` (`gold` or
/// `candidate_<k>`), `field` (schema slug), and `vector`.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = lines
        .next()
        .ok_or_else(|| Error::BadMetricInput(format!("{}: empty embedding file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: EmbeddingHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::BadMetricInput(format!("embedding header: {e}")))?;
    if header.dimension == 0 {
        return Err(Error::BadMetricInput("embedding dimension must be positive".into()));
    }

    let mut staged: BTreeMap<PaperId, (FieldVectors, BTreeMap<usize, FieldVectors>)> =
        BTreeMap::new();
    for (line_no, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| Error::BadMetricInput(format!("embedding line {}: {e}", line_no + 2)))?;
        if record.vector.len() != header.dimension {
            return Err(Error::DimensionMismatch {
                left: record.vector.len(),
                right: header.dimension,
            });
        }
        if IdeaField::parse_slug(&record.field).is_none() {
            return Err(Error::BadMetricInput(format!("unknown idea field {}", record.field)));
        }
        let entry = staged.entry(record.seed_id.clone()).or_default();
        if record.role == "gold" {
            entry.0.insert(record.field, record.vector);
        } else if let Some(index) = record.role.strip_prefix("candidate_") {
            let index: usize = index.parse().map_err(|_| {
                Error::BadMetricInput(format!("bad candidate role {}", record.role))
            })?;
            entry.1.entry(index).or_default().insert(record.field, record.vector);
        } else {
            return Err(Error::BadMetricInput(format!("unknown role {}", record.role)));
        }
    }

    let mut seeds = BTreeMap::new();
    for (seed_id, (gold_fields, candidate_map)) in staged {
        let gold = IdeaVectors { fields: gold_fields };
        if !gold.complete() {
            return Err(Error::BadMetricInput(format!("seed {seed_id}: gold embeddings incomplete")));
        }
        let mut candidates = Vec::new();
        for (expected, (index, fields)) in candidate_map.into_iter().enumerate() {
            if index != expected {
                return Err(Error::BadMetricInput(format!(
                    "seed {seed_id}: candidate indices not contiguous at {index}"
                )));
            }
            let vectors = IdeaVectors { fields };
            if !vectors.complete() {
                return Err(Error::BadMetricInput(format!(
                    "seed {seed_id}: candidate {index} embeddings incomplete"
                )));
            }
            candidates.push(vectors);
        }
        seeds.insert(seed_id, SeedEmbeddings { gold, candidates });
    }

    Ok(EmbeddingSet { dimension: header.dimension, source_tag: header.source_tag, seeds })
}

// ---------------------------------------------------------------------------
// Weighted top-1 and oracle selection

/// Weighted similarity of one candidate against the gold idea: the
/// field-weighted sum of per-field cosines.
pub fn weighted_similarity(
    candidate: &IdeaVectors,
    gold: &IdeaVectors,
    weights: &[f64; 5],
) -> Result<f64> {
    let mut total = 0.0;
    for (field, weight) in IdeaField::ALL.iter().zip(weights) {
        let cand = candidate
            .vector(*field)
            .ok_or_else(|| Error::BadMetricInput(format!("candidate missing field {}", field.slug())))?;
        let gold_vec = gold
            .vector(*field)
            .ok_or_else(|| Error::BadMetricInput(format!("gold missing field {}", field.slug())))?;
        total += weight * cosine(cand, gold_vec)?;
    }
    Ok(total)
}

/// Best weighted similarity over all candidates; ties keep the lowest index.
pub fn wtop1(candidates: &[IdeaVectors], gold: &IdeaVectors, weights: &[f64; 5]) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::BadMetricInput("wtop1 requires at least one candidate".into()));
    }
    let mut best_index = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (index, candidate) in candidates.iter().enumerate() {
        let score = weighted_similarity(candidate, gold, weights)?;
        if score > best_score {
            best_score = score;
            best_index = index;
        }
    }
    Ok((best_index, best_score))
}

/// Picks the candidate maximizing `score(candidate, gold)`; ties keep the
/// lowest index.
pub fn oracle_top1<S>(candidates: &[FiveFieldIdea], gold: &FiveFieldIdea, score: S) -> Result<(usize, f64)>
where
    S: Fn(&FiveFieldIdea, &FiveFieldIdea) -> f64,
{
    if candidates.is_empty() {
        return Err(Error::BadMetricInput("oracle selection requires candidates".into()));
    }
    let mut best_index = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (index, candidate) in candidates.iter().enumerate() {
        let value = score(candidate, gold);
        if value > best_score {
            best_score = value;
            best_index = index;
        }
    }
    Ok((best_index, best_score))
}

/// Oracle top-1 by ROUGE-L F1 on the Proposed Method field.
pub fn mrouge(candidates: &[FiveFieldIdea], gold: &FiveFieldIdea) -> Result<(usize, f64)> {
    oracle_top1(candidates, gold, |cand, gold| {
        rouge_l_f1(&cand.proposed_method, &gold.proposed_method)
    })
}

// ---------------------------------------------------------------------------
// Report

/// Marker for similarity columns this toolkit deliberately does not compute.
pub const OUT_OF_SCOPE: &str = "out_of_scope";

#[derive(Debug, Clone, Serialize)]
pub struct SeedMetrics {
    pub seed_id: PaperId,
    pub wtop1: Option<f64>,
    pub wtop1_index: Option<usize>,
    pub mrouge: Option<f64>,
    pub mrouge_index: Option<usize>,
    /// Always `out_of_scope`: neural similarity is not computed here.
    pub bert_f1: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// Tokenization documented for reproducibility.
    pub tokenizer: String,
    pub embedding_source_tag: Option<String>,
    pub field_weights: [f64; 5],
    pub seeds: Vec<SeedMetrics>,
    pub mean_wtop1: Option<f64>,
    pub mean_mrouge: Option<f64>,
    pub bert_f1: String,
}

/// Computes per-seed and aggregate surface metrics. Either input may be
/// absent for a seed; the corresponding column stays empty.
pub fn metrics_report(
    gold_ideas: &BTreeMap<PaperId, FiveFieldIdea>,
    candidate_ideas: &BTreeMap<PaperId, Vec<FiveFieldIdea>>,
    embeddings: Option<&EmbeddingSet>,
    field_weights: &[f64; 5],
) -> Result<MetricsReport> {
    let mut seeds = Vec::new();
    let mut wtop1_sum = 0.0;
    let mut wtop1_count = 0usize;
    let mut mrouge_sum = 0.0;
    let mut mrouge_count = 0usize;

    let mut seed_ids: Vec<&PaperId> = gold_ideas.keys().collect();
    if let Some(set) = embeddings {
        for seed_id in set.seeds.keys() {
            if !gold_ideas.contains_key(seed_id) {
                seed_ids.push(seed_id);
            }
        }
    }
    seed_ids.sort();
    seed_ids.dedup();

    for seed_id in seed_ids {
        let mut row = SeedMetrics {
            seed_id: seed_id.clone(),
            wtop1: None,
            wtop1_index: None,
            mrouge: None,
            mrouge_index: None,
            bert_f1: OUT_OF_SCOPE.to_string(),
        };
        if let Some(set) = embeddings {
            if let Some(seed_embeddings) = set.seeds.get(seed_id) {
                if !seed_embeddings.candidates.is_empty() {
                    let (index, score) =
                        wtop1(&seed_embeddings.candidates, &seed_embeddings.gold, field_weights)?;
                    row.wtop1 = Some(score);
                    row.wtop1_index = Some(index);
                    wtop1_sum += score;
                    wtop1_count += 1;
                }
            }
        }
        if let (Some(gold), Some(candidates)) = (gold_ideas.get(seed_id), candidate_ideas.get(seed_id)) {
            if !candidates.is_empty() {
                let (index, score) = mrouge(candidates, gold)?;
                row.mrouge = Some(score);
                row.mrouge_index = Some(index);
                mrouge_sum += score;
                mrouge_count += 1;
            }
        }
        seeds.push(row);
    }

    Ok(MetricsReport {
        tokenizer: "lowercase; split on any non-alphanumeric character".to_string(),
        embedding_source_tag: embeddings.map(|s| s.source_tag.clone()),
        field_weights: *field_weights,
        seeds,
        mean_wtop1: (wtop1_count > 0).then(|| wtop1_sum / wtop1_count as f64),
        mean_mrouge: (mrouge_count > 0).then(|| mrouge_sum / mrouge_count as f64),
        bert_f1: OUT_OF_SCOPE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation_and_case() {
        assert_eq!(tokenize("The cat, sat!"), vec!["the", "cat", "sat"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("state-of-the-art"), vec!["state", "of", "the", "art"]);
    }

    #[test]
    fn rouge_worked_example() {
        // LCS("the cat sat", "the cat ran") = 2, P = R = 2/3, F1 = 2/3.
        let value = rouge_l_f1("the cat sat", "the cat ran");
        assert!((value - 2.0 / 3.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn rouge_identical_text_is_one() {
        let value = rouge_l_f1("a b c d", "a b c d");
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_empty_inputs_are_zero() {
        assert_eq!(rouge_l_f1("", "the cat"), 0.0);
        assert_eq!(rouge_l_f1("the cat", ""), 0.0);
        assert_eq!(rouge_l_f1("!!!", "the cat"), 0.0);
        assert_eq!(rouge_l_f1("dog", "cat"), 0.0);
    }

    #[test]
    fn rouge_is_symmetric_in_f1() {
        // F1 symmetrizes precision and recall, so argument order is irrelevant.
        let a = "a b c d e";
        let b = "a c e";
        assert!((rouge_l_f1(a, b) - rouge_l_f1(b, a)).abs() < 1e-15);
    }

    #[test]
    fn cosine_worked_example() {
        let value = cosine(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((value - 8.0 / 9.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn cosine_error_cases_are_typed() {
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let u = [0.3, -1.2, 4.5];
        let scaled: Vec<f64> = u.iter().map(|x| x * 7.5).collect();
        let v = [1.0, 0.5, -2.0];
        let a = cosine(&u, &v).unwrap();
        let b = cosine(&scaled, &v).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    fn idea(tag: &str) -> FiveFieldIdea {
        FiveFieldIdea {
            problem: format!("problem {tag}"),
            existing_methods: format!("existing {tag}"),
            motivation: format!("motivation {tag}"),
            proposed_method: format!("method {tag}"),
            experiment_plan: format!("plan {tag}"),
        }
    }

    #[test]
    fn oracle_top1_breaks_ties_by_lowest_index() {
        let gold = idea("gold");
        let candidates = vec![idea("x"), idea("x")];
        let (index, _) = oracle_top1(&candidates, &gold, |_, _| 0.5).unwrap();
        assert_eq!(index, 0);
    }

    #[test]
    fn mrouge_scores_proposed_method_only() {
        let mut gold = idea("gold");
        gold.proposed_method = "graph neural ranking".into();
        let mut near = idea("a");
        near.proposed_method = "graph neural ranking".into();
        near.problem = "entirely unrelated words".into();
        let far = idea("b");
        let (index, score) = mrouge(&[far, near], &gold).unwrap();
        assert_eq!(index, 1);
        assert!((score - 1.0).abs() < 1e-12);
    }

    fn vectors(values: [[f64; 2]; 5]) -> IdeaVectors {
        let fields = IdeaField::ALL
            .iter()
            .zip(values)
            .map(|(f, v)| (f.slug().to_string(), v.to_vec()))
            .collect();
        IdeaVectors { fields }
    }

    #[test]
    fn wtop1_picks_best_weighted_candidate() {
        let gold = vectors([[1.0, 0.0]; 5]);
        let aligned = vectors([[2.0, 0.0]; 5]);
        let orthogonal = vectors([[0.0, 1.0]; 5]);
        let (index, score) = wtop1(&[orthogonal, aligned], &gold, &[0.2; 5]).unwrap();
        assert_eq!(index, 1);
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wtop1_empty_candidates_error() {
        let gold = vectors([[1.0, 0.0]; 5]);
        assert!(wtop1(&[], &gold, &[0.2; 5]).is_err());
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.jsonl");
        let mut lines = vec![r#"{"dimension": 2, "source_tag": "unit-test"}"#.to_string()];
        for field in IdeaField::ALL {
            lines.push(format!(
                r#"{{"seed_id": "s1", "role": "gold", "field": "{}", "vector": [1.0, 0.0]}}"#,
                field.slug()
            ));
            lines.push(format!(
                r#"{{"seed_id": "s1", "role": "candidate_0", "field": "{}", "vector": [0.5, 0.5]}}"#,
                field.slug()
            ));
        }
        std::fs::write(&path, lines.join("\n")).unwrap();
        let set = load_embeddings(&path).unwrap();
        assert_eq!(set.dimension, 2);
        assert_eq!(set.source_tag, "unit-test");
        let seed = set.seeds.values().next().unwrap();
        assert_eq!(seed.candidates.len(), 1);
    }

    #[test]
    fn embedding_file_rejects_wrong_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.jsonl");
        let text = concat!(
            "{\"dimension\": 3, \"source_tag\": \"t\"}\n",
            "{\"seed_id\": \"s\", \"role\": \"gold\", \"field\": \"problem\", \"vector\": [1.0]}\n",
        );
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_embeddings(&path), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn report_marks_neural_column_out_of_scope() {
        let mut gold = BTreeMap::new();
        gold.insert(PaperId::new("s").unwrap(), idea("gold"));
        let mut candidates = BTreeMap::new();
        candidates.insert(PaperId::new("s").unwrap(), vec![idea("a"), idea("gold")]);
        let report = metrics_report(&gold, &candidates, None, &[0.2; 5]).unwrap();
        assert_eq!(report.bert_f1, OUT_OF_SCOPE);
        assert_eq!(report.seeds.len(), 1);
        assert_eq!(report.seeds[0].mrouge_index, Some(1));
    }
}
