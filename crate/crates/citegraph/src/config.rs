//! Pipeline configuration. Every tunable the pipeline reads lives here with
//! the published constants as defaults, so nothing numeric is hard-coded at
//! call sites. Loadable from TOML and hashable for provenance stamping.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Closed set of canonical section labels, in rendering priority order.
pub const CANONICAL_SECTIONS: [&str; 7] = [
    "introduction",
    "related_work",
    "method",
    "experiments",
    "conclusion",
    "appendix",
    "other",
];

/// First-pass scoring weights over (citation frequency, section, influence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pass1Weights {
    pub cite: f64,
    pub section: f64,
    pub influential: f64,
}

impl Default for Pass1Weights {
    fn default() -> Self {
        Pass1Weights { cite: 0.45, section: 0.40, influential: 0.15 }
    }
}

/// Second-pass weights; the sibling term redistributes mass from pass one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pass2Weights {
    pub cite: f64,
    pub section: f64,
    pub influential: f64,
    pub sibling: f64,
}

impl Default for Pass2Weights {
    fn default() -> Self {
        Pass2Weights { cite: 0.40, section: 0.35, influential: 0.10, sibling: 0.15 }
    }
}

/// Node budget: clamp(ceil(fraction * |refs|), floor, cap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub floor: usize,
    pub cap: usize,
    pub fraction: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { floor: 12, cap: 30, fraction: 0.15 }
    }
}

/// Sampling parameters for candidate idea generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub num_candidates: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { num_candidates: 10, temperature: 0.9, top_p: 0.95 }
    }
}

/// Fuzzy bibliography-to-record matching thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BibMatchConfig {
    /// Minimum normalized Levenshtein similarity for a fuzzy title match.
    pub fuzzy_similarity: f64,
    /// Maximum |entry year - record year| tolerated on a fuzzy match.
    pub year_slack: i32,
}

impl Default for BibMatchConfig {
    fn default() -> Self {
        BibMatchConfig { fuzzy_similarity: 0.90, year_slack: 1 }
    }
}

/// Bootstrap settings for tournament confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    /// Two-sided confidence level, e.g. 0.95.
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: 10_000, seed: 17, confidence: 0.95 }
    }
}

/// All pipeline tunables. `Default` reproduces the published constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub score1_weights: Pass1Weights,
    pub score2_weights: Pass2Weights,
    pub budget: BudgetConfig,
    /// Canonical section label -> weight in [0, 1].
    pub section_weight_table: BTreeMap<String, f64>,
    /// Canonical section label -> lowercase keywords matched against headings.
    pub section_keywords: BTreeMap<String, Vec<String>>,
    pub sampling: SamplingConfig,
    pub bib_match: BibMatchConfig,
    pub judge_dimensions: Vec<String>,
    /// Dimension used to break rank-1 ties before lexicographic method name.
    pub rank1_tie_break_dimension: String,
    pub bootstrap: BootstrapConfig,
    /// Field weights for the weighted top-1 embedding metric, schema order.
    pub wtop1_field_weights: [f64; 5],
    /// Prompts whose token estimate exceeds this trigger an advisory warning.
    pub max_prompt_tokens: usize,
    /// Corpus builds abort when the per-seed failure fraction exceeds this.
    pub max_failure_fraction: f64,
}

fn default_section_weights() -> BTreeMap<String, f64> {
    [
        ("method", 1.0),
        ("experiments", 0.8),
        ("introduction", 0.6),
        ("related_work", 0.4),
        ("conclusion", 0.4),
        ("appendix", 0.2),
        ("other", 0.2),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn default_section_keywords() -> BTreeMap<String, Vec<String>> {
    let mut map = BTreeMap::new();
    let insert = |map: &mut BTreeMap<String, Vec<String>>, label: &str, words: &[&str]| {
        map.insert(label.to_string(), words.iter().map(|w| w.to_string()).collect());
    };
    insert(&mut map, "introduction", &["introduction", "overview"]);
    insert(&mut map, "related_work", &["related work", "prior work", "background"]);
    insert(&mut map, "method", &["method", "approach", "architecture", "model", "framework"]);
    insert(&mut map, "experiments", &["experiment", "evaluation", "results", "ablation", "analysis", "setup"]);
    insert(&mut map, "conclusion", &["conclusion", "discussion", "future work", "limitations"]);
    insert(&mut map, "appendix", &["appendix", "supplementary", "supplemental"]);
    insert(&mut map, "other", &[]);
    map
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            score1_weights: Pass1Weights::default(),
            score2_weights: Pass2Weights::default(),
            budget: BudgetConfig::default(),
            section_weight_table: default_section_weights(),
            section_keywords: default_section_keywords(),
            sampling: SamplingConfig::default(),
            bib_match: BibMatchConfig::default(),
            judge_dimensions: ["novelty", "significance", "feasibility", "clarity", "effectiveness"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rank1_tie_break_dimension: "novelty".to_string(),
            bootstrap: BootstrapConfig::default(),
            wtop1_field_weights: [0.2; 5],
            max_prompt_tokens: 16_384,
            max_failure_fraction: 0.20,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config file. Missing fields fall back to defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Writes the config as TOML.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Checks weight bounds, label closure, and budget sanity.
    pub fn validate(&self) -> Result<()> {
        let p1 = &self.score1_weights;
        let p2 = &self.score2_weights;
        let sums = [
            ("score1_weights", p1.cite + p1.section + p1.influential),
            ("score2_weights", p2.cite + p2.section + p2.influential + p2.sibling),
        ];
        for w in [p1.cite, p1.section, p1.influential, p2.cite, p2.section, p2.influential, p2.sibling] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("score weight {w} outside [0, 1]")));
            }
        }
        for (name, sum) in sums {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{name} sum to {sum}, expected 1")));
            }
        }
        if self.budget.floor > self.budget.cap {
            return Err(Error::Config(format!(
                "budget floor {} exceeds cap {}",
                self.budget.floor, self.budget.cap
            )));
        }
        if !(0.0..=1.0).contains(&self.budget.fraction) {
            return Err(Error::Config(format!("budget fraction {} outside [0, 1]", self.budget.fraction)));
        }
        for (label, weight) in &self.section_weight_table {
            if !CANONICAL_SECTIONS.contains(&label.as_str()) {
                return Err(Error::Config(format!("unknown section label {label} in weight table")));
            }
            if !(0.0..=1.0).contains(weight) {
                return Err(Error::Config(format!("section weight {weight} for {label} outside [0, 1]")));
            }
        }
        for label in CANONICAL_SECTIONS {
            if !self.section_weight_table.contains_key(label) {
                return Err(Error::Config(format!("section weight table missing label {label}")));
            }
        }
        for label in self.section_keywords.keys() {
            if !CANONICAL_SECTIONS.contains(&label.as_str()) {
                return Err(Error::Config(format!("unknown section label {label} in keyword table")));
            }
        }
        if self.sampling.num_candidates == 0 {
            return Err(Error::Config("sampling.num_candidates must be >= 1".into()));
        }
        if !(0.0 < self.sampling.top_p && self.sampling.top_p <= 1.0) {
            return Err(Error::Config(format!("sampling.top_p {} outside (0, 1]", self.sampling.top_p)));
        }
        if self.sampling.temperature < 0.0 {
            return Err(Error::Config("sampling.temperature must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.bib_match.fuzzy_similarity) && self.bib_match.fuzzy_similarity != 1.0 {
            return Err(Error::Config("bib_match.fuzzy_similarity outside [0, 1]".into()));
        }
        if self.judge_dimensions.is_empty() {
            return Err(Error::Config("judge_dimensions must not be empty".into()));
        }
        if !self.judge_dimensions.contains(&self.rank1_tie_break_dimension) {
            return Err(Error::Config(format!(
                "rank1_tie_break_dimension {} not among judge_dimensions",
                self.rank1_tie_break_dimension
            )));
        }
        let wsum: f64 = self.wtop1_field_weights.iter().sum();
        if self.wtop1_field_weights.iter().any(|w| *w < 0.0) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::Config("wtop1_field_weights must be non-negative and sum to 1".into()));
        }
        if self.bootstrap.resamples == 0 {
            return Err(Error::Config("bootstrap.resamples must be >= 1".into()));
        }
        if !(0.0 < self.bootstrap.confidence && self.bootstrap.confidence < 1.0) {
            return Err(Error::Config("bootstrap.confidence outside (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config("max_failure_fraction outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Hex sha256 over the canonical JSON form, stamped into outputs.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&serde_json::to_value(self).expect("config to value"))
            .expect("config to json");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_published_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.score1_weights, Pass1Weights { cite: 0.45, section: 0.40, influential: 0.15 });
        assert_eq!(
            c.score2_weights,
            Pass2Weights { cite: 0.40, section: 0.35, influential: 0.10, sibling: 0.15 }
        );
        assert_eq!(c.budget, BudgetConfig { floor: 12, cap: 30, fraction: 0.15 });
        assert_eq!(c.sampling, SamplingConfig { num_candidates: 10, temperature: 0.9, top_p: 0.95 });
        assert_eq!(c.judge_dimensions.len(), 5);
        c.validate().unwrap();
    }

    #[test]
    fn section_table_covers_all_labels() {
        let c = PipelineConfig::default();
        for label in CANONICAL_SECTIONS {
            assert!(c.section_weight_table.contains_key(label), "{label}");
        }
        assert_eq!(c.section_weight_table["method"], 1.0);
        assert_eq!(c.section_weight_table["experiments"], 0.8);
    }

    #[test]
    fn toml_round_trip_preserves_hash() {
        let c = PipelineConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        c.save(&path).unwrap();
        let loaded = PipelineConfig::load(&path).unwrap();
        assert_eq!(c, loaded);
        assert_eq!(c.config_hash(), loaded.config_hash());
    }

    #[test]
    fn bad_weight_sum_rejected() {
        let mut c = PipelineConfig::default();
        c.score1_weights.cite = 0.9;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_section_label_rejected() {
        let mut c = PipelineConfig::default();
        c.section_weight_table.insert("acknowledgements".into(), 0.1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { max_prompt_tokens: 8192, ..PipelineConfig::default() };
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
