//! Core domain types: paper identifiers, metadata records, the five-field
//! idea schema, edge features, and the annotated subgraph with its
//! structural validator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Identifiers

/// Opaque, totally ordered paper identifier. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(String);

impl PaperId {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err(Error::InvalidId("empty identifier".into()));
        }
        Ok(PaperId(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// ---------------------------------------------------------------------------
// Section labels

/// Canonical section labels, ordered by rendering priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionLabel {
    Introduction,
    RelatedWork,
    Method,
    Experiments,
    Conclusion,
    Appendix,
    Other,
}

impl SectionLabel {
    pub const ALL: [SectionLabel; 7] = [
        SectionLabel::Introduction,
        SectionLabel::RelatedWork,
        SectionLabel::Method,
        SectionLabel::Experiments,
        SectionLabel::Conclusion,
        SectionLabel::Appendix,
        SectionLabel::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SectionLabel::Introduction => "introduction",
            SectionLabel::RelatedWork => "related_work",
            SectionLabel::Method => "method",
            SectionLabel::Experiments => "experiments",
            SectionLabel::Conclusion => "conclusion",
            SectionLabel::Appendix => "appendix",
            SectionLabel::Other => "other",
        }
    }

    pub fn parse(label: &str) -> Option<SectionLabel> {
        SectionLabel::ALL.into_iter().find(|s| s.as_str() == label)
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Five-field idea

/// Names of the five idea fields, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IdeaField {
    Problem,
    ExistingMethods,
    Motivation,
    ProposedMethod,
    ExperimentPlan,
}

impl IdeaField {
    pub const ALL: [IdeaField; 5] = [
        IdeaField::Problem,
        IdeaField::ExistingMethods,
        IdeaField::Motivation,
        IdeaField::ProposedMethod,
        IdeaField::ExperimentPlan,
    ];

    /// Human-facing key used in JSON and rendered prompts.
    pub fn key(&self) -> &'static str {
        match self {
            IdeaField::Problem => "Problem",
            IdeaField::ExistingMethods => "Existing Methods",
            IdeaField::Motivation => "Motivation",
            IdeaField::ProposedMethod => "Proposed Method",
            IdeaField::ExperimentPlan => "Experiment Plan",
        }
    }

    /// Lowercase identifier used in embedding files and reports.
    pub fn slug(&self) -> &'static str {
        match self {
            IdeaField::Problem => "problem",
            IdeaField::ExistingMethods => "existing_methods",
            IdeaField::Motivation => "motivation",
            IdeaField::ProposedMethod => "proposed_method",
            IdeaField::ExperimentPlan => "experiment_plan",
        }
    }

    pub fn parse_slug(slug: &str) -> Option<IdeaField> {
        IdeaField::ALL.into_iter().find(|f| f.slug() == slug)
    }
}

/// Structured research idea: five non-empty free-text fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiveFieldIdea {
    #[serde(rename = "Problem")]
    pub problem: String,
    #[serde(rename = "Existing Methods")]
    pub existing_methods: String,
    #[serde(rename = "Motivation")]
    pub motivation: String,
    #[serde(rename = "Proposed Method")]
    pub proposed_method: String,
    #[serde(rename = "Experiment Plan")]
    pub experiment_plan: String,
}

impl FiveFieldIdea {
    pub fn field(&self, field: IdeaField) -> &str {
        match field {
            IdeaField::Problem => &self.problem,
            IdeaField::ExistingMethods => &self.existing_methods,
            IdeaField::Motivation => &self.motivation,
            IdeaField::ProposedMethod => &self.proposed_method,
            IdeaField::ExperimentPlan => &self.experiment_plan,
        }
    }

    /// All five fields must be non-empty after trimming.
    pub fn validate(&self) -> Result<()> {
        for field in IdeaField::ALL {
            if self.field(field).trim().is_empty() {
                return Err(Error::InvalidIdea(format!("field {} is empty", field.key())));
            }
        }
        Ok(())
    }

    /// Parses a strict JSON object with exactly the five schema keys.
    pub fn parse_json(text: &str) -> Result<Self> {
        let idea: FiveFieldIdea = serde_json::from_str(text)
            .map_err(|e| Error::InvalidIdea(format!("not a five-field object: {e}")))?;
        idea.validate()?;
        Ok(idea)
    }
}

// ---------------------------------------------------------------------------
// Paper metadata

/// Paper metadata as stored in the local cache and consumed by the pipeline.
///
/// `is_influential` and `contexts` are citation-pair properties: they
/// describe this record's relationship to the seed that requested it, so the
/// same paper cached under two seeds may carry different values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperRecord {
    pub id: PaperId,
    pub title: String,
    /// Calendar year; `None` when the upstream source has no year.
    pub year: Option<i32>,
    #[serde(default)]
    pub venue: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub authors: Vec<String>,
    /// Global citation count reported by the metadata source.
    #[serde(default)]
    pub global_cite_count: u64,
    #[serde(default)]
    pub is_influential: bool,
    #[serde(default)]
    pub contexts: Vec<String>,
    #[serde(default)]
    pub reference_ids: Vec<PaperId>,
    /// Extracted idea, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idea: Option<FiveFieldIdea>,
}

impl PaperRecord {
    /// Minimal record with the given id, title, and year.
    pub fn new(id: PaperId, title: impl Into<String>, year: Option<i32>) -> Self {
        PaperRecord {
            id,
            title: title.into(),
            year,
            venue: String::new(),
            abstract_text: String::new(),
            authors: Vec::new(),
            global_cite_count: 0,
            is_influential: false,
            contexts: Vec::new(),
            reference_ids: Vec::new(),
            idea: None,
        }
    }

    /// Rejects self-citation, duplicate references, and implausible years.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidRecord { id: self.id.to_string(), reason };
        if self.title.trim().is_empty() {
            return Err(fail("empty title".into()));
        }
        if let Some(year) = self.year {
            if !(1900..=2100).contains(&year) {
                return Err(fail(format!("implausible year {year}")));
            }
        }
        let mut seen = BTreeSet::new();
        for reference in &self.reference_ids {
            if reference == &self.id {
                return Err(fail("reference list contains the record itself".into()));
            }
            if !seen.insert(reference) {
                return Err(fail(format!("duplicate reference {reference}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Edges and subgraph

/// How a retained node relates to the works it builds on, or to the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    /// Cites a strictly earlier retained node.
    ExplicitPred,
    /// Cites a retained node from the same year.
    ParallelPred,
    /// No retained predecessors; the node feeds the seed directly.
    DirectToSeed,
}

impl EdgeType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeType::ExplicitPred => "explicit_pred",
            EdgeType::ParallelPred => "parallel_pred",
            EdgeType::DirectToSeed => "direct_to_seed",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One predecessor link from a retained node to another retained node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredecessorEdge {
    pub id: PaperId,
    pub edge_type: EdgeType,
    /// Year of the citing node minus year of the cited node; >= 0.
    pub delta_yr: i32,
}

/// Features describing a retained node's relationship to the seed paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFeatures {
    /// 1 for direct references of the seed, 2 for two-hop discoveries.
    pub layer_depth: u8,
    /// Canonical sections of the seed full text citing this node.
    pub cited_in_sections: BTreeSet<SectionLabel>,
    /// How many times the seed full text cites this node.
    pub cite_count: u32,
    /// Weight of the most salient citing section.
    pub section_weight: f64,
    /// Seed year minus node year; strictly positive after temporal filtering.
    pub delta_year: i32,
    /// Influence flag reported by the metadata source for the seed pair.
    pub is_influential_raw: bool,
    /// Set when section attribution or identity matching was uncertain.
    pub low_confidence: bool,
    /// How many other retained nodes list this node as a predecessor.
    pub cited_by_subgraph: u32,
}

impl EdgeFeatures {
    /// Placeholder features before annotation fills the real values.
    pub fn unannotated(layer_depth: u8) -> Self {
        EdgeFeatures {
            layer_depth,
            cited_in_sections: BTreeSet::new(),
            cite_count: 0,
            section_weight: 0.0,
            delta_year: 0,
            is_influential_raw: false,
            low_confidence: false,
            cited_by_subgraph: 0,
        }
    }
}

/// A retained node: metadata, seed-relative features, and predecessor links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgraphNode {
    pub record: PaperRecord,
    pub seed_features: EdgeFeatures,
    pub predecessors: Vec<PredecessorEdge>,
    pub pass1_score: f64,
    pub pass2_score: f64,
}

/// Per-class edge tallies for an annotated subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeClassCounts {
    pub explicit_pred: usize,
    pub parallel_pred: usize,
    pub direct_to_seed: usize,
}

impl EdgeClassCounts {
    pub fn total(&self) -> usize {
        self.explicit_pred + self.parallel_pred + self.direct_to_seed
    }
}

/// The final product of graph construction: a budgeted, temporally
/// consistent DAG of predecessor works around a seed paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSubgraph {
    pub seed: PaperRecord,
    /// Retained nodes ordered by (year ascending, id ascending).
    pub nodes: Vec<SubgraphNode>,
    /// Node budget that selection enforced.
    pub k_budget: usize,
}

impl AnnotatedSubgraph {
    /// Tallies explicit and parallel predecessor links plus direct-to-seed
    /// markers (one per node with an empty predecessor list).
    pub fn edge_class_counts(&self) -> EdgeClassCounts {
        let mut counts = EdgeClassCounts { explicit_pred: 0, parallel_pred: 0, direct_to_seed: 0 };
        for node in &self.nodes {
            if node.predecessors.is_empty() {
                counts.direct_to_seed += 1;
            }
            for edge in &node.predecessors {
                match edge.edge_type {
                    EdgeType::ExplicitPred => counts.explicit_pred += 1,
                    EdgeType::ParallelPred => counts.parallel_pred += 1,
                    EdgeType::DirectToSeed => {}
                }
            }
        }
        counts
    }

    pub fn node_ids(&self) -> BTreeSet<PaperId> {
        self.nodes.iter().map(|n| n.record.id.clone()).collect()
    }

    /// Canonical JSON: sorted keys, two-space indentation, trailing newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let graph: AnnotatedSubgraph = serde_json::from_str(text)?;
        Ok(graph)
    }
}

/// Serializes any value as canonical JSON (sorted keys, two-space indent).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value maps are BTreeMaps, so converting first sorts keys.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

// ---------------------------------------------------------------------------
// SFT packaging

/// Which prompt rendering a training example uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Graph,
    Plain,
}

impl PromptVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptVariant::Graph => "graph",
            PromptVariant::Plain => "plain",
        }
    }
}

/// One masked SFT example. The loss mask covers `full_text[..mask_boundary]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftExample {
    pub seed_id: PaperId,
    pub variant: PromptVariant,
    pub prompt: String,
    pub target: String,
    /// Byte length of the prompt within `full_text()`.
    pub mask_boundary: usize,
}

impl SftExample {
    pub fn full_text(&self) -> String {
        let mut text = String::with_capacity(self.prompt.len() + self.target.len());
        text.push_str(&self.prompt);
        text.push_str(&self.target);
        text
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask_boundary != self.prompt.len() {
            return Err(Error::Serialize(format!(
                "mask boundary {} does not equal prompt length {}",
                self.mask_boundary,
                self.prompt.len()
            )));
        }
        if self.target.trim().is_empty() {
            return Err(Error::Serialize("empty target".into()));
        }
        if self.prompt.contains(&self.target) {
            return Err(Error::Serialize("prompt leaks the target text".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Structural validation

/// Checks every structural invariant of an annotated subgraph and returns
/// human-readable violations; an empty list means the graph is sound.
pub fn validate_subgraph(graph: &AnnotatedSubgraph) -> Vec<String> {
    let mut violations = Vec::new();
    let mut push = |message: String| violations.push(message);

    let seed_year = match graph.seed.year {
        Some(year) => year,
        None => {
            push("seed year is unknown".into());
            return violations;
        }
    };

    if graph.nodes.len() > graph.k_budget {
        push(format!("{} nodes exceed budget {}", graph.nodes.len(), graph.k_budget));
    }

    let mut ids = BTreeSet::new();
    for node in &graph.nodes {
        if !ids.insert(node.record.id.clone()) {
            push(format!("duplicate node {}", node.record.id));
        }
    }
    if ids.contains(&graph.seed.id) {
        push("seed appears among the nodes".into());
    }

    let year_of: BTreeMap<PaperId, i32> = graph
        .nodes
        .iter()
        .filter_map(|n| n.record.year.map(|y| (n.record.id.clone(), y)))
        .collect();

    let mut previous: Option<(i32, PaperId)> = None;
    for node in &graph.nodes {
        let id = &node.record.id;
        let year = match node.record.year {
            Some(year) => year,
            None => {
                push(format!("node {id} has unknown year"));
                continue;
            }
        };
        if year >= seed_year {
            push(format!("node {id} year {year} not before seed year {seed_year}"));
        }
        if let Some((prev_year, prev_id)) = &previous {
            if (year, id) < (*prev_year, prev_id) {
                push(format!("node order violated at {id}: expected (year, id) ascending"));
            }
        }
        previous = Some((year, id.clone()));

        let features = &node.seed_features;
        if !(features.layer_depth == 1 || features.layer_depth == 2) {
            push(format!("node {id} layer_depth {} outside {{1, 2}}", features.layer_depth));
        }
        if features.delta_year != seed_year - year || features.delta_year <= 0 {
            push(format!(
                "node {id} delta_year {} inconsistent with seed {seed_year} and node {year}",
                features.delta_year
            ));
        }
        if !graph.nodes.is_empty() && features.cited_by_subgraph as usize > graph.nodes.len() - 1 {
            push(format!(
                "node {id} cited_by_subgraph {} exceeds {} other nodes",
                features.cited_by_subgraph,
                graph.nodes.len() - 1
            ));
        }

        let mut seen_targets = BTreeSet::new();
        for edge in &node.predecessors {
            if edge.id == *id {
                push(format!("node {id} lists itself as predecessor"));
                continue;
            }
            if !seen_targets.insert(edge.id.clone()) {
                push(format!("node {id} lists predecessor {} twice", edge.id));
            }
            let Some(target_year) = year_of.get(&edge.id) else {
                push(format!("node {id} lists non-retained predecessor {}", edge.id));
                continue;
            };
            let delta = year - target_year;
            match edge.edge_type {
                EdgeType::ExplicitPred => {
                    if delta <= 0 {
                        push(format!(
                            "explicit edge {id} -> {} has non-positive year delta {delta}",
                            edge.id
                        ));
                    }
                }
                EdgeType::ParallelPred => {
                    if delta != 0 {
                        push(format!(
                            "parallel edge {id} -> {} joins different years (delta {delta})",
                            edge.id
                        ));
                    }
                }
                EdgeType::DirectToSeed => {
                    push(format!(
                        "node {id} carries direct_to_seed as a predecessor entry (seed relation only)"
                    ));
                }
            }
            if edge.delta_yr != delta {
                push(format!(
                    "edge {id} -> {} stores delta_yr {} but years differ by {delta}",
                    edge.id, edge.delta_yr
                ));
            }
        }
    }

    if let Some(cycle) = find_cycle(graph) {
        let path: Vec<String> = cycle.iter().map(|id| id.to_string()).collect();
        push(format!("predecessor cycle: {}", path.join(" -> ")));
    }

    violations
}

/// Depth-first cycle search over predecessor links; returns one cycle if any.
fn find_cycle(graph: &AnnotatedSubgraph) -> Option<Vec<PaperId>> {
    let adjacency: BTreeMap<&PaperId, Vec<&PaperId>> = graph
        .nodes
        .iter()
        .map(|n| (&n.record.id, n.predecessors.iter().map(|e| &e.id).collect()))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Visiting,
        Done,
    }
    let mut marks: BTreeMap<&PaperId, Mark> = BTreeMap::new();

    fn visit<'a>(
        node: &'a PaperId,
        adjacency: &BTreeMap<&'a PaperId, Vec<&'a PaperId>>,
        marks: &mut BTreeMap<&'a PaperId, Mark>,
        stack: &mut Vec<&'a PaperId>,
    ) -> Option<Vec<PaperId>> {
        match marks.get(node) {
            Some(Mark::Done) => return None,
            Some(Mark::Visiting) => {
                let start = stack.iter().position(|n| *n == node).unwrap_or(0);
                let mut cycle: Vec<PaperId> = stack[start..].iter().map(|n| (*n).clone()).collect();
                cycle.push(node.clone());
                return Some(cycle);
            }
            None => {}
        }
        marks.insert(node, Mark::Visiting);
        stack.push(node);
        if let Some(targets) = adjacency.get(node) {
            for target in targets {
                if adjacency.contains_key(target) {
                    if let Some(cycle) = visit(target, adjacency, marks, stack) {
                        return Some(cycle);
                    }
                }
            }
        }
        stack.pop();
        marks.insert(node, Mark::Done);
        None
    }

    let roots: Vec<&PaperId> = adjacency.keys().copied().collect();
    for root in roots {
        let mut stack = Vec::new();
        if let Some(cycle) = visit(root, &adjacency, &mut marks, &mut stack) {
            return Some(cycle);
        }
    }
    None
}
