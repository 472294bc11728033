//! Prompt serialization: renders an annotated subgraph into structured text.
//!
//! Two variants share one rendering pass. The graph variant carries [EDGE]
//! and [PREDECESSORS] blocks per node; the plain variant omits them and
//! renames the section header, leaving every other byte identical. That
//! invariant is load-bearing for ablation comparisons, so a verifier that
//! checks it line by line lives here next to the renderer.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::model::{
    AnnotatedSubgraph, FiveFieldIdea, IdeaField, PaperId, PromptVariant, SftExample, SubgraphNode,
};
use crate::{Error, Result};

const GRAPH_HEADER: &str = "# CITATION SUBGRAPH (";
const PLAIN_HEADER: &str = "# REFERENCES (";
const EDGE_LABEL: &str = "   [EDGE]";
const PREDECESSORS_LABEL: &str = "   [PREDECESSORS]";
const CONTENT_INDENT: &str = "     ";

const TASK_TAIL: &str = "# TASK
Given the SEED META and CITATION SUBGRAPH above, predict the SEED paper's
five-field idea.

# OUTPUT FORMAT (strict)
{
  \"Problem\": \"...\",
  \"Existing Methods\": \"...\",
  \"Motivation\": \"...\",
  \"Proposed Method\": \"...\",
  \"Experiment Plan\": \"...\"
}
";

/// Collapses arbitrary text onto one line: newlines and runs of whitespace
/// become single spaces, leading and trailing whitespace drops.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn venue_or_unknown(venue: &str) -> String {
    let cleaned = one_line(venue);
    if cleaned.is_empty() {
        "unknown".to_string()
    } else {
        cleaned
    }
}

/// Comma-joined author list, truncated to six names plus "et al.".
fn format_authors(authors: &[String]) -> String {
    let cleaned: Vec<String> = authors
        .iter()
        .map(|a| one_line(a))
        .filter(|a| !a.is_empty())
        .collect();
    if cleaned.is_empty() {
        return "unknown".to_string();
    }
    if cleaned.len() <= 6 {
        cleaned.join(", ")
    } else {
        format!("{}, et al.", cleaned[..6].join(", "))
    }
}

fn node_year(node: &SubgraphNode) -> Result<i32> {
    node.record
        .year
        .ok_or_else(|| Error::Serialize(format!("node {} has no year", node.record.id)))
}

fn push_edge_block(out: &mut String, node: &SubgraphNode) {
    let features = &node.seed_features;
    let sections = if features.cited_in_sections.is_empty() {
        "none".to_string()
    } else {
        features
            .cited_in_sections
            .iter()
            .map(|label| label.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    out.push_str(EDGE_LABEL);
    out.push('\n');
    let _ = writeln!(out, "{CONTENT_INDENT}layer_depth = {}", features.layer_depth);
    let _ = writeln!(out, "{CONTENT_INDENT}cited_in_sections = {sections}");
    let _ = writeln!(out, "{CONTENT_INDENT}cite_count = {}", features.cite_count);
    let _ = writeln!(out, "{CONTENT_INDENT}section_weight = {:.2}", features.section_weight);
    let _ = writeln!(out, "{CONTENT_INDENT}delta_year = {}", features.delta_year);
    let _ = writeln!(out, "{CONTENT_INDENT}is_influential_raw = {}", features.is_influential_raw);
    let _ = writeln!(out, "{CONTENT_INDENT}low_confidence = {}", features.low_confidence);
    let _ = writeln!(out, "{CONTENT_INDENT}cited_by_subgraph = {}", features.cited_by_subgraph);
}

fn push_predecessor_block(
    out: &mut String,
    node: &SubgraphNode,
    index_of: &BTreeMap<&PaperId, usize>,
) -> Result<()> {
    out.push_str(PREDECESSORS_LABEL);
    out.push('\n');
    if node.predecessors.is_empty() {
        let _ = writeln!(
            out,
            "{CONTENT_INDENT}- ref_idx=[]  delta_yr={}  edge_type=direct_to_seed",
            node.seed_features.delta_year
        );
        return Ok(());
    }
    // One line per (delta, edge type) group, nearest predecessors first.
    let mut groups: BTreeMap<(i32, &str), Vec<usize>> = BTreeMap::new();
    for edge in &node.predecessors {
        let index = *index_of.get(&edge.id).ok_or_else(|| {
            Error::Serialize(format!(
                "node {} lists predecessor {} that is not in the subgraph",
                node.record.id, edge.id
            ))
        })?;
        groups
            .entry((edge.delta_yr, edge.edge_type.as_str()))
            .or_default()
            .push(index);
    }
    for ((delta, edge_type), mut indices) in groups {
        indices.sort_unstable();
        let rendered = indices
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            out,
            "{CONTENT_INDENT}- ref_idx=[{rendered}]  delta_yr={delta}  edge_type={edge_type}"
        );
    }
    Ok(())
}

fn push_idea_block(out: &mut String, idea: Option<&FiveFieldIdea>) {
    out.push_str("   [IDEA -- 5 fields]\n");
    match idea {
        Some(idea) => {
            for field in IdeaField::ALL {
                let _ = writeln!(out, "{CONTENT_INDENT}{}: {}", field.key(), one_line(idea.field(field)));
            }
        }
        None => {
            out.push_str(CONTENT_INDENT);
            out.push_str("unavailable\n");
        }
    }
}

fn push_abstract_block(out: &mut String, abstract_text: &str) {
    out.push_str("   [ABSTRACT]\n");
    let cleaned = one_line(abstract_text);
    if cleaned.is_empty() {
        out.push('\n');
    } else {
        let _ = writeln!(out, "{CONTENT_INDENT}{cleaned}");
    }
}

fn render(graph: &AnnotatedSubgraph, include_structure: bool) -> Result<String> {
    let seed_year = graph
        .seed
        .year
        .ok_or_else(|| Error::Serialize(format!("seed {} has no year", graph.seed.id)))?;
    let index_of: BTreeMap<&PaperId, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(position, node)| (&node.record.id, position + 1))
        .collect();

    let mut out = String::with_capacity(4096 * graph.nodes.len().max(1));
    out.push_str("# SEED META\n");
    let _ = writeln!(out, "venue: {}    year: {}", venue_or_unknown(&graph.seed.venue), seed_year);
    out.push('\n');
    let header = if include_structure { GRAPH_HEADER } else { PLAIN_HEADER };
    let _ = writeln!(out, "{header}{} refs, temporally ordered by year)", graph.nodes.len());

    for (position, node) in graph.nodes.iter().enumerate() {
        out.push('\n');
        let _ = writeln!(
            out,
            "## [{}] {} ({}, {}) authors: {}",
            position + 1,
            one_line(&node.record.title),
            node_year(node)?,
            venue_or_unknown(&node.record.venue),
            format_authors(&node.record.authors)
        );
        if include_structure {
            push_edge_block(&mut out, node);
            push_predecessor_block(&mut out, node, &index_of)?;
        }
        push_idea_block(&mut out, node.record.idea.as_ref());
        push_abstract_block(&mut out, &node.record.abstract_text);
    }

    out.push('\n');
    out.push_str(TASK_TAIL);
    Ok(out)
}

/// Renders the full structured prompt with per-node edge features and
/// predecessor lists.
pub fn serialize_graph(graph: &AnnotatedSubgraph) -> Result<String> {
    render(graph, true)
}

/// Renders the ablation prompt: same bytes as the graph variant minus the
/// [EDGE] and [PREDECESSORS] blocks, with the section header renamed.
pub fn serialize_plain(graph: &AnnotatedSubgraph) -> Result<String> {
    render(graph, false)
}

/// Renders the training target: the seed idea as pretty JSON in schema key
/// order.
pub fn render_target(idea: &FiveFieldIdea) -> String {
    serde_json::to_string_pretty(idea).expect("five-field idea serializes")
}

/// Builds one masked SFT example for the given variant. The mask boundary is
/// the prompt's byte length inside `full_text()`.
pub fn make_sft_example(
    graph: &AnnotatedSubgraph,
    variant: PromptVariant,
    idea: &FiveFieldIdea,
) -> Result<SftExample> {
    let prompt = match variant {
        PromptVariant::Graph => serialize_graph(graph)?,
        PromptVariant::Plain => serialize_plain(graph)?,
    };
    let mask_boundary = prompt.len();
    let example = SftExample {
        seed_id: graph.seed.id.clone(),
        variant,
        prompt,
        target: render_target(idea),
        mask_boundary,
    };
    example.validate()?;
    Ok(example)
}

/// Whitespace-and-punctuation token estimate: each alphanumeric run counts
/// ceil(len / 8) tokens and each non-whitespace symbol counts one.
pub fn estimate_tokens(text: &str) -> usize {
    let mut total = 0usize;
    let mut run = 0usize;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            run += 1;
        } else {
            if run > 0 {
                total += run.div_ceil(8);
                run = 0;
            }
            if !ch.is_whitespace() {
                total += 1;
            }
        }
    }
    if run > 0 {
        total += run.div_ceil(8);
    }
    total
}

// ---------------------------------------------------------------------------
// Structural delta verification

/// What separates a graph prompt from its plain counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralDelta {
    pub edge_blocks_removed: usize,
    pub predecessor_blocks_removed: usize,
    /// Total lines the removed blocks spanned, labels included.
    pub structural_lines_removed: usize,
    pub header_renamed: bool,
}

/// Verifies that the plain text equals the graph text minus [EDGE] and
/// [PREDECESSORS] blocks and modulo the one header rename. Any other
/// difference, even one byte, is an error naming the first divergent line.
pub fn verify_structural_delta(graph_text: &str, plain_text: &str) -> Result<StructuralDelta> {
    let mut delta = StructuralDelta {
        edge_blocks_removed: 0,
        predecessor_blocks_removed: 0,
        structural_lines_removed: 0,
        header_renamed: false,
    };

    let graph_lines: Vec<&str> = graph_text.lines().collect();
    let mut reduced: Vec<String> = Vec::with_capacity(graph_lines.len());
    let mut cursor = 0usize;
    while cursor < graph_lines.len() {
        let line = graph_lines[cursor];
        if line == EDGE_LABEL || line == PREDECESSORS_LABEL {
            if line == EDGE_LABEL {
                delta.edge_blocks_removed += 1;
            } else {
                delta.predecessor_blocks_removed += 1;
            }
            delta.structural_lines_removed += 1;
            cursor += 1;
            while cursor < graph_lines.len() && graph_lines[cursor].starts_with(CONTENT_INDENT) {
                delta.structural_lines_removed += 1;
                cursor += 1;
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix(GRAPH_HEADER) {
            if delta.header_renamed {
                return Err(Error::Serialize("second subgraph header in graph text".into()));
            }
            delta.header_renamed = true;
            reduced.push(format!("{PLAIN_HEADER}{rest}"));
        } else {
            reduced.push(line.to_string());
        }
        cursor += 1;
    }

    if !delta.header_renamed {
        return Err(Error::Serialize("graph text has no subgraph header".into()));
    }

    let plain_lines: Vec<&str> = plain_text.lines().collect();
    for (index, (expected, actual)) in reduced.iter().zip(plain_lines.iter()).enumerate() {
        if expected != actual {
            return Err(Error::Serialize(format!(
                "texts diverge outside structural blocks at plain line {}: {:?} vs {:?}",
                index + 1,
                expected,
                actual
            )));
        }
    }
    if reduced.len() != plain_lines.len() {
        return Err(Error::Serialize(format!(
            "line count mismatch after reduction: {} vs {}",
            reduced.len(),
            plain_lines.len()
        )));
    }
    if graph_text.ends_with('\n') != plain_text.ends_with('\n') {
        return Err(Error::Serialize("trailing newline mismatch".into()));
    }
    Ok(delta)
}
