//! Subgraph construction: two-hop expansion around a seed paper, temporal
//! filtering, two-pass scoring with a sibling boost, budgeted selection,
//! edge classification, cycle breaking, and feature annotation.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::{BudgetConfig, Pass1Weights, Pass2Weights, PipelineConfig};
use crate::model::{
    validate_subgraph, AnnotatedSubgraph, EdgeFeatures, EdgeType, PaperId, PaperRecord,
    PredecessorEdge, SectionLabel, SubgraphNode,
};
use crate::s2::mine_predecessors;
use crate::tei::ProfileEntry;
use crate::{Error, Result};

/// Resolves paper ids to records during expansion. Returning `None` marks
/// the id unfetchable; expansion skips it and reports it to the caller.
pub trait RecordLookup {
    fn lookup(&self, id: &PaperId) -> Option<PaperRecord>;
}

impl RecordLookup for BTreeMap<PaperId, PaperRecord> {
    fn lookup(&self, id: &PaperId) -> Option<PaperRecord> {
        self.get(id).cloned()
    }
}

/// Candidate pool entry: a record plus its discovery depth.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub record: PaperRecord,
    /// 1 for direct seed references, 2 for references of references.
    pub layer_depth: u8,
}

/// Expansion result: deduplicated pool keyed by id, plus unfetchable ids.
#[derive(Debug, Clone, Default)]
pub struct ExpandedPool {
    pub entries: BTreeMap<PaperId, PoolEntry>,
    pub skipped: BTreeSet<PaperId>,
}

/// Collects the seed's references and their references into one pool. The
/// seed itself is excluded, duplicates keep their shallowest layer, and ids
/// the lookup cannot resolve are recorded in `skipped`.
pub fn expand_two_hop(seed: &PaperRecord, lookup: &dyn RecordLookup) -> Result<ExpandedPool> {
    seed.validate()?;
    let mut pool = ExpandedPool::default();

    let mut layer1 = Vec::new();
    for id in &seed.reference_ids {
        if *id == seed.id {
            continue;
        }
        match lookup.lookup(id) {
            Some(record) => {
                layer1.push(record.clone());
                pool.entries.insert(id.clone(), PoolEntry { record, layer_depth: 1 });
            }
            None => {
                pool.skipped.insert(id.clone());
            }
        }
    }

    for parent in &layer1 {
        for id in &parent.reference_ids {
            if *id == seed.id || pool.entries.contains_key(id) || pool.skipped.contains(id) {
                continue;
            }
            match lookup.lookup(id) {
                Some(record) => {
                    pool.entries.insert(id.clone(), PoolEntry { record, layer_depth: 2 });
                }
                None => {
                    pool.skipped.insert(id.clone());
                }
            }
        }
    }

    Ok(pool)
}

/// Keeps only pool entries with a known year strictly before the seed year.
pub fn apply_temporal_cone(pool: ExpandedPool, seed_year: i32) -> ExpandedPool {
    let entries = pool
        .entries
        .into_iter()
        .filter(|(_, entry)| matches!(entry.record.year, Some(year) if year < seed_year))
        .collect();
    ExpandedPool { entries, skipped: pool.skipped }
}

/// Node budget for a seed with `num_refs` direct references:
/// clamp(ceil(fraction * num_refs), floor, cap).
pub fn compute_budget(num_refs: usize, config: &BudgetConfig) -> usize {
    let scaled = config.fraction * num_refs as f64;
    // The epsilon keeps ceil from drifting up when fraction * num_refs is an
    // exact integer in real arithmetic but lands just above it in floats.
    let ceiled = (scaled - 1e-9).ceil().max(0.0) as usize;
    config.cap.min(config.floor.max(ceiled))
}

/// A pool entry with its normalized scoring components.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub record: PaperRecord,
    pub layer_depth: u8,
    /// Seed full-text citation frequency, normalized by the pool maximum.
    pub s_cite: f64,
    /// Weight of the most salient section citing this candidate.
    pub s_sec: f64,
    /// 1.0 when the metadata source marks the seed citation influential.
    pub s_infl: f64,
    /// Fraction of first-pass top-k members listing this candidate.
    pub s_sib: f64,
    pub pass1: f64,
    pub pass2: f64,
    /// Raw seed full-text citation count.
    pub cite_count: u32,
    pub sections: BTreeSet<SectionLabel>,
    pub low_confidence: bool,
    /// Pool members this candidate cites, mined against the seed references.
    pub predecessors_in_pool: BTreeSet<PaperId>,
}

/// Joins pool entries with citation profiles and normalizes score inputs.
/// Entries without a profile (layer-2 discoveries, unanchored references)
/// get zero citation and section components and a low-confidence flag.
pub fn candidate_pool(
    pool: &ExpandedPool,
    seed: &PaperRecord,
    profiles: &BTreeMap<PaperId, ProfileEntry>,
    config: &PipelineConfig,
) -> Vec<Candidate> {
    let seed_refs: BTreeSet<PaperId> = seed.reference_ids.iter().cloned().collect();
    let max_cite = pool
        .entries
        .keys()
        .filter_map(|id| profiles.get(id).map(|p| p.cite_count))
        .max()
        .unwrap_or(0);

    pool.entries
        .values()
        .map(|entry| {
            let record = &entry.record;
            let profile = profiles.get(&record.id);
            let cite_count = profile.map(|p| p.cite_count).unwrap_or(0);
            let sections = profile.map(|p| p.sections.clone()).unwrap_or_default();
            let low_confidence = profile.map(|p| p.low_confidence).unwrap_or(true);
            let s_cite = if max_cite > 0 { cite_count as f64 / max_cite as f64 } else { 0.0 };
            let s_sec = sections
                .iter()
                .filter_map(|label| config.section_weight_table.get(label.as_str()))
                .fold(0.0_f64, |best, w| best.max(*w));
            Candidate {
                layer_depth: entry.layer_depth,
                s_cite,
                s_sec,
                s_infl: if record.is_influential { 1.0 } else { 0.0 },
                s_sib: 0.0,
                pass1: 0.0,
                pass2: 0.0,
                cite_count,
                sections,
                low_confidence,
                predecessors_in_pool: mine_predecessors(record, &seed_refs),
                record: record.clone(),
            }
        })
        .collect()
}

/// First-pass score: weighted sum of citation, section, and influence terms.
pub fn score_pass1(candidate: &Candidate, weights: &Pass1Weights) -> f64 {
    weights.cite * candidate.s_cite
        + weights.section * candidate.s_sec
        + weights.influential * candidate.s_infl
}

/// Second-pass score: pass-one terms reweighted plus the sibling boost.
pub fn score_pass2(candidate: &Candidate, weights: &Pass2Weights) -> f64 {
    weights.cite * candidate.s_cite
        + weights.section * candidate.s_sec
        + weights.influential * candidate.s_infl
        + weights.sibling * candidate.s_sib
}

/// Fraction of the first-pass top-k whose mined predecessors include this
/// candidate. The denominator is the budget `k`, not the top list length.
pub fn sibling_boost(candidate: &Candidate, top_pass1: &[Candidate], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let listers = top_pass1
        .iter()
        .filter(|s| s.predecessors_in_pool.contains(&candidate.record.id))
        .count();
    listers as f64 / k as f64
}

/// Sorts by the given score descending, breaking ties by raw citation
/// strength descending then id ascending, and keeps the first `k`.
fn rank_and_truncate<S>(mut candidates: Vec<Candidate>, k: usize, score: S) -> Vec<Candidate>
where
    S: Fn(&Candidate) -> f64,
{
    candidates.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| b.s_cite.total_cmp(&a.s_cite))
            .then_with(|| a.record.id.cmp(&b.record.id))
    });
    candidates.truncate(k);
    candidates
}

/// Budgeted selection on second-pass scores.
pub fn select_top_k(candidates: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    rank_and_truncate(candidates, k, |c| c.pass2)
}

/// Classification output: typed nodes plus a count of dropped entries whose
/// target postdates the listing node.
#[derive(Debug)]
pub struct ClassifiedNodes {
    pub nodes: Vec<SubgraphNode>,
    pub dropped_future_edges: usize,
}

/// Types every predecessor link among the retained candidates. A link to a
/// strictly earlier node is explicit, to a same-year node parallel; links
/// pointing forward in time are dropped. Nodes come out ordered by
/// (year, id) with candidate-level features copied onto them.
pub fn classify_edges(selected: &[Candidate], seed: &PaperRecord) -> Result<ClassifiedNodes> {
    let seed_year = seed.year.ok_or_else(|| Error::SeedYearUnknown(seed.id.to_string()))?;
    let mut year_of = BTreeMap::new();
    for candidate in selected {
        let year = candidate.record.year.ok_or_else(|| Error::InvalidRecord {
            id: candidate.record.id.to_string(),
            reason: "selected candidate has no year after temporal filtering".into(),
        })?;
        year_of.insert(candidate.record.id.clone(), year);
    }

    let mut dropped_future_edges = 0;
    let mut nodes = Vec::with_capacity(selected.len());
    for candidate in selected {
        let id = &candidate.record.id;
        let year = year_of[id];
        let mut predecessors = Vec::new();
        for target in &candidate.predecessors_in_pool {
            if target == id {
                continue;
            }
            let Some(target_year) = year_of.get(target) else {
                continue;
            };
            let delta = year - target_year;
            if delta > 0 {
                predecessors.push(PredecessorEdge {
                    id: target.clone(),
                    edge_type: EdgeType::ExplicitPred,
                    delta_yr: delta,
                });
            } else if delta == 0 {
                predecessors.push(PredecessorEdge {
                    id: target.clone(),
                    edge_type: EdgeType::ParallelPred,
                    delta_yr: 0,
                });
            } else {
                dropped_future_edges += 1;
            }
        }
        predecessors.sort();

        let features = EdgeFeatures {
            layer_depth: candidate.layer_depth,
            cited_in_sections: candidate.sections.clone(),
            cite_count: candidate.cite_count,
            section_weight: 0.0,
            delta_year: seed_year - year,
            is_influential_raw: candidate.record.is_influential,
            low_confidence: candidate.low_confidence,
            cited_by_subgraph: 0,
        };
        nodes.push(SubgraphNode {
            record: candidate.record.clone(),
            seed_features: features,
            predecessors,
            pass1_score: candidate.pass1,
            pass2_score: candidate.pass2,
        });
    }

    nodes.sort_by(|a, b| {
        (a.record.year, &a.record.id).cmp(&(b.record.year, &b.record.id))
    });
    Ok(ClassifiedNodes { nodes, dropped_future_edges })
}

/// Removes predecessor links until the relation is acyclic. Cycles can only
/// form among same-year nodes, since explicit links strictly decrease the
/// year. Within a detected cycle the victim is the link whose lister has the
/// lowest full-text citation count, with ties going against the
/// lexicographically larger lister id; this reduces to the documented
/// mutual-pair rule for two-cycles. Returns the removed (lister, target)
/// pairs in removal order.
pub fn break_cycles(nodes: &mut [SubgraphNode]) -> Vec<(PaperId, PaperId)> {
    let mut removed = Vec::new();
    while let Some(cycle) = first_cycle(nodes) {
        let cite_of: BTreeMap<&PaperId, u32> =
            nodes.iter().map(|n| (&n.record.id, n.seed_features.cite_count)).collect();
        // Cycle edges run lister -> target along consecutive positions.
        let victim = cycle
            .windows(2)
            .map(|pair| (&pair[0], &pair[1]))
            .min_by(|(lister_a, _), (lister_b, _)| {
                cite_of[*lister_a]
                    .cmp(&cite_of[*lister_b])
                    .then_with(|| lister_b.cmp(lister_a))
            })
            .expect("cycle has at least two positions");
        let (lister, target) = (victim.0.clone(), victim.1.clone());
        if let Some(node) = nodes.iter_mut().find(|n| n.record.id == lister) {
            node.predecessors.retain(|edge| edge.id != target);
        }
        removed.push((lister, target));
    }
    removed
}

/// First cycle under deterministic traversal: nodes in stored order,
/// predecessor links in stored order. Returned as [v0, v1, ..., v0].
fn first_cycle(nodes: &[SubgraphNode]) -> Option<Vec<PaperId>> {
    let adjacency: BTreeMap<&PaperId, Vec<&PaperId>> = nodes
        .iter()
        .map(|n| (&n.record.id, n.predecessors.iter().map(|e| &e.id).collect()))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Visiting,
        Done,
    }

    fn visit<'a>(
        node: &'a PaperId,
        adjacency: &BTreeMap<&'a PaperId, Vec<&'a PaperId>>,
        marks: &mut BTreeMap<&'a PaperId, Mark>,
        stack: &mut Vec<&'a PaperId>,
    ) -> Option<Vec<PaperId>> {
        match marks.get(node) {
            Some(Mark::Done) => return None,
            Some(Mark::Visiting) => {
                let start = stack.iter().position(|n| *n == node)?;
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
                if adjacency.contains_key(*target) {
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

    let mut marks = BTreeMap::new();
    for node in nodes {
        let mut stack = Vec::new();
        if let Some(cycle) = visit(&node.record.id, &adjacency, &mut marks, &mut stack) {
            return Some(cycle);
        }
    }
    None
}

/// Fills the features that depend on configuration or final topology: the
/// section weight of each node's most salient citing section and the count
/// of retained nodes listing it as a predecessor.
pub fn annotate_features(nodes: &mut [SubgraphNode], config: &PipelineConfig) {
    let mut cited_by: BTreeMap<PaperId, u32> = BTreeMap::new();
    for node in nodes.iter() {
        for edge in &node.predecessors {
            *cited_by.entry(edge.id.clone()).or_insert(0) += 1;
        }
    }
    for node in nodes.iter_mut() {
        node.seed_features.section_weight = node
            .seed_features
            .cited_in_sections
            .iter()
            .filter_map(|label| config.section_weight_table.get(label.as_str()))
            .fold(0.0_f64, |best, w| best.max(*w));
        node.seed_features.cited_by_subgraph =
            cited_by.get(&node.record.id).copied().unwrap_or(0);
    }
}

/// Everything a caller may want to log about one graph construction.
#[derive(Debug)]
pub struct BuildOutcome {
    pub graph: AnnotatedSubgraph,
    /// Reference ids the lookup could not resolve.
    pub skipped: BTreeSet<PaperId>,
    /// Pool size before and after temporal filtering.
    pub pool_size: usize,
    pub pool_size_in_cone: usize,
    pub dropped_future_edges: usize,
    pub removed_cycle_edges: Vec<(PaperId, PaperId)>,
}

/// Runs the full construction pipeline for one seed.
pub fn build_graph(
    seed: &PaperRecord,
    lookup: &dyn RecordLookup,
    profiles: &BTreeMap<PaperId, ProfileEntry>,
    config: &PipelineConfig,
) -> Result<BuildOutcome> {
    let seed_year = seed.year.ok_or_else(|| Error::SeedYearUnknown(seed.id.to_string()))?;

    let pool = expand_two_hop(seed, lookup)?;
    let pool_size = pool.entries.len();
    let pool = apply_temporal_cone(pool, seed_year);
    let pool_size_in_cone = pool.entries.len();
    if pool.entries.is_empty() {
        return Err(Error::EmptySubgraph(seed.id.to_string()));
    }

    let k = compute_budget(seed.reference_ids.len(), &config.budget);

    let mut candidates = candidate_pool(&pool, seed, profiles, config);
    for candidate in &mut candidates {
        candidate.pass1 = score_pass1(candidate, &config.score1_weights);
    }
    let top_pass1 = rank_and_truncate(candidates.clone(), k, |c| c.pass1);
    for candidate in &mut candidates {
        candidate.s_sib = sibling_boost(candidate, &top_pass1, k);
        candidate.pass2 = score_pass2(candidate, &config.score2_weights);
    }
    let selected = select_top_k(candidates, k);

    let classified = classify_edges(&selected, seed)?;
    let mut nodes = classified.nodes;
    let removed_cycle_edges = break_cycles(&mut nodes);
    annotate_features(&mut nodes, config);

    let graph = AnnotatedSubgraph { seed: seed.clone(), nodes, k_budget: k };
    debug_assert!(validate_subgraph(&graph).is_empty(), "{:?}", validate_subgraph(&graph));

    Ok(BuildOutcome {
        graph,
        skipped: pool.skipped,
        pool_size,
        pool_size_in_cone,
        dropped_future_edges: classified.dropped_future_edges,
        removed_cycle_edges,
    })
}
