//! Round-robin judged tournaments over per-seed candidate ideas.
//!
//! Every ordered pair of methods is judged once per seed across the
//! configured dimensions. A win scores 2, a tie 1 each, so one unordered
//! pair distributes 20 points per seed (two presentations, five dimensions,
//! two points each) and conservation makes scoring bugs loud. Collection is
//! separated from assembly so the pure aggregation step can be property
//! tested without a judge in the loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BootstrapConfig, PipelineConfig};
use crate::gateway::{judge_template_hash, Gateway, PairOutcome};
use crate::model::{FiveFieldIdea, PaperId};
use crate::{Error, Result};

/// One competing method: a name and one idea per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    pub ideas: BTreeMap<PaperId, FiveFieldIdea>,
}

#[derive(Debug, Deserialize)]
struct MethodLine {
    seed_id: PaperId,
    idea: FiveFieldIdea,
}

impl MethodEntry {
    /// Loads a method from a JSONL file of `{"seed_id", "idea"}` lines.
    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        let name = name.into();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ideas = BTreeMap::new();
        for (line_number, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: MethodLine = serde_json::from_str(line).map_err(|e| {
                Error::BadTournament(format!(
                    "{} line {}: {e}",
                    path.display(),
                    line_number + 1
                ))
            })?;
            parsed.idea.validate()?;
            if ideas.insert(parsed.seed_id.clone(), parsed.idea).is_some() {
                return Err(Error::BadTournament(format!(
                    "{} lists seed {} twice",
                    path.display(),
                    parsed.seed_id
                )));
            }
        }
        if ideas.is_empty() {
            return Err(Error::BadTournament(format!("{} has no entries", path.display())));
        }
        Ok(MethodEntry { name, ideas })
    }
}

/// One judged presentation: `first` was shown as idea A, `second` as idea B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub seed_id: PaperId,
    pub first: String,
    pub second: String,
    pub outcomes: Vec<PairOutcome>,
    pub abstained: bool,
}

/// Win/tie/loss tally for one method on one dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub wins: u32,
    pub ties: u32,
    pub losses: u32,
}

/// Percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Pure aggregation output, before bootstrap intervals are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledScores {
    /// Points per method per seed; one unordered pair distributes 20.
    pub per_seed_points: BTreeMap<String, BTreeMap<PaperId, u32>>,
    /// Mean per-seed points per method.
    pub mean_points: BTreeMap<String, f64>,
    /// Seeds on which each method held the top score outright or by tie break.
    pub rank1_counts: BTreeMap<String, u32>,
    /// Per method, per dimension win/tie/loss against each opponent per seed.
    pub dimension_records: BTreeMap<String, BTreeMap<String, WinTieLoss>>,
    pub abstentions: u32,
}

/// Full tournament record: inputs, verdicts, and aggregate scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub methods: Vec<String>,
    pub seeds: Vec<PaperId>,
    pub dimensions: Vec<String>,
    pub judge_backend: String,
    pub judge_template_hash: String,
    pub rank1_tie_break: String,
    pub scores: AssembledScores,
    pub intervals: BTreeMap<String, Interval>,
    pub verdicts: Vec<CellVerdict>,
}

fn validate_entries(methods: &[MethodEntry]) -> Result<(Vec<String>, Vec<PaperId>)> {
    if methods.len() < 2 {
        return Err(Error::BadTournament(format!(
            "need at least 2 methods, got {}",
            methods.len()
        )));
    }
    let mut names = BTreeSet::new();
    for method in methods {
        if method.name.trim().is_empty() {
            return Err(Error::BadTournament("method with empty name".into()));
        }
        if !names.insert(method.name.clone()) {
            return Err(Error::BadTournament(format!("duplicate method name {}", method.name)));
        }
    }
    let reference: BTreeSet<&PaperId> = methods[0].ideas.keys().collect();
    for method in &methods[1..] {
        let this: BTreeSet<&PaperId> = method.ideas.keys().collect();
        if this != reference {
            let missing: Vec<String> = reference
                .symmetric_difference(&this)
                .map(|id| id.to_string())
                .collect();
            return Err(Error::BadTournament(format!(
                "methods {} and {} cover different seeds: {}",
                methods[0].name,
                method.name,
                missing.join(", ")
            )));
        }
    }
    let seeds: Vec<PaperId> = methods[0].ideas.keys().cloned().collect();
    Ok((names.into_iter().collect(), seeds))
}

/// Judges every ordered pair of methods on every seed, in canonical order
/// (seeds ascending, then method names ascending for each slot).
pub fn collect_verdicts(
    gateway: &Gateway,
    methods: &[MethodEntry],
    contexts: &BTreeMap<PaperId, String>,
    dimensions: &[String],
) -> Result<Vec<CellVerdict>> {
    let (names, seeds) = validate_entries(methods)?;
    let by_name: BTreeMap<&str, &MethodEntry> =
        methods.iter().map(|m| (m.name.as_str(), m)).collect();
    let mut verdicts = Vec::with_capacity(seeds.len() * names.len() * (names.len() - 1));
    for seed in &seeds {
        let context = contexts
            .get(seed)
            .ok_or_else(|| Error::BadTournament(format!("no seed context for {seed}")))?;
        for first in &names {
            for second in &names {
                if first == second {
                    continue;
                }
                let idea_first = &by_name[first.as_str()].ideas[seed];
                let idea_second = &by_name[second.as_str()].ideas[seed];
                let verdict = gateway.judge_pair(context, idea_first, idea_second, dimensions)?;
                verdicts.push(CellVerdict {
                    seed_id: seed.clone(),
                    first: first.clone(),
                    second: second.clone(),
                    outcomes: verdict.outcomes,
                    abstained: verdict.abstained,
                });
            }
        }
    }
    Ok(verdicts)
}

/// Aggregates verdicts into scores. Requires exactly one verdict per seed
/// per ordered pair; anything missing, duplicated, or unknown is an error.
pub fn assemble(
    method_names: &[String],
    seed_ids: &[PaperId],
    dimensions: &[String],
    verdicts: &[CellVerdict],
    tie_break_dimension: &str,
) -> Result<AssembledScores> {
    let tie_break_index = dimensions
        .iter()
        .position(|d| d == tie_break_dimension)
        .ok_or_else(|| {
            Error::BadTournament(format!(
                "tie-break dimension {tie_break_dimension} not among judged dimensions"
            ))
        })?;

    let mut indexed: BTreeMap<(&PaperId, &str, &str), &CellVerdict> = BTreeMap::new();
    for verdict in verdicts {
        if verdict.outcomes.len() != dimensions.len() {
            return Err(Error::BadTournament(format!(
                "verdict for seed {} pair ({}, {}) has {} outcomes for {} dimensions",
                verdict.seed_id,
                verdict.first,
                verdict.second,
                verdict.outcomes.len(),
                dimensions.len()
            )));
        }
        let key = (&verdict.seed_id, verdict.first.as_str(), verdict.second.as_str());
        if indexed.insert(key, verdict).is_some() {
            return Err(Error::BadTournament(format!(
                "duplicate verdict for seed {} pair ({}, {})",
                verdict.seed_id, verdict.first, verdict.second
            )));
        }
    }
    let expected = seed_ids.len() * method_names.len() * (method_names.len() - 1);
    if indexed.len() != expected {
        return Err(Error::BadTournament(format!(
            "expected {expected} verdicts, indexed {}",
            indexed.len()
        )));
    }

    // Points per dimension per (method, seed), from which everything else
    // derives.
    type DimPoints = Vec<u32>;
    let mut dim_points: BTreeMap<(&str, &PaperId), DimPoints> = BTreeMap::new();
    for name in method_names {
        for seed in seed_ids {
            dim_points.insert((name.as_str(), seed), vec![0; dimensions.len()]);
        }
    }
    let mut abstentions = 0u32;
    for seed in seed_ids {
        for first in method_names {
            for second in method_names {
                if first == second {
                    continue;
                }
                let verdict = indexed
                    .get(&(seed, first.as_str(), second.as_str()))
                    .ok_or_else(|| {
                        Error::BadTournament(format!(
                            "missing verdict for seed {seed} pair ({first}, {second})"
                        ))
                    })?;
                if verdict.abstained {
                    abstentions += 1;
                }
                for (dim, outcome) in verdict.outcomes.iter().enumerate() {
                    let (first_points, second_points) = match outcome {
                        PairOutcome::FirstWins => (2, 0),
                        PairOutcome::Tie => (1, 1),
                        PairOutcome::SecondWins => (0, 2),
                    };
                    dim_points.get_mut(&(first.as_str(), seed)).expect("first indexed")[dim] +=
                        first_points;
                    dim_points.get_mut(&(second.as_str(), seed)).expect("second indexed")[dim] +=
                        second_points;
                }
            }
        }
    }

    let mut per_seed_points: BTreeMap<String, BTreeMap<PaperId, u32>> = BTreeMap::new();
    for name in method_names {
        let totals: BTreeMap<PaperId, u32> = seed_ids
            .iter()
            .map(|seed| {
                let points = dim_points[&(name.as_str(), seed)].iter().sum();
                (seed.clone(), points)
            })
            .collect();
        per_seed_points.insert(name.clone(), totals);
    }

    let mean_points: BTreeMap<String, f64> = per_seed_points
        .iter()
        .map(|(name, totals)| {
            let sum: u32 = totals.values().sum();
            (name.clone(), f64::from(sum) / seed_ids.len() as f64)
        })
        .collect();

    // Rank-1 per seed: highest total, then highest tie-break dimension
    // points, then the lexicographically smallest name.
    let mut rank1_counts: BTreeMap<String, u32> =
        method_names.iter().map(|n| (n.clone(), 0)).collect();
    for seed in seed_ids {
        let winner = method_names
            .iter()
            .max_by(|a, b| {
                let total_a: u32 = dim_points[&(a.as_str(), seed)].iter().sum();
                let total_b: u32 = dim_points[&(b.as_str(), seed)].iter().sum();
                total_a
                    .cmp(&total_b)
                    .then_with(|| {
                        dim_points[&(a.as_str(), seed)][tie_break_index]
                            .cmp(&dim_points[&(b.as_str(), seed)][tie_break_index])
                    })
                    .then_with(|| b.cmp(a))
            })
            .expect("at least two methods");
        *rank1_counts.get_mut(winner).expect("winner known") += 1;
    }

    // Per-dimension records: each (seed, unordered opponent pair, dimension)
    // yields one win, tie, or loss from the two-presentation subtotal.
    let mut dimension_records: BTreeMap<String, BTreeMap<String, WinTieLoss>> = method_names
        .iter()
        .map(|name| {
            let per_dim = dimensions.iter().map(|d| (d.clone(), WinTieLoss::default())).collect();
            (name.clone(), per_dim)
        })
        .collect();
    for seed in seed_ids {
        for (a_pos, a) in method_names.iter().enumerate() {
            for b in &method_names[a_pos + 1..] {
                let ab = indexed[&(seed, a.as_str(), b.as_str())];
                let ba = indexed[&(seed, b.as_str(), a.as_str())];
                for (dim, dimension) in dimensions.iter().enumerate() {
                    let a_forward = match ab.outcomes[dim] {
                        PairOutcome::FirstWins => 2,
                        PairOutcome::Tie => 1,
                        PairOutcome::SecondWins => 0,
                    };
                    let a_reverse = match ba.outcomes[dim] {
                        PairOutcome::FirstWins => 0,
                        PairOutcome::Tie => 1,
                        PairOutcome::SecondWins => 2,
                    };
                    let subtotal = a_forward + a_reverse;
                    let a_record = dimension_records
                        .get_mut(a)
                        .and_then(|m| m.get_mut(dimension))
                        .expect("record preallocated");
                    match subtotal.cmp(&2) {
                        std::cmp::Ordering::Greater => a_record.wins += 1,
                        std::cmp::Ordering::Equal => a_record.ties += 1,
                        std::cmp::Ordering::Less => a_record.losses += 1,
                    }
                    let b_record = dimension_records
                        .get_mut(b)
                        .and_then(|m| m.get_mut(dimension))
                        .expect("record preallocated");
                    match subtotal.cmp(&2) {
                        std::cmp::Ordering::Greater => b_record.losses += 1,
                        std::cmp::Ordering::Equal => b_record.ties += 1,
                        std::cmp::Ordering::Less => b_record.wins += 1,
                    }
                }
            }
        }
    }

    Ok(AssembledScores {
        per_seed_points,
        mean_points,
        rank1_counts,
        dimension_records,
        abstentions,
    })
}

fn percentile(sorted: &[f64], quantile: f64) -> f64 {
    let index = ((sorted.len() - 1) as f64 * quantile).round() as usize;
    sorted[index]
}

/// Paired percentile bootstrap over seeds: every resample draws one set of
/// seed indices shared by all methods, so per-seed correlations survive.
pub fn bootstrap_intervals(
    per_seed_points: &BTreeMap<String, BTreeMap<PaperId, u32>>,
    seeds: &[PaperId],
    config: &BootstrapConfig,
) -> BTreeMap<String, Interval> {
    let n = seeds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples: BTreeMap<&str, Vec<f64>> = per_seed_points
        .keys()
        .map(|name| (name.as_str(), Vec::with_capacity(config.resamples)))
        .collect();
    let totals_by_method: BTreeMap<&str, Vec<f64>> = per_seed_points
        .iter()
        .map(|(name, totals)| {
            let ordered: Vec<f64> = seeds.iter().map(|s| f64::from(totals[s])).collect();
            (name.as_str(), ordered)
        })
        .collect();
    let mut indices = vec![0usize; n];
    for _ in 0..config.resamples {
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        for (name, ordered) in &totals_by_method {
            let mean = indices.iter().map(|&i| ordered[i]).sum::<f64>() / n as f64;
            samples.get_mut(name).expect("sample slot").push(mean);
        }
    }
    let alpha = 1.0 - config.confidence;
    samples
        .into_iter()
        .map(|(name, mut draws)| {
            draws.sort_by(f64::total_cmp);
            let interval = Interval {
                lower: percentile(&draws, alpha / 2.0),
                upper: percentile(&draws, 1.0 - alpha / 2.0),
            };
            (name.to_string(), interval)
        })
        .collect()
}

/// Runs the full tournament: judge every ordered pair on every seed, then
/// aggregate and attach bootstrap intervals.
pub fn run_round_robin(
    gateway: &Gateway,
    methods: &[MethodEntry],
    contexts: &BTreeMap<PaperId, String>,
    config: &PipelineConfig,
) -> Result<TournamentResult> {
    let (names, seeds) = validate_entries(methods)?;
    let verdicts = collect_verdicts(gateway, methods, contexts, &config.judge_dimensions)?;
    let scores = assemble(
        &names,
        &seeds,
        &config.judge_dimensions,
        &verdicts,
        &config.rank1_tie_break_dimension,
    )?;
    let intervals = bootstrap_intervals(&scores.per_seed_points, &seeds, &config.bootstrap);
    Ok(TournamentResult {
        methods: names,
        seeds,
        dimensions: config.judge_dimensions.clone(),
        judge_backend: gateway.backend_name(),
        judge_template_hash: judge_template_hash(),
        rank1_tie_break: format!(
            "higher {} points, then lexicographically smaller method name",
            config.rank1_tie_break_dimension
        ),
        scores,
        intervals,
        verdicts,
    })
}

/// Human-readable summary of a tournament result.
pub fn render_report(result: &TournamentResult) -> String {
    let mut out = String::new();
    out.push_str("JUDGED ROUND-ROBIN TOURNAMENT\n");
    let _ = writeln!(out, "methods: {}", result.methods.join(", "));
    let _ = writeln!(
        out,
        "seeds: {}    dimensions: {}",
        result.seeds.len(),
        result.dimensions.join(", ")
    );
    let _ = writeln!(
        out,
        "judge backend: {}    template sha256: {}",
        result.judge_backend,
        &result.judge_template_hash[..16.min(result.judge_template_hash.len())]
    );
    let _ = writeln!(out, "abstentions: {}", result.scores.abstentions);
    let _ = writeln!(out, "rank-1 tie break: {}", result.rank1_tie_break);
    out.push('\n');
    let _ = writeln!(out, "{:<20}{:>12}  {:>18}  {:>8}", "method", "mean points", "95% interval", "rank-1");
    for name in &result.methods {
        let mean = result.scores.mean_points[name];
        let interval = &result.intervals[name];
        let rank1 = result.scores.rank1_counts[name];
        let _ = writeln!(
            out,
            "{:<20}{:>12.2}  [{:>7.2}, {:>7.2}]  {:>5}/{}",
            name,
            mean,
            interval.lower,
            interval.upper,
            rank1,
            result.seeds.len()
        );
    }
    out.push('\n');
    out.push_str("per-dimension win/tie/loss:\n");
    let _ = write!(out, "{:<20}", "method");
    for dimension in &result.dimensions {
        let _ = write!(out, "{dimension:>16}");
    }
    out.push('\n');
    for name in &result.methods {
        let _ = write!(out, "{name:<20}");
        for dimension in &result.dimensions {
            let record = &result.scores.dimension_records[name][dimension];
            let cell = format!("{}/{}/{}", record.wins, record.ties, record.losses);
            let _ = write!(out, "{cell:>16}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashedJudgeBackend, StubBackend};
    use proptest::prelude::*;

    fn idea(tag: &str) -> FiveFieldIdea {
        FiveFieldIdea {
            problem: format!("problem {tag}"),
            existing_methods: format!("existing {tag}"),
            motivation: format!("motivation {tag}"),
            proposed_method: format!("method {tag}"),
            experiment_plan: format!("plan {tag}"),
        }
    }

    fn dimensions() -> Vec<String> {
        PipelineConfig::default().judge_dimensions
    }

    fn seed(id: &str) -> PaperId {
        PaperId::new(id).unwrap()
    }

    fn methods_for(names: &[&str], seeds: &[&str]) -> Vec<MethodEntry> {
        names
            .iter()
            .map(|name| MethodEntry {
                name: name.to_string(),
                ideas: seeds
                    .iter()
                    .map(|s| (seed(s), idea(&format!("{name} on {s}"))))
                    .collect(),
            })
            .collect()
    }

    fn contexts_for(seeds: &[&str]) -> BTreeMap<PaperId, String> {
        seeds.iter().map(|s| (seed(s), format!("context for {s}"))).collect()
    }

    fn hashed_gateway() -> Gateway {
        Gateway::new(Box::new(HashedJudgeBackend::new(dimensions())))
    }

    #[test]
    fn conservation_holds_for_hashed_judge() {
        let methods = methods_for(&["alpha", "beta", "gamma"], &["s1", "s2", "s3", "s4"]);
        let contexts = contexts_for(&["s1", "s2", "s3", "s4"]);
        let config = PipelineConfig::default();
        let result = run_round_robin(&hashed_gateway(), &methods, &contexts, &config).unwrap();
        // Three methods distribute 20 * 3 = 60 points per seed.
        for s in &result.seeds {
            let total: u32 = result.methods.iter().map(|m| result.scores.per_seed_points[m][s]).sum();
            assert_eq!(total, 60, "per-seed conservation on {s}");
        }
        let mean_sum: f64 = result.scores.mean_points.values().sum();
        assert!((mean_sum - 60.0).abs() < 1e-9, "mean conservation, got {mean_sum}");
        let rank1_sum: u32 = result.scores.rank1_counts.values().sum();
        assert_eq!(rank1_sum as usize, result.seeds.len());
    }

    #[test]
    fn tournament_is_deterministic_and_permutation_invariant() {
        let names = ["alpha", "beta", "gamma"];
        let seeds = ["s1", "s2", "s3"];
        let contexts = contexts_for(&seeds);
        let config = PipelineConfig::default();
        let forward = methods_for(&names, &seeds);
        let mut reversed = forward.clone();
        reversed.reverse();

        let first = run_round_robin(&hashed_gateway(), &forward, &contexts, &config).unwrap();
        let second = run_round_robin(&hashed_gateway(), &forward, &contexts, &config).unwrap();
        let permuted = run_round_robin(&hashed_gateway(), &reversed, &contexts, &config).unwrap();

        let canonical = serde_json::to_string(&first).unwrap();
        assert_eq!(canonical, serde_json::to_string(&second).unwrap(), "rerun must be identical");
        assert_eq!(canonical, serde_json::to_string(&permuted).unwrap(), "input order must not matter");
    }

    #[test]
    fn hand_scored_two_method_example() {
        // alpha vs beta on one seed. Forward presentation: alpha wins
        // novelty and significance, ties feasibility and effectiveness,
        // loses clarity. Reverse presentation: beta (listed first) ties
        // novelty, wins clarity, loses the rest.
        let alpha_first = r#"{"novelty": "A", "significance": "A", "feasibility": "tie",
            "clarity": "B", "effectiveness": "tie"}"#;
        let beta_first = r#"{"novelty": "tie", "significance": "B", "feasibility": "B",
            "clarity": "A", "effectiveness": "B"}"#;
        let script = serde_json::json!({
            "rules": [
                {"contains": ["problem alpha on s1\"", "IDEA B"], "replies": [alpha_first]},
            ],
            "default": [beta_first]
        });
        // The rule fires only when alpha is idea A; the reverse presentation
        // falls through to the default.
        let script = {
            let mut value = script;
            value["rules"][0]["contains"] = serde_json::json!([
                "IDEA A:\n{\n  \"Problem\": \"problem alpha on s1\""
            ]);
            value.to_string()
        };
        let gateway = Gateway::new(Box::new(StubBackend::from_script_json(&script).unwrap()));
        let methods = methods_for(&["alpha", "beta"], &["s1"]);
        let contexts = contexts_for(&["s1"]);
        let config = PipelineConfig::default();
        let result = run_round_robin(&gateway, &methods, &contexts, &config).unwrap();

        // Forward: alpha 2+2+1+0+1 = 6, beta 4. Reverse (beta first):
        // beta 1+0+0+2+0 = 3, alpha 1+2+2+0+2 = 7. Totals: alpha 13, beta 7.
        assert_eq!(result.scores.per_seed_points["alpha"][&seed("s1")], 13);
        assert_eq!(result.scores.per_seed_points["beta"][&seed("s1")], 7);
        assert_eq!(result.scores.rank1_counts["alpha"], 1);
        assert_eq!(result.scores.rank1_counts["beta"], 0);
        assert_eq!(result.scores.abstentions, 0);

        // Per-dimension subtotals for alpha: novelty 2+1=3 W, significance
        // 2+2=4 W, feasibility 1+2=3 W, clarity 0+0=0 L, effectiveness
        // 1+2=3 W.
        let alpha_records = &result.scores.dimension_records["alpha"];
        assert_eq!(alpha_records["novelty"], WinTieLoss { wins: 1, ties: 0, losses: 0 });
        assert_eq!(alpha_records["significance"], WinTieLoss { wins: 1, ties: 0, losses: 0 });
        assert_eq!(alpha_records["feasibility"], WinTieLoss { wins: 1, ties: 0, losses: 0 });
        assert_eq!(alpha_records["clarity"], WinTieLoss { wins: 0, ties: 0, losses: 1 });
        assert_eq!(alpha_records["effectiveness"], WinTieLoss { wins: 1, ties: 0, losses: 0 });
        let beta_records = &result.scores.dimension_records["beta"];
        assert_eq!(beta_records["clarity"], WinTieLoss { wins: 1, ties: 0, losses: 0 });
        assert_eq!(beta_records["novelty"], WinTieLoss { wins: 0, ties: 0, losses: 1 });
    }

    #[test]
    fn abstention_scores_all_ties_and_is_counted() {
        // Judge replies are never valid JSON verdicts, so every ordered pair
        // abstains into all-ties.
        let gateway = Gateway::new(
            Box::new(StubBackend::from_script_json(r#"{"default": ["no verdict"]}"#).unwrap()),
        )
        .with_retries(0, std::time::Duration::ZERO);
        let methods = methods_for(&["alpha", "beta"], &["s1", "s2"]);
        let contexts = contexts_for(&["s1", "s2"]);
        let config = PipelineConfig::default();
        let result = run_round_robin(&gateway, &methods, &contexts, &config).unwrap();
        assert_eq!(result.scores.abstentions, 4, "two seeds, two ordered pairs each");
        for s in &result.seeds {
            assert_eq!(result.scores.per_seed_points["alpha"][s], 10);
            assert_eq!(result.scores.per_seed_points["beta"][s], 10);
        }
        // All-tie seeds fall to the tie break: equal totals, equal novelty,
        // lexicographically smaller name wins.
        assert_eq!(result.scores.rank1_counts["alpha"], 2);
        assert_eq!(result.scores.rank1_counts["beta"], 0);
        let record = &result.scores.dimension_records["alpha"]["novelty"];
        assert_eq!(*record, WinTieLoss { wins: 0, ties: 2, losses: 0 });
    }

    #[test]
    fn mismatched_seed_sets_are_rejected() {
        let mut methods = methods_for(&["alpha", "beta"], &["s1", "s2"]);
        methods[1].ideas.remove(&seed("s2"));
        methods[1].ideas.insert(seed("s3"), idea("beta on s3"));
        let contexts = contexts_for(&["s1", "s2", "s3"]);
        let config = PipelineConfig::default();
        let result = run_round_robin(&hashed_gateway(), &methods, &contexts, &config);
        assert!(matches!(result, Err(Error::BadTournament(_))));
    }

    #[test]
    fn assemble_rejects_incomplete_or_duplicated_verdicts() {
        let names = vec!["alpha".to_string(), "beta".to_string()];
        let seeds = vec![seed("s1")];
        let dims = dimensions();
        let verdict = CellVerdict {
            seed_id: seed("s1"),
            first: "alpha".into(),
            second: "beta".into(),
            outcomes: vec![PairOutcome::Tie; 5],
            abstained: false,
        };
        let missing = assemble(&names, &seeds, &dims, std::slice::from_ref(&verdict), "novelty");
        assert!(missing.is_err(), "one of two ordered verdicts missing");
        let duplicated = assemble(
            &names,
            &seeds,
            &dims,
            &[verdict.clone(), verdict.clone()],
            "novelty",
        );
        assert!(duplicated.is_err());
        let mut short = verdict.clone();
        short.outcomes.pop();
        let reverse = CellVerdict {
            seed_id: seed("s1"),
            first: "beta".into(),
            second: "alpha".into(),
            outcomes: vec![PairOutcome::Tie; 5],
            abstained: false,
        };
        let wrong_arity = assemble(&names, &seeds, &dims, &[short, reverse], "novelty");
        assert!(wrong_arity.is_err());
    }

    #[test]
    fn bootstrap_is_deterministic_and_brackets_the_mean() {
        let methods = methods_for(&["alpha", "beta"], &["s1", "s2", "s3", "s4", "s5"]);
        let contexts = contexts_for(&["s1", "s2", "s3", "s4", "s5"]);
        let mut config = PipelineConfig::default();
        config.bootstrap.resamples = 2000;
        let first = run_round_robin(&hashed_gateway(), &methods, &contexts, &config).unwrap();
        let second = run_round_robin(&hashed_gateway(), &methods, &contexts, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&first.intervals).unwrap(),
            serde_json::to_string(&second.intervals).unwrap()
        );
        for name in &first.methods {
            let interval = &first.intervals[name];
            let mean = first.scores.mean_points[name];
            assert!(interval.lower <= mean + 1e-9, "{name}: {} > {mean}", interval.lower);
            assert!(interval.upper >= mean - 1e-9, "{name}: {} < {mean}", interval.upper);
            assert!(interval.lower <= interval.upper);
        }
    }

    #[test]
    fn report_mentions_every_method_and_dimension() {
        let methods = methods_for(&["alpha", "beta"], &["s1", "s2"]);
        let contexts = contexts_for(&["s1", "s2"]);
        let config = PipelineConfig::default();
        let result = run_round_robin(&hashed_gateway(), &methods, &contexts, &config).unwrap();
        let report = render_report(&result);
        for name in &result.methods {
            assert!(report.contains(name));
        }
        for dimension in &result.dimensions {
            assert!(report.contains(dimension));
        }
        assert!(report.contains("rank-1 tie break"));
    }

    #[test]
    fn method_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.jsonl");
        let mut lines = Vec::new();
        for s in ["s1", "s2"] {
            lines.push(
                serde_json::json!({"seed_id": s, "idea": idea(&format!("alpha {s}"))}).to_string(),
            );
        }
        std::fs::write(&path, lines.join("\n")).unwrap();
        let method = MethodEntry::load("alpha", &path).unwrap();
        assert_eq!(method.ideas.len(), 2);

        let dup = format!("{}\n{}", lines[0], lines[0]);
        std::fs::write(&path, dup).unwrap();
        assert!(MethodEntry::load("alpha", &path).is_err());
    }

    // ------------------------------------------------------------------
    // Property tests over the pure assembly step.

    fn outcome_strategy() -> impl Strategy<Value = PairOutcome> {
        prop_oneof![
            Just(PairOutcome::FirstWins),
            Just(PairOutcome::Tie),
            Just(PairOutcome::SecondWins),
        ]
    }

    fn verdict_set_strategy(
        method_count: usize,
        seed_count: usize,
    ) -> impl Strategy<Value = Vec<CellVerdict>> {
        let cells = seed_count * method_count * (method_count - 1);
        proptest::collection::vec(
            proptest::collection::vec(outcome_strategy(), 5),
            cells,
        )
        .prop_map(move |outcome_sets| {
            let names: Vec<String> = (0..method_count).map(|i| format!("m{i}")).collect();
            let seeds: Vec<PaperId> = (0..seed_count).map(|i| seed(&format!("s{i}"))).collect();
            let mut verdicts = Vec::with_capacity(cells);
            let mut cursor = 0;
            for s in &seeds {
                for first in &names {
                    for second in &names {
                        if first == second {
                            continue;
                        }
                        verdicts.push(CellVerdict {
                            seed_id: s.clone(),
                            first: first.clone(),
                            second: second.clone(),
                            outcomes: outcome_sets[cursor].clone(),
                            abstained: false,
                        });
                        cursor += 1;
                    }
                }
            }
            verdicts
        })
    }

    proptest! {
        #[test]
        fn assembly_conserves_points_and_rank1(
            verdicts in (2usize..5, 1usize..5).prop_flat_map(|(m, s)| {
                verdict_set_strategy(m, s).prop_map(move |v| (m, s, v))
            })
        ) {
            let (method_count, seed_count, verdicts) = verdicts;
            let names: Vec<String> = (0..method_count).map(|i| format!("m{i}")).collect();
            let seeds: Vec<PaperId> = (0..seed_count).map(|i| seed(&format!("s{i}"))).collect();
            let dims = dimensions();
            let scores = assemble(&names, &seeds, &dims, &verdicts, "novelty").unwrap();

            let per_pair = 20;
            let pair_count = method_count * (method_count - 1) / 2;
            for s in &seeds {
                let total: u32 = names.iter().map(|n| scores.per_seed_points[n][s]).sum();
                prop_assert_eq!(total as usize, per_pair * pair_count, "seed {} conservation", s);
            }
            let rank1_total: u32 = scores.rank1_counts.values().sum();
            prop_assert_eq!(rank1_total as usize, seed_count);

            // Dimension records: every method plays seed_count * (M - 1)
            // pair-dimension cells per dimension.
            for name in &names {
                for dimension in &dims {
                    let record = &scores.dimension_records[name][dimension];
                    let played = record.wins + record.ties + record.losses;
                    prop_assert_eq!(played as usize, seed_count * (method_count - 1));
                }
            }
        }

        #[test]
        fn flipping_one_tie_moves_exactly_one_point(
            base in verdict_set_strategy(2, 2),
            cell in 0usize..4,
            dim in 0usize..5,
        ) {
            let names = vec!["m0".to_string(), "m1".to_string()];
            let seeds = vec![seed("s0"), seed("s1")];
            let dims = dimensions();
            let mut flipped = base.clone();
            prop_assume!(flipped[cell].outcomes[dim] == PairOutcome::Tie);
            flipped[cell].outcomes[dim] = PairOutcome::FirstWins;

            let before = assemble(&names, &seeds, &dims, &base, "novelty").unwrap();
            let after = assemble(&names, &seeds, &dims, &flipped, "novelty").unwrap();
            let winner = flipped[cell].first.clone();
            let loser = flipped[cell].second.clone();
            let s = flipped[cell].seed_id.clone();
            prop_assert_eq!(
                after.per_seed_points[&winner][&s],
                before.per_seed_points[&winner][&s] + 1
            );
            prop_assert_eq!(
                after.per_seed_points[&loser][&s] + 1,
                before.per_seed_points[&loser][&s]
            );
        }
    }
}
