//! Evaluation harness: answer metrics, multi-turn memorization runs, and
//! robustness scenarios over a labeled QA set.
//!
//! A memorization run executes the dataset in order for each turn: retrieve,
//! generate, score, judge support, apply feedback. Memory persists across
//! turns and is snapshotted at every turn boundary, so a run can stop and
//! resume from any turn with bit-identical continuation. Items inside a turn
//! run sequentially because feedback is order-dependent; the read-only mode
//! (feedback off) leaves the store untouched.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::adapters::doubles::{OracleSufficiency, OracleSupport};
use crate::adapters::{AdapterRegistry, PresentedSentence};
use crate::error::{Error, Result};
use crate::graph::HierGraph;
use crate::memory::{snapshot as mem_snapshot, MemoryStore, SupportLabel};
use crate::retrieval::{retrieve, QueryContext, RetrievalConfig, RetrievalEpisode};

/// One labeled QA item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_support_ids: Option<Vec<u32>>,
}

/// Parses a JSON-Lines dataset of QA items.
pub fn parse_dataset_jsonl(input: &str) -> Result<Vec<QaItem>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: QaItem = serde_json::from_str(line)
            .map_err(|e| Error::Corpus(format!("dataset line {}: {e}", lineno + 1)))?;
        if item.answers.is_empty() {
            return Err(Error::Corpus(format!(
                "dataset line {}: item has no gold answers",
                lineno + 1
            )));
        }
        out.push(item);
    }
    if out.is_empty() {
        return Err(Error::Corpus("dataset contains no items".into()));
    }
    Ok(out)
}

/// 1 iff any gold answer, case-folded and whitespace-normalized, occurs as a
/// substring of the normalized prediction.
pub fn contain_acc(prediction: &str, gold_answers: &[String]) -> u8 {
    let pred = fold_whitespace(prediction);
    gold_answers
        .iter()
        .map(|g| fold_whitespace(g))
        .any(|g| !g.is_empty() && pred.contains(&g)) as u8
}

fn fold_whitespace(s: &str) -> String {
    s.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Bag-of-tokens F1 over whitespace tokens after case-folding and stripping
/// punctuation. Both sides empty scores 1; exactly one side empty scores 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = f1_tokens(prediction);
    let gold = f1_tokens(gold);
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in &pred {
        counts.entry(t).or_default().0 += 1;
    }
    for t in &gold {
        counts.entry(t).or_default().1 += 1;
    }
    let overlap: usize = counts.values().map(|(a, b)| (*a).min(*b)).sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn f1_tokens(s: &str) -> Vec<String> {
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Per-turn aggregate metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TurnReport {
    pub turn: usize,
    pub contain_acc: f64,
    pub token_f1: f64,
    pub mean_iterations: f64,
    /// Engine time around retrieval, adapter time excluded.
    pub mean_latency_ms: f64,
    /// Adapter time during the turn, reported separately.
    pub mean_adapter_ms: f64,
    pub adapter_tokens_in: u64,
    pub adapter_tokens_out: u64,
    pub items_failed: usize,
    pub episode_ids: Vec<String>,
}

/// Everything produced by one turn: the report, per-item episode traces, and
/// the post-turn memory snapshot.
#[derive(Debug, Clone)]
pub struct TurnOutcome {
    pub report: TurnReport,
    pub episodes: Vec<RetrievalEpisode>,
    pub memory_snapshot: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub turns: usize,
    /// Apply judged feedback after every item (memorization mode). Off means
    /// read-only evaluation: the store is never touched.
    pub feedback: bool,
    /// Index assigned to the first executed turn, for resumed runs.
    pub start_turn: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            turns: 1,
            feedback: true,
            start_turn: 0,
        }
    }
}

/// Runs `options.turns` passes over the dataset, mutating `store` as feedback
/// accrues. Items failing with an adapter error are recorded as unanswered
/// and skipped; any other error aborts the run.
pub fn run_memorization(
    dataset: &[QaItem],
    graph: &HierGraph,
    store: &mut MemoryStore,
    config: &RetrievalConfig,
    registry: &AdapterRegistry,
    options: &EvalOptions,
) -> Result<Vec<TurnOutcome>> {
    if options.turns < 1 {
        return Err(Error::InvalidConfig("turns must be >= 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidConfig(
            "dataset is empty (a scenario split may have produced an empty half)".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(options.turns);
    for turn_offset in 0..options.turns {
        let turn = options.start_turn + turn_offset;
        let meter_start = registry.meter_reading();
        let mut episodes = Vec::with_capacity(dataset.len());
        let mut episode_ids = Vec::with_capacity(dataset.len());
        let mut contain_sum = 0.0;
        let mut f1_sum = 0.0;
        let mut iter_sum = 0.0;
        let mut latency_sum = 0.0;
        let mut adapter_ms_sum = 0.0;
        let mut failed = 0usize;

        for (idx, item) in dataset.iter().enumerate() {
            let episode_id = format!("t{turn}-q{idx}");
            match run_item(item, &episode_id, graph, store, config, registry, options) {
                Ok(outcome) => {
                    contain_sum += outcome.contain as f64;
                    f1_sum += outcome.f1;
                    iter_sum += outcome.episode.iteration_count as f64;
                    latency_sum += outcome.episode.wall_ms;
                    adapter_ms_sum += outcome.episode.adapter_ms;
                    episode_ids.push(episode_id);
                    episodes.push(outcome.episode);
                }
                Err(Error::Adapter(_)) => {
                    // Unanswered: zero metric contribution, run continues.
                    failed += 1;
                    episode_ids.push(episode_id);
                }
                Err(e) => return Err(e),
            }
        }

        let n_items = dataset.len() as f64;
        let n_ok = (dataset.len() - failed).max(1) as f64;
        let used = registry.meter_reading().delta_since(&meter_start);
        outcomes.push(TurnOutcome {
            report: TurnReport {
                turn,
                contain_acc: contain_sum / n_items,
                token_f1: f1_sum / n_items,
                mean_iterations: iter_sum / n_ok,
                mean_latency_ms: latency_sum / n_ok,
                mean_adapter_ms: adapter_ms_sum / n_ok,
                adapter_tokens_in: used.tokens_in,
                adapter_tokens_out: used.tokens_out,
                items_failed: failed,
                episode_ids,
            },
            episodes,
            memory_snapshot: mem_snapshot::to_bytes(store),
        });
    }
    Ok(outcomes)
}

struct ItemOutcome {
    episode: RetrievalEpisode,
    contain: u8,
    f1: f64,
}

fn run_item(
    item: &QaItem,
    episode_id: &str,
    graph: &HierGraph,
    store: &mut MemoryStore,
    config: &RetrievalConfig,
    registry: &AdapterRegistry,
    options: &EvalOptions,
) -> Result<ItemOutcome> {
    let query = QueryContext::from_question(episode_id, &item.question, registry)?;
    let episode = retrieve(graph, store, &query, config, registry)?;

    let passage_texts: Vec<&str> = episode
        .final_ranking
        .iter()
        .map(|r| graph.passages()[r.index as usize].text.as_str())
        .collect();
    let prediction = registry.generate(&item.question, &passage_texts)?;

    let contain = contain_acc(&prediction, &item.answers);
    let f1 = item
        .answers
        .iter()
        .map(|g| token_f1(&prediction, g))
        .fold(0.0, f64::max);

    if options.feedback {
        let presented: Vec<PresentedSentence> = episode
            .judged_candidates
            .iter()
            .map(|id| PresentedSentence {
                id: *id,
                text: graph.sentences()[*id as usize].text.clone(),
            })
            .collect();
        let support: BTreeSet<u32> = if presented.is_empty() {
            BTreeSet::new()
        } else {
            registry
                .judge_support(&item.question, &prediction, &presented)?
                .into_iter()
                .collect()
        };
        let labels: BTreeMap<u32, SupportLabel> = episode
            .judged_candidates
            .iter()
            .map(|id| {
                let label = if support.contains(id) {
                    SupportLabel::Supportive
                } else {
                    SupportLabel::NonSupportive
                };
                (*id, label)
            })
            .collect();
        store.apply_feedback(graph, query.signal(), &labels)?;
    }
    Ok(ItemOutcome {
        episode,
        contain,
        f1,
    })
}

/// Query-perturbation scenarios derived from one dataset.
#[derive(Debug, Clone)]
pub struct Scenarios {
    /// Identity copy: repeat the original queries.
    pub same: Vec<QaItem>,
    /// Rewritten paraphrases, entity surfaces preserved.
    pub similar: Vec<QaItem>,
    /// Type-balanced disjoint halves: memorize on `exposure`, evaluate on `eval`.
    pub different: DifferentSplit,
}

#[derive(Debug, Clone)]
pub struct DifferentSplit {
    pub exposure: Vec<QaItem>,
    pub eval: Vec<QaItem>,
}

/// Applies the rewriter to every question, keeping answers and gold labels.
pub fn rewrite_dataset(dataset: &[QaItem], registry: &AdapterRegistry) -> Result<Vec<QaItem>> {
    dataset
        .iter()
        .map(|item| {
            Ok(QaItem {
                question: registry.rewrite(&item.question)?,
                ..item.clone()
            })
        })
        .collect()
}

/// Builds the three scenarios. The `different` split groups items by
/// question_type and halves each group after a seeded shuffle (exposure takes
/// the ceiling half); every item must carry a question_type.
pub fn make_scenarios(
    dataset: &[QaItem],
    registry: &AdapterRegistry,
    seed: u64,
) -> Result<Scenarios> {
    let similar = rewrite_dataset(dataset, registry)?;
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, item) in dataset.iter().enumerate() {
        let ty = item
            .question_type
            .as_deref()
            .ok_or(Error::MissingQuestionType)?;
        by_type.entry(ty).or_default().push(idx);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut exposure = Vec::new();
    let mut eval = Vec::new();
    for indices in by_type.values() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let half = shuffled.len().div_ceil(2);
        for i in &shuffled[..half] {
            exposure.push(dataset[*i].clone());
        }
        for i in &shuffled[half..] {
            eval.push(dataset[*i].clone());
        }
    }
    Ok(Scenarios {
        same: dataset.to_vec(),
        similar,
        different: DifferentSplit { exposure, eval },
    })
}

/// Doubles registry whose sufficiency and support judges answer from the
/// dataset's gold support labels, keyed by question text.
pub fn oracle_registry(seed: u64, dim: usize, dataset: &[QaItem]) -> AdapterRegistry {
    let mut gold: HashMap<String, BTreeSet<u32>> = HashMap::new();
    for item in dataset {
        if let Some(ids) = &item.gold_support_ids {
            gold.insert(item.question.clone(), ids.iter().copied().collect());
        }
    }
    AdapterRegistry::doubles_with_dim(seed, dim)
        .with_sufficiency(Arc::new(OracleSufficiency::new(gold.clone())))
        .with_support(Arc::new(OracleSupport::new(gold)))
}
