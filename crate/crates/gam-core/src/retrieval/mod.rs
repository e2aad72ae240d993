//! Memory-guided iterative retrieval.
//!
//! One query runs as a loop of at most `max_iterations` hops:
//!
//! 1. propagate entity activation to sentences, gate each sentence by its
//!    memory state, L1-normalize over the candidates;
//! 2. select the top sentences, accumulate their mass onto passages as this
//!    iteration's tier bonus, and recompute the cumulative passage ranking
//!    (dense prior plus log-damped, 1/t-discounted tier bonuses);
//! 3. show the selected sentences to the sufficiency judge; stop on a yes,
//!    on an empty selection, or at the iteration cap, otherwise reactivate
//!    entities from the selected sentences (per-entity mean) and continue.
//!
//! Retrieval is read-only with respect to graph and store: any number of
//! retrievals may run concurrently. Feedback for an episode must be applied
//! strictly after the episode it justifies.

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterRegistry, PresentedSentence};
use crate::error::{Error, Result};
use crate::graph::{ops, EntityId, HierGraph, PassageId, SentenceId};
use crate::memory::{MemoryStore, QuerySignal, SentenceMemory};
use crate::vecmath;

/// Retrieval hyperparameters: 3 iterations, top-3 sentences and top-5
/// next-hop entities per iteration, top-5 passages, a weak dense prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub max_iterations: usize,
    pub k_sentences: usize,
    pub k_entities: usize,
    pub k_passages: usize,
    /// Weight of the dense passage-query prior in the passage score.
    pub alpha: f64,
    /// Floor for the sentence-query cosine; keeps sentence weights
    /// non-negative so normalized scores stay evidence masses.
    pub sem_floor: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            max_iterations: 3,
            k_sentences: 3,
            k_entities: 5,
            k_passages: 5,
            alpha: 0.01,
            sem_floor: 0.0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.k_sentences < 1 || self.k_entities < 1 || self.k_passages < 1 {
            return Err(Error::InvalidConfig("top-k limits must be >= 1".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig("alpha must be >= 0".into()));
        }
        Ok(())
    }
}

/// A query prepared for retrieval: embedded text, canonicalized entity
/// surfaces with their embeddings, and an optional time-constraint embedding.
#[derive(Debug, Clone)]
pub struct QueryContext {
    pub id: String,
    pub text: String,
    pub embedding: Vec<f32>,
    pub entities: Vec<String>,
    pub entity_embeddings: Vec<Vec<f32>>,
    /// `None` means the query carries no temporal constraint.
    pub time_embedding: Option<Vec<f32>>,
    pub time_expr: Option<String>,
}

impl QueryContext {
    /// Embeds the question, extracts and embeds its entities, and extracts
    /// its time constraint (if any) through the registry adapters.
    pub fn from_question(id: &str, question: &str, registry: &AdapterRegistry) -> Result<Self> {
        let embedding = registry.embed(question)?;
        let mut entities = Vec::new();
        for (sentence, _) in registry.segment(question)? {
            for surface in registry.extract_entities(&sentence)? {
                if !entities.contains(&surface) {
                    entities.push(surface);
                }
            }
        }
        let entity_embeddings = entities
            .iter()
            .map(|e| registry.embed(e))
            .collect::<Result<Vec<_>>>()?;
        let time_expr = registry.extract_time(question)?;
        let time_embedding = match &time_expr {
            Some(expr) => Some(registry.embed(expr)?),
            None => None,
        };
        Ok(QueryContext {
            id: id.to_string(),
            text: question.to_string(),
            embedding,
            entities,
            entity_embeddings,
            time_embedding,
            time_expr,
        })
    }

    pub fn signal(&self) -> QuerySignal<'_> {
        QuerySignal {
            task: &self.embedding,
            time: self.time_embedding.as_deref(),
        }
    }

    pub fn is_timed(&self) -> bool {
        self.time_embedding.is_some()
    }
}

/// Memory gating terms for one sentence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gates {
    pub task: f64,
    pub time: f64,
    /// `s_sem * g_task * g_time`, with `s_sem` floored at `sem_floor`.
    pub weight: f64,
}

/// Computes the memory gates and the gated sentence weight.
///
/// `g_task = 1 + (1 - pi_task) * cos(m_task, q)`; the time gate is built the
/// same way against the query's time embedding, and pinned to exactly 1 for
/// untimed queries.
pub fn sentence_gate(
    mem: &SentenceMemory,
    sentence_embedding: &[f32],
    query: &QueryContext,
    sem_floor: f64,
) -> Gates {
    let g_task = 1.0 + (1.0 - mem.pi_task) * vecmath::cosine_or_zero(&mem.m_task, &query.embedding);
    let g_time = match &query.time_embedding {
        Some(q_time) => 1.0 + (1.0 - mem.pi_time) * vecmath::cosine_or_zero(&mem.m_time, q_time),
        None => 1.0,
    };
    let s_sem = vecmath::cosine_or_zero(sentence_embedding, &query.embedding ).max(sem_floor);
    Gates {
        task: g_task,
        time: g_time,
        weight: s_sem * g_task * g_time,
    }
}

/// Aligns each query entity to its most similar graph entity node and seeds
/// the first-round activation with the cosine score (clamped at zero).
/// Several query entities landing on one node keep the maximum score.
/// Entity-free queries return the zero activation, which routes the first
/// propagation through the gated sentence weights alone.
pub fn activate_entities(query: &QueryContext, graph: &HierGraph) -> Result<Vec<f64>> {
    let mut activation = vec![0.0; graph.entities().len()];
    if query.entities.is_empty() {
        return Ok(activation);
    }
    if graph.entities().is_empty() {
        return Err(Error::EmptyGraph);
    }
    for emb in &query.entity_embeddings {
        let mut best: Option<(usize, f64)> = None;
        for (idx, node) in graph.entities().iter().enumerate() {
            let sim = vecmath::cosine_or_zero(emb, &node.embedding);
            let better = match best {
                None => true,
                Some((_, s)) => sim > s,
            };
            if better {
                best = Some((idx, sim));
            }
        }
        if let Some((idx, sim)) = best {
            let score = sim.max(0.0);
            if score > activation[idx] {
                activation[idx] = score;
            }
        }
    }
    Ok(activation)
}

/// One propagation step: gate, spread activation, L1-normalize.
///
/// Candidates are the sentences with positive propagated mass `u`; for
/// entity-free queries with an all-zero activation, every sentence is a
/// candidate weighted by its gate alone. When the raw masses sum to zero the
/// all-zero vector comes back and the caller terminates the loop.
pub fn propagate_iteration(
    graph: &HierGraph,
    store: &MemoryStore,
    query: &QueryContext,
    activation: &[f64],
    sem_floor: f64,
) -> Result<Vec<f64>> {
    let u = ops::ent_to_sent(graph, activation)?;
    let entity_free_path =
        query.entities.is_empty() && activation.iter().all(|a| *a == 0.0);
    let mut raw = vec![0.0; graph.sentences().len()];
    for (i, sentence) in graph.sentences().iter().enumerate() {
        if !entity_free_path && u[i] <= 0.0 {
            continue;
        }
        let mem = store
            .get(i as u32)
            .ok_or(Error::StaleGraphBinding {
                store: store.len(),
                graph: graph.sentences().len(),
            })?;
        let gates = sentence_gate(mem, &sentence.embedding, query, sem_floor);
        raw[i] = if entity_free_path {
            gates.weight
        } else {
            gates.weight * u[i]
        };
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        for x in &mut raw {
            *x /= total;
        }
    } else {
        raw.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(raw)
}

/// Cumulative passage score: `alpha * sim(p, Q) + sum_t ln(1 + bonus_t[p]) / t`
/// (natural log), ranked descending with ties broken by ascending passage id.
pub fn score_passages(
    graph: &HierGraph,
    passage_sims: &[f64],
    bonus_history: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<(PassageId, f64)>> {
    let n = graph.passages().len();
    if passage_sims.len() != n {
        return Err(Error::DimensionMismatch {
            what: "passage similarity prior",
            expected: n,
            actual: passage_sims.len(),
        });
    }
    for bonus in bonus_history {
        if bonus.len() != n {
            return Err(Error::DimensionMismatch {
                what: "passage bonus tier",
                expected: n,
                actual: bonus.len(),
            });
        }
    }
    let mut scored: Vec<(PassageId, f64)> = (0..n)
        .map(|p| {
            let tiers: f64 = bonus_history
                .iter()
                .enumerate()
                .map(|(t, bonus)| (1.0 + bonus[p]).ln() / (t as f64 + 1.0))
                .sum();
            (p as PassageId, alpha * passage_sims[p] + tiers)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// Next-round activation: averaged sentence-to-entity propagation truncated
/// to the top `k_entities` entries (ties broken by ascending entity id).
pub fn reactivate(graph: &HierGraph, weights: &[f64], k_entities: usize) -> Result<Vec<f64>> {
    let full = ops::sent_to_ent_avg(graph, weights)?;
    let mut order: Vec<EntityId> = (0..full.len() as u32).collect();
    order.sort_by(|a, b| {
        full[*b as usize]
            .total_cmp(&full[*a as usize])
            .then(a.cmp(b))
    });
    let mut out = vec![0.0; full.len()];
    for id in order.into_iter().take(k_entities) {
        if full[id as usize] > 0.0 {
            out[id as usize] = full[id as usize];
        }
    }
    Ok(out)
}

/// Top-k sentence ids by score, positive scores only, ties by ascending id.
fn select_top_sentences(scores: &[f64], k: usize) -> Vec<SentenceId> {
    let mut ids: Vec<SentenceId> = (0..scores.len() as u32)
        .filter(|i| scores[*i as usize] > 0.0)
        .collect();
    ids.sort_by(|a, b| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    });
    ids.truncate(k);
    ids
}

fn sparse_pairs(dense: &[f64]) -> Vec<(u32, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i as u32, *v))
        .collect()
}

/// Sufficiency outcome recorded per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyVerdict {
    Sufficient,
    Insufficient,
    /// Nothing was selected, so the judge was not consulted.
    Skipped,
}

/// Trace of one retrieval iteration. Activations, scores, and bonuses are
/// stored as sparse `(id, value)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    /// 1-based iteration index.
    pub t: usize,
    /// Entity activation driving this iteration.
    pub activation: Vec<(EntityId, f64)>,
    /// Normalized gated sentence scores over the candidates.
    pub sentence_scores: Vec<(SentenceId, f64)>,
    /// Selected top sentences, rank order.
    pub selected: Vec<SentenceId>,
    /// This iteration's tier bonus per passage.
    pub bonus: Vec<(PassageId, f64)>,
    /// Cumulative passage ranking after this iteration (top k_passages).
    pub ranking: Vec<RankedPassage>,
    pub sufficiency: SufficiencyVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedPassage {
    pub index: PassageId,
    pub passage_id: String,
    pub score: f64,
}

/// Complete trace of one query's retrieval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalEpisode {
    pub query_id: String,
    pub question: String,
    pub iterations: Vec<IterationTrace>,
    pub iteration_count: usize,
    /// Final cumulative ranking, top k_passages.
    pub final_ranking: Vec<RankedPassage>,
    /// Union of all sentences shown to the sufficiency judge, deduplicated,
    /// ascending. This is the candidate set for feedback labeling.
    pub judged_candidates: Vec<SentenceId>,
    pub wall_ms: f64,
    pub adapter_ms: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl RetrievalEpisode {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn ranked(graph: &HierGraph, scored: &[(PassageId, f64)], k: usize) -> Vec<RankedPassage> {
    scored
        .iter()
        .take(k)
        .map(|(idx, score)| RankedPassage {
            index: *idx,
            passage_id: graph.passages()[*idx as usize].id.clone(),
            score: *score,
        })
        .collect()
}

/// Runs the full retrieval loop for one query.
pub fn retrieve(
    graph: &HierGraph,
    store: &MemoryStore,
    query: &QueryContext,
    config: &RetrievalConfig,
    registry: &AdapterRegistry,
) -> Result<RetrievalEpisode> {
    config.validate()?;
    store.check_binding(graph)?;
    let clock = registry.clock.clone();
    let t_start = clock.now_ms();
    let meter_start = registry.meter_reading();

    let passage_sims: Vec<f64> = graph
        .passages()
        .iter()
        .map(|p| vecmath::cosine_or_zero(&p.embedding, &query.embedding))
        .collect();

    let mut activation = activate_entities(query, graph)?;
    let mut bonus_history: Vec<Vec<f64>> = Vec::new();
    let mut iterations: Vec<IterationTrace> = Vec::new();
    let mut judged: Vec<SentenceId> = Vec::new();
    let mut final_scored: Vec<(PassageId, f64)> = Vec::new();

    for t in 1..=config.max_iterations {
        let scores = propagate_iteration(graph, store, query, &activation, config.sem_floor)?;
        let selected = select_top_sentences(&scores, config.k_sentences);

        let mut weights = vec![0.0; graph.sentences().len()];
        for id in &selected {
            weights[*id as usize] = scores[*id as usize];
        }
        let bonus = ops::sent_to_pass(graph, &weights)?;
        bonus_history.push(bonus.clone());
        final_scored = score_passages(graph, &passage_sims, &bonus_history, config.alpha)?;

        let verdict = if selected.is_empty() {
            SufficiencyVerdict::Skipped
        } else {
            let presented: Vec<PresentedSentence> = selected
                .iter()
                .map(|id| PresentedSentence {
                    id: *id,
                    text: graph.sentences()[*id as usize].text.clone(),
                })
                .collect();
            for id in &selected {
                if !judged.contains(id) {
                    judged.push(*id);
                }
            }
            if registry.judge_sufficiency(&query.text, &presented)? {
                SufficiencyVerdict::Sufficient
            } else {
                SufficiencyVerdict::Insufficient
            }
        };

        iterations.push(IterationTrace {
            t,
            activation: sparse_pairs(&activation),
            sentence_scores: sparse_pairs(&scores),
            selected: selected.clone(),
            bonus: sparse_pairs(&bonus),
            ranking: ranked(graph, &final_scored, config.k_passages),
            sufficiency: verdict,
        });

        if verdict != SufficiencyVerdict::Insufficient || t == config.max_iterations {
            break;
        }
        activation = reactivate(graph, &weights, config.k_entities)?;
    }

    judged.sort_unstable();
    let meter_end = registry.meter_reading();
    let used = meter_end.delta_since(&meter_start);
    let wall_ms = clock.now_ms() - t_start;
    let adapter_ms = used.adapter_us as f64 / 1e3;
    Ok(RetrievalEpisode {
        query_id: query.id.clone(),
        question: query.text.clone(),
        iteration_count: iterations.len(),
        final_ranking: ranked(graph, &final_scored, config.k_passages),
        iterations,
        judged_candidates: judged,
        wall_ms: wall_ms - adapter_ms,
        adapter_ms,
        tokens_in: used.tokens_in,
        tokens_out: used.tokens_out,
    })
}
