//! Per-sentence memory states and the gain-adaptive update rule.
//!
//! Each sentence carries a task memory vector, a time memory vector, and one
//! perplexity scalar per channel. Feedback episodes update a channel in four
//! steps:
//!
//!   residual    e  = y - cos(q, m)
//!   gain        K  = pi / (pi + R)
//!   state       m' = m + K * e * q
//!   perplexity  pi' = clip_[0,1]((1 - K) * pi + Q)
//!
//! The gain acts as an adaptive learning rate: uncertain memories (pi near 1)
//! move fast, stabilized memories (pi near 0) barely move. Observation noise R
//! is asymmetric — non-supportive labels carry a larger R than supportive ones,
//! so repulsion is deliberately slower than attraction. Process noise Q keeps
//! pi from collapsing to zero.
//!
//! A `MemoryStore` is single-writer: one feedback episode applies atomically,
//! and no two episodes may interleave their updates on the same store.

pub mod snapshot;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterRegistry, NO_TIME_SENTINEL};
use crate::error::{Error, Result};
use crate::graph::{HierGraph, Sentence, SentenceId};
use crate::vecmath;

/// Per-sentence memory state, both channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMemory {
    pub m_task: Vec<f32>,
    pub m_time: Vec<f32>,
    pub pi_task: f64,
    pub pi_time: f64,
    pub update_count_task: u32,
    pub update_count_time: u32,
}

/// Update-rule parameters. Defaults follow the engine's standard operating
/// point: R_pos = 0.5, R_neg = 1.0, Q = 0.01 per channel, targets y in {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub r_pos: f64,
    pub r_neg: f64,
    pub q_task: f64,
    pub q_time: f64,
    pub y_pos: f64,
    pub y_neg: f64,
    pub renormalize_state: bool,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            r_pos: 0.5,
            r_neg: 1.0,
            q_task: 0.01,
            q_time: 0.01,
            y_pos: 1.0,
            y_neg: 0.0,
            renormalize_state: false,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_pos > 0.0 && self.r_neg > 0.0) {
            return Err(Error::InvalidConfig("observation noise must be > 0".into()));
        }
        if self.r_neg < self.r_pos {
            return Err(Error::InvalidConfig(
                "r_neg must be >= r_pos (negative updates are the conservative ones)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.q_task) || !(0.0..1.0).contains(&self.q_time) {
            return Err(Error::InvalidConfig("process noise must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Task,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportLabel {
    Supportive,
    NonSupportive,
}

/// Audit record of one channel update within a feedback episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub sentence_id: SentenceId,
    pub channel: Channel,
    pub y: f64,
    pub residual: f64,
    pub gain: f64,
    pub pi_before: f64,
    pub pi_after: f64,
    pub applied_at_revision: u64,
}

/// The query directions a feedback episode updates along.
#[derive(Debug, Clone, Copy)]
pub struct QuerySignal<'a> {
    pub task: &'a [f32],
    /// `None` marks a query without temporal constraint; the time channel is
    /// then disabled (gain forced to zero, perplexity untouched).
    pub time: Option<&'a [f32]>,
}

/// Residual between the judged target and the projected prediction:
/// `y - cos(q, m)`. Cosine uses the memory's current norm.
pub fn residual(y: f64, q: &[f32], m: &[f32]) -> Result<f64> {
    if vecmath::l2_norm(m) == 0.0 {
        return Err(Error::ZeroVector("residual of zero-norm memory"));
    }
    Ok(y - vecmath::cosine(q, m)?)
}

/// Adaptive gain `K = pi / (pi + r)`, monotone in pi and anti-monotone in r.
pub fn kalman_gain(pi: f64, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    pi / (pi + r)
}

/// State correction along the query direction: `m' = m + K e q`.
///
/// With `renormalize` off (the default), components of `m` orthogonal to `q`
/// are untouched; switching it on rescales the result to unit norm.
pub fn update_state(m: &[f64], gain: f64, residual: f64, q: &[f64], renormalize: bool) -> Vec<f64> {
    debug_assert_eq!(m.len(), q.len());
    let step = gain * residual;
    let mut out: Vec<f64> = m.iter().zip(q.iter()).map(|(mi, qi)| mi + step * qi).collect();
    if renormalize {
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut out {
                *x /= norm;
            }
        }
    }
    out
}

/// Perplexity update with process noise: `clip_[0,1]((1 - K) pi + q_noise)`.
pub fn update_perplexity(pi: f64, gain: f64, q_noise: f64) -> f64 {
    ((1.0 - gain) * pi + q_noise).clamp(0.0, 1.0)
}

/// All sentence memories bound to one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    entries: Vec<SentenceMemory>,
    config: UpdateConfig,
    revision: u64,
    graph_hash: [u8; 32],
    dim: usize,
}

impl MemoryStore {
    /// Initializes neutral memories for every sentence of `graph`: the task
    /// memory starts as the sentence embedding, the time memory as the
    /// embedding of the extracted time expression (or of the literal
    /// `[NO_TIME]` sentinel), and both perplexities at 1.
    pub fn init(
        graph: &HierGraph,
        registry: &AdapterRegistry,
        config: UpdateConfig,
    ) -> Result<Self> {
        config.validate()?;
        let entries = graph
            .sentences()
            .iter()
            .map(|s| init_memory(s, registry))
            .collect::<Result<Vec<_>>>()?;
        Ok(MemoryStore {
            entries,
            config,
            revision: 0,
            graph_hash: graph.content_hash(),
            dim: graph.embedding_dim(),
        })
    }

    pub(crate) fn from_raw_parts(
        entries: Vec<SentenceMemory>,
        config: UpdateConfig,
        revision: u64,
        graph_hash: [u8; 32],
        dim: usize,
    ) -> Self {
        MemoryStore {
            entries,
            config,
            revision,
            graph_hash,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: SentenceId) -> Option<&SentenceMemory> {
        self.entries.get(id as usize)
    }

    pub fn entries(&self) -> &[SentenceMemory] {
        &self.entries
    }

    pub fn config(&self) -> &UpdateConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: UpdateConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Monotone episode counter; bumps once per applied feedback episode.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn graph_hash(&self) -> [u8; 32] {
        self.graph_hash
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_binding(&self, graph: &HierGraph) -> Result<()> {
        if self.entries.len() != graph.sentences().len() || self.graph_hash != graph.content_hash()
        {
            return Err(Error::StaleGraphBinding {
                store: self.entries.len(),
                graph: graph.sentences().len(),
            });
        }
        Ok(())
    }

    /// Applies one judged feedback episode.
    ///
    /// Each labeled sentence gets a task-channel update with
    /// `(y_pos, r_pos)` when supportive or `(y_neg, r_neg)` otherwise, and an
    /// identical time-channel update against the query's time direction —
    /// unless the query carries no time constraint, in which case the time
    /// gain is forced to zero and the time perplexity left untouched. The
    /// store revision advances exactly once, even for an empty label map.
    /// Records come back in sentence-id order, task before time.
    pub fn apply_feedback(
        &mut self,
        graph: &HierGraph,
        query: QuerySignal<'_>,
        labels: &BTreeMap<SentenceId, SupportLabel>,
    ) -> Result<Vec<FeedbackRecord>> {
        self.check_binding(graph)?;
        for id in labels.keys() {
            if *id as usize >= self.entries.len() {
                return Err(Error::UnknownSentenceId(*id));
            }
        }
        let revision = self.revision + 1;
        let cfg = self.config.clone();
        let mut records = Vec::with_capacity(labels.len() * 2);
        for (id, label) in labels {
            let (y, r) = match label {
                SupportLabel::Supportive => (cfg.y_pos, cfg.r_pos),
                SupportLabel::NonSupportive => (cfg.y_neg, cfg.r_neg),
            };
            let entry = &mut self.entries[*id as usize];

            let e = residual(y, query.task, &entry.m_task)?;
            let k = kalman_gain(entry.pi_task, r);
            let pi_before = entry.pi_task;
            apply_channel(&mut entry.m_task, k, e, query.task, cfg.renormalize_state);
            entry.pi_task = update_perplexity(pi_before, k, cfg.q_task);
            entry.update_count_task += 1;
            records.push(FeedbackRecord {
                sentence_id: *id,
                channel: Channel::Task,
                y,
                residual: e,
                gain: k,
                pi_before,
                pi_after: entry.pi_task,
                applied_at_revision: revision,
            });

            let record = match query.time {
                Some(q_time) => {
                    let e = residual(y, q_time, &entry.m_time)?;
                    let k = kalman_gain(entry.pi_time, r);
                    let pi_before = entry.pi_time;
                    apply_channel(&mut entry.m_time, k, e, q_time, cfg.renormalize_state);
                    entry.pi_time = update_perplexity(pi_before, k, cfg.q_time);
                    entry.update_count_time += 1;
                    FeedbackRecord {
                        sentence_id: *id,
                        channel: Channel::Time,
                        y,
                        residual: e,
                        gain: k,
                        pi_before,
                        pi_after: entry.pi_time,
                        applied_at_revision: revision,
                    }
                }
                // Untimed query: the time channel is disabled for this episode.
                None => FeedbackRecord {
                    sentence_id: *id,
                    channel: Channel::Time,
                    y,
                    residual: 0.0,
                    gain: 0.0,
                    pi_before: entry.pi_time,
                    pi_after: entry.pi_time,
                    applied_at_revision: revision,
                },
            };
            records.push(record);
        }
        self.revision = revision;
        Ok(records)
    }
}

/// Builds the initial memory for one sentence.
pub fn init_memory(sentence: &Sentence, registry: &AdapterRegistry) -> Result<SentenceMemory> {
    let time_text = sentence.time_expr.as_deref().unwrap_or(NO_TIME_SENTINEL);
    Ok(SentenceMemory {
        m_task: sentence.embedding.clone(),
        m_time: registry.embed(time_text)?,
        pi_task: 1.0,
        pi_time: 1.0,
        update_count_task: 0,
        update_count_time: 0,
    })
}

/// Runs the f64 state update and stores the result back into f32 memory.
fn apply_channel(m: &mut [f32], gain: f64, residual: f64, q: &[f32], renormalize: bool) {
    let m64: Vec<f64> = m.iter().map(|x| *x as f64).collect();
    let q64: Vec<f64> = q.iter().map(|x| *x as f64).collect();
    let updated = update_state(&m64, gain, residual, &q64, renormalize);
    for (dst, src) in m.iter_mut().zip(updated) {
        *dst = src as f32;
    }
}
