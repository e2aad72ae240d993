//! Propagation primitives over the incidence matrices.

use crate::error::{Error, Result};

use super::HierGraph;

/// Entity-to-sentence propagation: `u = M_ES^T a`.
pub fn ent_to_sent(graph: &HierGraph, activation: &[f64]) -> Result<Vec<f64>> {
    if activation.len() != graph.entities().len() {
        return Err(Error::DimensionMismatch {
            what: "entity activation",
            expected: graph.entities().len(),
            actual: activation.len(),
        });
    }
    graph.m_es().transpose_mul(activation)
}

/// Sentence-to-passage accumulation: `bonus = M_SP^T w`.
pub fn sent_to_pass(graph: &HierGraph, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != graph.sentences().len() {
        return Err(Error::DimensionMismatch {
            what: "sentence weights",
            expected: graph.sentences().len(),
            actual: weights.len(),
        });
    }
    graph.m_sp().transpose_mul(weights)
}

/// Averaged sentence-to-entity reactivation: `(M_ES w) / (M_ES 1)`,
/// element-wise. The per-entity mean keeps hub entities that appear in many
/// generic sentences from dominating the next hop.
pub fn sent_to_ent_avg(graph: &HierGraph, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != graph.sentences().len() {
        return Err(Error::DimensionMismatch {
            what: "sentence weights",
            expected: graph.sentences().len(),
            actual: weights.len(),
        });
    }
    let sums = graph.m_es().mul(weights)?;
    let counts = graph.m_es().row_counts();
    Ok(sums
        .iter()
        .zip(counts.iter())
        .map(|(s, c)| {
            debug_assert!(*c >= 1, "entity without incident sentences");
            s / *c as f64
        })
        .collect())
}
