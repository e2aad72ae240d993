//! Hierarchical entity/sentence/passage index.
//!
//! A corpus is segmented into sentences, entity surfaces are extracted and
//! canonicalized, and two binary incidence matrices link the tiers:
//! `m_es` (entity occurrence in sentences) and `m_sp` (sentence containment in
//! passages, exactly one passage per sentence). The graph is immutable after
//! build and safe to share across any number of concurrent readers.

pub mod build;
pub mod ops;
pub mod snapshot;
pub mod sparse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath;

pub use build::{build_graph, extract_entities, segment_passage};
pub use sparse::IncidenceMatrix;

pub type EntityId = u32;
pub type SentenceId = u32;
pub type PassageId = u32;

/// A corpus passage as read from JSON-Lines input, before embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPassage {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passage {
    pub id: String,
    pub title: Option<String>,
    pub text: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: SentenceId,
    pub passage_id: PassageId,
    pub text: String,
    /// Byte offsets into the owning passage text.
    pub char_span: (usize, usize),
    pub embedding: Vec<f32>,
    /// Extracted time expression; `None` means no temporal constraint.
    pub time_expr: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityNode {
    pub id: EntityId,
    pub canonical_surface: String,
    pub embedding: Vec<f32>,
    /// Sorted, duplicate-free ids of the sentences containing this entity.
    pub sentence_ids: Vec<SentenceId>,
}

/// Provenance of a build: which adapters produced the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub segmenter: String,
    pub ner: String,
    pub embedder: String,
    pub time_extractor: String,
}

#[derive(Debug, Clone)]
pub struct HierGraph {
    entities: Vec<EntityNode>,
    sentences: Vec<Sentence>,
    passages: Vec<Passage>,
    m_es: IncidenceMatrix,
    m_sp: IncidenceMatrix,
    embedding_dim: usize,
    build_meta: BuildMeta,
    content_hash: [u8; 32],
}

impl HierGraph {
    /// Assembles a graph from parts, validating every structural invariant.
    pub fn from_parts(
        entities: Vec<EntityNode>,
        sentences: Vec<Sentence>,
        passages: Vec<Passage>,
        m_es: IncidenceMatrix,
        m_sp: IncidenceMatrix,
        embedding_dim: usize,
        build_meta: BuildMeta,
    ) -> Result<Self> {
        if m_es.rows() != entities.len() || m_es.cols() != sentences.len() {
            return Err(Error::InvalidGraph(format!(
                "m_es is {}x{}, expected {}x{}",
                m_es.rows(),
                m_es.cols(),
                entities.len(),
                sentences.len()
            )));
        }
        if m_sp.rows() != sentences.len() || m_sp.cols() != passages.len() {
            return Err(Error::InvalidGraph(format!(
                "m_sp is {}x{}, expected {}x{}",
                m_sp.rows(),
                m_sp.cols(),
                sentences.len(),
                passages.len()
            )));
        }
        if !sentences.is_empty() && !m_sp.is_row_partition() {
            return Err(Error::InvalidGraph(
                "every sentence must lie in exactly one passage".into(),
            ));
        }
        let mut surfaces = std::collections::BTreeSet::new();
        for (i, e) in entities.iter().enumerate() {
            if e.id as usize != i {
                return Err(Error::InvalidGraph("entity ids must be dense".into()));
            }
            if !surfaces.insert(e.canonical_surface.as_str()) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate canonical surface {:?}",
                    e.canonical_surface
                )));
            }
            if e.sentence_ids.is_empty() {
                return Err(Error::InvalidGraph(format!(
                    "entity {:?} has no incident sentences",
                    e.canonical_surface
                )));
            }
            if e.sentence_ids.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidGraph(
                    "entity sentence_ids must be sorted and duplicate-free".into(),
                ));
            }
            if e.sentence_ids != m_es.row(i) {
                return Err(Error::InvalidGraph(format!(
                    "entity {:?} sentence_ids disagree with m_es",
                    e.canonical_surface
                )));
            }
        }
        for (i, s) in sentences.iter().enumerate() {
            if s.id as usize != i {
                return Err(Error::InvalidGraph("sentence ids must be dense".into()));
            }
            let p = passages.get(s.passage_id as usize).ok_or_else(|| {
                Error::InvalidGraph(format!("sentence {i} references missing passage"))
            })?;
            if s.char_span.0 > s.char_span.1 || s.char_span.1 > p.text.len() {
                return Err(Error::InvalidGraph(format!(
                    "sentence {i} span {:?} outside passage bounds",
                    s.char_span
                )));
            }
            if m_sp.row(i) != [s.passage_id] {
                return Err(Error::InvalidGraph(format!(
                    "sentence {i} containment disagrees with m_sp"
                )));
            }
        }
        for (what, emb) in entities
            .iter()
            .map(|e| ("entity", &e.embedding))
            .chain(sentences.iter().map(|s| ("sentence", &s.embedding)))
            .chain(passages.iter().map(|p| ("passage", &p.embedding)))
        {
            if emb.len() != embedding_dim {
                return Err(Error::InvalidGraph(format!(
                    "{what} embedding has dimension {}, expected {embedding_dim}",
                    emb.len()
                )));
            }
            if !vecmath::is_unit(emb, 1e-6) {
                return Err(Error::InvalidGraph(format!(
                    "{what} embedding is not unit-norm"
                )));
            }
        }
        let mut graph = HierGraph {
            entities,
            sentences,
            passages,
            m_es,
            m_sp,
            embedding_dim,
            build_meta,
            content_hash: [0; 32],
        };
        graph.content_hash = snapshot::hash_bytes(&snapshot::to_bytes(&graph));
        Ok(graph)
    }

    pub fn entities(&self) -> &[EntityNode] {
        &self.entities
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn m_es(&self) -> &IncidenceMatrix {
        &self.m_es
    }

    pub fn m_sp(&self) -> &IncidenceMatrix {
        &self.m_sp
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn build_meta(&self) -> &BuildMeta {
        &self.build_meta
    }

    /// SHA-256 of the canonical snapshot bytes; memory snapshots bind to it.
    pub fn content_hash(&self) -> [u8; 32] {
        self.content_hash
    }

    pub fn entity_by_surface(&self, canonical: &str) -> Option<&EntityNode> {
        self.entities
            .iter()
            .find(|e| e.canonical_surface == canonical)
    }
}

/// Parses a JSON-Lines corpus: one `{"id", "title"?, "text"}` object per line.
pub fn parse_corpus_jsonl(input: &str) -> Result<Vec<RawPassage>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: RawPassage = serde_json::from_str(line)
            .map_err(|e| Error::Corpus(format!("line {}: {e}", lineno + 1)))?;
        if p.text.trim().is_empty() {
            return Err(Error::Corpus(format!(
                "line {}: passage {:?} has empty text",
                lineno + 1,
                p.id
            )));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Corpus("corpus contains no passages".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_parse_rejects_empty_text() {
        let err = parse_corpus_jsonl("{\"id\":\"p\",\"text\":\"  \"}\n").unwrap_err();
        assert!(matches!(err, Error::Corpus(_)));
        assert!(matches!(parse_corpus_jsonl(""), Err(Error::Corpus(_))));
    }

    #[test]
    fn corpus_parse_reads_optional_title() {
        let got = parse_corpus_jsonl(
            "{\"id\":\"a\",\"text\":\"x.\"}\n{\"id\":\"b\",\"title\":\"T\",\"text\":\"y.\"}\n",
        )
        .unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].title.as_deref(), Some("T"));
    }
}
