//! Corpus ingestion: segmentation, entity extraction, embedding, matrix
//! assembly. Build is single-threaded per corpus; the result is immutable.

use std::collections::HashMap;

use crate::adapters::AdapterRegistry;
use crate::error::{Error, Result};

use super::{
    BuildMeta, EntityNode, HierGraph, IncidenceMatrix, Passage, RawPassage, Sentence,
};

/// Splits passage text into sentences with byte spans, via the segmenter
/// adapter. Spans are validated to be ordered, non-overlapping slices of the
/// original text.
pub fn segment_passage(
    text: &str,
    registry: &AdapterRegistry,
) -> Result<Vec<(String, (usize, usize))>> {
    let spans = registry.segment(text)?;
    let mut last_end = 0usize;
    for (sent, (a, b)) in &spans {
        if *a < last_end || a > b || *b > text.len() {
            return Err(Error::Adapter(format!(
                "segmenter returned invalid span ({a}, {b})"
            )));
        }
        if &text[*a..*b] != sent {
            return Err(Error::Adapter(
                "segmenter span does not reconstruct sentence text".into(),
            ));
        }
        last_end = *b;
    }
    Ok(spans)
}

/// Canonicalized entity surfaces of one sentence, via the NER adapter.
pub fn extract_entities(sentence_text: &str, registry: &AdapterRegistry) -> Result<Vec<String>> {
    registry.extract_entities(sentence_text)
}

/// Builds the hierarchical graph for a corpus.
///
/// Entity nodes are merged by exact match on the canonical surface, one node
/// per distinct surface, ids in first-appearance order. `m_es[i][j] = 1` iff
/// entity i occurs among the NER surfaces of sentence j; `m_sp[i][j] = 1` iff
/// sentence i was segmented out of passage j.
pub fn build_graph(corpus: &[RawPassage], registry: &AdapterRegistry) -> Result<HierGraph> {
    if corpus.is_empty() {
        return Err(Error::Corpus("corpus contains no passages".into()));
    }
    let mut seen_ids: HashMap<&str, ()> = HashMap::new();
    for p in corpus {
        if seen_ids.insert(&p.id, ()).is_some() {
            return Err(Error::DuplicatePassageId(p.id.clone()));
        }
        if p.text.trim().is_empty() {
            return Err(Error::Corpus(format!("passage {:?} has empty text", p.id)));
        }
    }

    let dim = registry.dim();
    let mut passages = Vec::with_capacity(corpus.len());
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut entities: Vec<EntityNode> = Vec::new();
    let mut surface_to_entity: HashMap<String, u32> = HashMap::new();
    let mut es_pairs: Vec<(u32, u32)> = Vec::new();
    let mut sp_pairs: Vec<(u32, u32)> = Vec::new();

    for (p_idx, raw) in corpus.iter().enumerate() {
        let embed_text = match &raw.title {
            Some(t) if !t.trim().is_empty() => format!("{t}\n{}", raw.text),
            _ => raw.text.clone(),
        };
        passages.push(Passage {
            id: raw.id.clone(),
            title: raw.title.clone(),
            text: raw.text.clone(),
            embedding: registry.embed(&embed_text)?,
        });

        for (sent_text, span) in segment_passage(&raw.text, registry)? {
            let s_id = sentences.len() as u32;
            sp_pairs.push((s_id, p_idx as u32));
            for surface in extract_entities(&sent_text, registry)? {
                let e_id = match surface_to_entity.get(&surface) {
                    Some(id) => *id,
                    None => {
                        let id = entities.len() as u32;
                        entities.push(EntityNode {
                            id,
                            canonical_surface: surface.clone(),
                            embedding: registry.embed(&surface)?,
                            sentence_ids: Vec::new(),
                        });
                        surface_to_entity.insert(surface, id);
                        id
                    }
                };
                es_pairs.push((e_id, s_id));
                entities[e_id as usize].sentence_ids.push(s_id);
            }
            sentences.push(Sentence {
                id: s_id,
                passage_id: p_idx as u32,
                time_expr: registry.extract_time(&sent_text)?,
                embedding: registry.embed(&sent_text)?,
                text: sent_text,
                char_span: span,
            });
        }
    }

    let m_es = IncidenceMatrix::from_pairs(entities.len(), sentences.len(), &es_pairs)?;
    let m_sp = IncidenceMatrix::from_pairs(sentences.len(), passages.len(), &sp_pairs)?;
    let build_meta = BuildMeta {
        segmenter: registry.segmenter.id().to_string(),
        ner: registry.ner.id().to_string(),
        embedder: registry.embedder.id().to_string(),
        time_extractor: registry.time_extractor.id().to_string(),
    };
    HierGraph::from_parts(entities, sentences, passages, m_es, m_sp, dim, build_meta)
}
