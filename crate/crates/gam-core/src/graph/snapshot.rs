//! Graph snapshot format `gamgraph/1`.
//!
//! A self-describing binary layout: magic header, build provenance, node
//! tables, then both sparse matrices. Serialization is deterministic and
//! round-trips bit-exactly; the SHA-256 of the snapshot bytes identifies the
//! graph and is embedded in memory snapshots.

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::wire::{Reader, Writer};

use super::{BuildMeta, EntityNode, HierGraph, IncidenceMatrix, Passage, Sentence};

pub const MAGIC: &str = "gamgraph/1\n";

pub fn hash_bytes(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn to_bytes(graph: &HierGraph) -> Vec<u8> {
    let mut w = Writer::new();
    w.magic(MAGIC);
    let meta = graph.build_meta();
    w.str(&meta.segmenter);
    w.str(&meta.ner);
    w.str(&meta.embedder);
    w.str(&meta.time_extractor);
    w.u32(graph.embedding_dim() as u32);
    w.u32(graph.entities().len() as u32);
    w.u32(graph.sentences().len() as u32);
    w.u32(graph.passages().len() as u32);
    for e in graph.entities() {
        w.str(&e.canonical_surface);
        w.f32_slice(&e.embedding);
        w.u32_slice(&e.sentence_ids);
    }
    for s in graph.sentences() {
        w.u32(s.passage_id);
        w.str(&s.text);
        w.u64(s.char_span.0 as u64);
        w.u64(s.char_span.1 as u64);
        w.f32_slice(&s.embedding);
        w.opt_str(s.time_expr.as_deref());
    }
    for p in graph.passages() {
        w.str(&p.id);
        w.opt_str(p.title.as_deref());
        w.str(&p.text);
        w.f32_slice(&p.embedding);
    }
    write_matrix(&mut w, graph.m_es());
    write_matrix(&mut w, graph.m_sp());
    w.finish()
}

fn write_matrix(w: &mut Writer, m: &IncidenceMatrix) {
    let (row_ptr, col_idx) = m.raw_parts();
    w.u32_slice(row_ptr);
    w.u32_slice(col_idx);
}

pub fn from_bytes(bytes: &[u8]) -> Result<HierGraph> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let build_meta = BuildMeta {
        segmenter: r.str()?,
        ner: r.str()?,
        embedder: r.str()?,
        time_extractor: r.str()?,
    };
    let dim = r.u32()? as usize;
    let n_entities = r.u32()? as usize;
    let n_sentences = r.u32()? as usize;
    let n_passages = r.u32()? as usize;

    let mut entities = Vec::with_capacity(n_entities);
    for id in 0..n_entities {
        entities.push(EntityNode {
            id: id as u32,
            canonical_surface: r.str()?,
            embedding: r.f32_vec(dim)?,
            sentence_ids: r.u32_vec()?,
        });
    }
    let mut sentences = Vec::with_capacity(n_sentences);
    for id in 0..n_sentences {
        let passage_id = r.u32()?;
        let text = r.str()?;
        let start = r.u64()? as usize;
        let end = r.u64()? as usize;
        let embedding = r.f32_vec(dim)?;
        let time_expr = r.opt_str()?;
        sentences.push(Sentence {
            id: id as u32,
            passage_id,
            text,
            char_span: (start, end),
            embedding,
            time_expr,
        });
    }
    let mut passages = Vec::with_capacity(n_passages);
    for _ in 0..n_passages {
        passages.push(Passage {
            id: r.str()?,
            title: r.opt_str()?,
            text: r.str()?,
            embedding: r.f32_vec(dim)?,
        });
    }
    let m_es = read_matrix(&mut r, n_entities, n_sentences)?;
    let m_sp = read_matrix(&mut r, n_sentences, n_passages)?;
    r.expect_end()?;
    HierGraph::from_parts(entities, sentences, passages, m_es, m_sp, dim, build_meta)
}

fn read_matrix(r: &mut Reader<'_>, rows: usize, cols: usize) -> Result<IncidenceMatrix> {
    let row_ptr = r.u32_vec()?;
    let col_idx = r.u32_vec()?;
    IncidenceMatrix::from_raw_parts(rows, cols, row_ptr, col_idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::AdapterRegistry;
    use crate::error::Error;
    use crate::graph::{build_graph, RawPassage};

    fn sample() -> HierGraph {
        let reg = AdapterRegistry::doubles(0);
        let corpus = vec![
            RawPassage {
                id: "P1".into(),
                title: Some("First".into()),
                text: "Alice met Bob in 1999. It rained.".into(),
            },
            RawPassage {
                id: "P2".into(),
                title: None,
                text: "Bob left town.".into(),
            },
        ];
        build_graph(&corpus, &reg).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = sample();
        let bytes = to_bytes(&g);
        let g2 = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&g2), bytes);
        assert_eq!(g2.content_hash(), g.content_hash());
        assert_eq!(g2.sentences()[0].time_expr.as_deref(), Some("1999"));
    }

    #[test]
    fn wrong_magic_is_version_mismatch() {
        let err = from_bytes(b"gamgraph/9\nxxxx").unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { .. }));
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let g = sample();
        let bytes = to_bytes(&g);
        let err = from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Snapshot(_)));
    }
}
