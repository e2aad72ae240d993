//! Memory snapshot format `gammem/1`.
//!
//! Header: magic, the SHA-256 of the owning graph snapshot, update config,
//! revision, dimension, sentence count. Body: one record per sentence with
//! `f32` little-endian vectors and `f64` scalars in fixed field order
//! (m_task, m_time, pi_task, pi_time, update counts). Since memory state is
//! stored in exactly this precision, snapshot/restore is lossless and
//! byte-stable. Restoring against a different graph is refused.

use crate::error::{Error, Result};
use crate::graph::HierGraph;
use crate::wire::{Reader, Writer};

use super::{MemoryStore, SentenceMemory, UpdateConfig};

pub const MAGIC: &str = "gammem/1\n";

pub fn to_bytes(store: &MemoryStore) -> Vec<u8> {
    let mut w = Writer::new();
    w.magic(MAGIC);
    w.bytes(&store.graph_hash());
    let cfg = store.config();
    w.f64(cfg.r_pos);
    w.f64(cfg.r_neg);
    w.f64(cfg.q_task);
    w.f64(cfg.q_time);
    w.f64(cfg.y_pos);
    w.f64(cfg.y_neg);
    w.u8(cfg.renormalize_state as u8);
    w.u64(store.revision());
    w.u32(store.dim() as u32);
    w.u32(store.len() as u32);
    for mem in store.entries() {
        w.f32_slice(&mem.m_task);
        w.f32_slice(&mem.m_time);
        w.f64(mem.pi_task);
        w.f64(mem.pi_time);
        w.u32(mem.update_count_task);
        w.u32(mem.update_count_time);
    }
    w.finish()
}

/// Restores a snapshot, refusing bytes taken against a different graph.
pub fn from_bytes(bytes: &[u8], graph: &HierGraph) -> Result<MemoryStore> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let mut graph_hash = [0u8; 32];
    graph_hash.copy_from_slice(r.raw(32)?);
    if graph_hash != graph.content_hash() {
        return Err(Error::GraphHashMismatch);
    }
    let config = UpdateConfig {
        r_pos: r.f64()?,
        r_neg: r.f64()?,
        q_task: r.f64()?,
        q_time: r.f64()?,
        y_pos: r.f64()?,
        y_neg: r.f64()?,
        renormalize_state: r.u8()? != 0,
    };
    let revision = r.u64()?;
    let dim = r.u32()? as usize;
    let len = r.u32()? as usize;
    if dim != graph.embedding_dim() {
        return Err(Error::Snapshot(format!(
            "snapshot dimension {dim} does not match graph dimension {}",
            graph.embedding_dim()
        )));
    }
    if len != graph.sentences().len() {
        return Err(Error::Snapshot(format!(
            "snapshot holds {len} sentences, graph has {}",
            graph.sentences().len()
        )));
    }
    let mut entries = Vec::with_capacity(len);
    for _ in 0..len {
        entries.push(SentenceMemory {
            m_task: r.f32_vec(dim)?,
            m_time: r.f32_vec(dim)?,
            pi_task: r.f64()?,
            pi_time: r.f64()?,
            update_count_task: r.u32()?,
            update_count_time: r.u32()?,
        });
    }
    r.expect_end()?;
    Ok(MemoryStore::from_raw_parts(
        entries, config, revision, graph_hash, dim,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::AdapterRegistry;
    use crate::graph::{build_graph, RawPassage};
    use crate::memory::{QuerySignal, SupportLabel};
    use std::collections::BTreeMap;

    fn setup() -> (HierGraph, AdapterRegistry) {
        let reg = AdapterRegistry::doubles(0);
        let g = build_graph(
            &[RawPassage {
                id: "p".into(),
                title: None,
                text: "Avi met Bora. They spoke in 2003. Nothing else happened.".into(),
            }],
            &reg,
        )
        .unwrap();
        (g, reg)
    }

    #[test]
    fn fresh_store_round_trips_with_neutral_perplexities() {
        let (g, reg) = setup();
        let store = MemoryStore::init(&g, &reg, UpdateConfig::default()).unwrap();
        let bytes = to_bytes(&store);
        let restored = from_bytes(&bytes, &g).unwrap();
        assert_eq!(restored, store);
        assert!(restored
            .entries()
            .iter()
            .all(|m| m.pi_task == 1.0 && m.pi_time == 1.0));
    }

    #[test]
    fn round_trip_after_episodes_is_byte_identical() {
        let (g, reg) = setup();
        let mut store = MemoryStore::init(&g, &reg, UpdateConfig::default()).unwrap();
        let q = reg.embed("who met bora").unwrap();
        for i in 0..3u32 {
            let labels = BTreeMap::from([(
                i % 3,
                if i % 2 == 0 {
                    SupportLabel::Supportive
                } else {
                    SupportLabel::NonSupportive
                },
            )]);
            store
                .apply_feedback(&g, QuerySignal { task: &q, time: None }, &labels)
                .unwrap();
        }
        assert_eq!(store.revision(), 3);
        let bytes = to_bytes(&store);
        let restored = from_bytes(&bytes, &g).unwrap();
        assert_eq!(restored, store);
        assert_eq!(to_bytes(&restored), bytes);
    }

    #[test]
    fn restore_against_other_graph_is_refused() {
        let (g, reg) = setup();
        let store = MemoryStore::init(&g, &reg, UpdateConfig::default()).unwrap();
        let bytes = to_bytes(&store);
        let other = build_graph(
            &[RawPassage {
                id: "q".into(),
                title: None,
                text: "A different corpus entirely.".into(),
            }],
            &reg,
        )
        .unwrap();
        assert!(matches!(
            from_bytes(&bytes, &other),
            Err(Error::GraphHashMismatch)
        ));
    }

    #[test]
    fn bad_magic_is_version_mismatch() {
        let (g, _) = setup();
        assert!(matches!(
            from_bytes(b"gammem/0\nnope", &g),
            Err(Error::VersionMismatch { .. })
        ));
    }
}
