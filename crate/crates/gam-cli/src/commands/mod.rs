pub mod eval;
pub mod feedback;
pub mod index;
pub mod inspect;
pub mod query;
pub mod simulate;

use std::path::Path;

use anyhow::{Context, Result};
use gam_core::graph::{snapshot as graph_snapshot, HierGraph};
use gam_core::memory::{snapshot as mem_snapshot, MemoryStore, UpdateConfig};
use gam_core::retrieval::RetrievalEpisode;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Episode trace on disk, wrapped with the resolved config hash.
#[derive(Serialize, Deserialize)]
pub struct EpisodeFile {
    pub config_hash: String,
    pub episode: RetrievalEpisode,
}

pub fn load_graph(path: &Path) -> Result<HierGraph> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading graph snapshot {}", path.display()))?;
    Ok(graph_snapshot::from_bytes(&bytes)?)
}

/// Loads the memory snapshot when the path exists, otherwise initializes
/// neutral memories. The run config's update section always applies.
pub fn load_or_init_memory(
    config: &RunConfig,
    graph: &HierGraph,
    registry: &gam_core::adapters::AdapterRegistry,
    path: Option<&Path>,
) -> Result<MemoryStore> {
    let update: UpdateConfig = config.update.clone();
    match path {
        Some(p) if p.exists() => {
            let bytes = std::fs::read(p)
                .with_context(|| format!("reading memory snapshot {}", p.display()))?;
            let mut store = mem_snapshot::from_bytes(&bytes, graph)?;
            store.set_config(update)?;
            Ok(store)
        }
        _ => Ok(MemoryStore::init(graph, registry, update)?),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
