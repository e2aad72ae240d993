use std::path::Path;

use anyhow::{Context, Result};
use gam_core::graph::{build_graph, parse_corpus_jsonl, snapshot as graph_snapshot};
use gam_core::vecmath::to_hex;

use crate::config::RunConfig;

use super::write_file;

pub fn run(config: &RunConfig, corpus_flag: Option<&Path>, graph_flag: Option<&Path>) -> Result<()> {
    let corpus_path = config.corpus_path(corpus_flag)?;
    let graph_path = config.graph_path(graph_flag)?;
    let registry = config.registry(None)?;

    let text = std::fs::read_to_string(&corpus_path)
        .with_context(|| format!("reading corpus {}", corpus_path.display()))?;
    let corpus = parse_corpus_jsonl(&text)?;
    let graph = build_graph(&corpus, &registry)?;
    let bytes = graph_snapshot::to_bytes(&graph);
    write_file(&graph_path, &bytes)?;

    println!(
        "indexed passages={} sentences={} entities={} es_entries={} sp_entries={} dim={}",
        graph.passages().len(),
        graph.sentences().len(),
        graph.entities().len(),
        graph.m_es().nnz(),
        graph.m_sp().nnz(),
        graph.embedding_dim(),
    );
    println!(
        "graph written to {} (sha256 {})",
        graph_path.display(),
        to_hex(&graph.content_hash())
    );
    println!("config hash {}", config.hash());
    Ok(())
}
