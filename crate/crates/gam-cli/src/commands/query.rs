use std::path::Path;

use anyhow::Result;
use gam_core::retrieval::{retrieve, QueryContext, RetrievalConfig};
use gam_core::vecmath::to_hex;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

use super::{load_graph, load_or_init_memory, write_file, EpisodeFile};

pub fn run(
    config: &RunConfig,
    question: &str,
    graph_flag: Option<&Path>,
    memory_flag: Option<&Path>,
    k_passages: Option<usize>,
    episode_out: Option<&Path>,
) -> Result<()> {
    let graph = load_graph(&config.graph_path(graph_flag)?)?;
    let registry = config.registry(None)?;
    let store = load_or_init_memory(config, &graph, &registry, config.memory_path(memory_flag).as_deref())?;

    let mut retrieval: RetrievalConfig = config.retrieval.clone();
    if let Some(k) = k_passages {
        retrieval.k_passages = k;
    }
    // Stable query id derived from the question text.
    let digest = Sha256::digest(question.as_bytes());
    let query_id = format!("q-{}", &to_hex(&digest)[..12]);
    let query = QueryContext::from_question(&query_id, question, &registry)?;
    let episode = retrieve(&graph, &store, &query, &retrieval, &registry)?;

    for (rank, passage) in episode.final_ranking.iter().enumerate() {
        println!("{}. {} {:.6}", rank + 1, passage.passage_id, passage.score);
    }
    println!(
        "iterations={} judged_candidates={} tokens_in={} tokens_out={}",
        episode.iteration_count,
        episode.judged_candidates.len(),
        episode.tokens_in,
        episode.tokens_out
    );

    let out_path = episode_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.paths.out_dir.join(format!("episode-{query_id}.json")));
    let file = EpisodeFile {
        config_hash: config.hash(),
        episode,
    };
    write_file(&out_path, serde_json::to_string_pretty(&file)?.as_bytes())?;
    println!("episode written to {}", out_path.display());
    Ok(())
}
