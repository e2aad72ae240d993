use std::path::Path;

use anyhow::{Context, Result};
use gam_core::vecmath;

use crate::config::RunConfig;

use super::{load_graph, load_or_init_memory, write_file, EpisodeFile};

pub fn run(
    config: &RunConfig,
    graph_flag: Option<&Path>,
    memory_flag: Option<&Path>,
    out: Option<&Path>,
    episode: Option<&Path>,
) -> Result<()> {
    let graph = load_graph(&config.graph_path(graph_flag)?)?;
    let registry = config.registry(None)?;
    let store = load_or_init_memory(
        config,
        &graph,
        &registry,
        config.memory_path(memory_flag).as_deref(),
    )?;

    let mut csv = format!("# config_hash={}\n", config.hash());
    csv.push_str("id,pi_task,pi_time,m_task_norm,cos_task_emb\n");
    for (sentence, mem) in graph.sentences().iter().zip(store.entries()) {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            sentence.id,
            mem.pi_task,
            mem.pi_time,
            vecmath::l2_norm(&mem.m_task),
            vecmath::cosine_or_zero(&mem.m_task, &sentence.embedding),
        ));
    }
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.paths.out_dir.join("memory.csv"));
    write_file(&out_path, csv.as_bytes())?;
    println!(
        "memory state for {} sentences (revision {}) written to {}",
        store.len(),
        store.revision(),
        out_path.display()
    );

    if let Some(episode_path) = episode {
        let text = std::fs::read_to_string(episode_path)
            .with_context(|| format!("reading episode {}", episode_path.display()))?;
        let file: EpisodeFile = serde_json::from_str(&text)?;
        let ep = file.episode;
        println!("episode {} ({:?})", ep.query_id, ep.question);
        for it in &ep.iterations {
            println!(
                "  t={} activated_entities={} selected={:?} verdict={:?} top={:?}",
                it.t,
                it.activation.len(),
                it.selected,
                it.sufficiency,
                it.ranking.iter().map(|r| r.passage_id.as_str()).collect::<Vec<_>>(),
            );
        }
    }
    Ok(())
}
