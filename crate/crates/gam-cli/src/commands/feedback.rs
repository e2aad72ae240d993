use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use gam_core::memory::{snapshot as mem_snapshot, Channel, SupportLabel};
use gam_core::retrieval::QueryContext;
use serde::Deserialize;

use crate::config::{RunConfig, SnapshotLock};
use crate::label_mismatch;

use super::{load_graph, load_or_init_memory, write_file, EpisodeFile};

#[derive(Deserialize)]
struct LabelsFile {
    query_id: String,
    /// Sentence id (as a JSON string key) to "supportive" / "nonsupportive".
    labels: BTreeMap<String, String>,
}

pub fn run(
    config: &RunConfig,
    episode_path: &Path,
    labels_path: &Path,
    graph_flag: Option<&Path>,
    memory_flag: Option<&Path>,
) -> Result<()> {
    let graph = load_graph(&config.graph_path(graph_flag)?)?;
    let registry = config.registry(None)?;
    let memory_path = config
        .memory_path(memory_flag)
        .context("no memory path given (config [paths] or --memory)")?;

    let episode_text = std::fs::read_to_string(episode_path)
        .with_context(|| format!("reading episode {}", episode_path.display()))?;
    let episode_file: EpisodeFile = serde_json::from_str(&episode_text)?;
    let episode = episode_file.episode;

    let labels_text = std::fs::read_to_string(labels_path)
        .with_context(|| format!("reading labels {}", labels_path.display()))?;
    let labels_file: LabelsFile = serde_json::from_str(&labels_text)?;

    if labels_file.query_id != episode.query_id {
        return Err(label_mismatch(format!(
            "labels are for query {:?} but the episode is {:?}",
            labels_file.query_id, episode.query_id
        )));
    }
    let mut labels: BTreeMap<u32, SupportLabel> = BTreeMap::new();
    for (sid_text, verdict) in &labels_file.labels {
        let sid: u32 = sid_text
            .parse()
            .map_err(|_| label_mismatch(format!("invalid sentence id {sid_text:?}")))?;
        if !episode.judged_candidates.contains(&sid) {
            return Err(label_mismatch(format!(
                "sentence {sid} was not among the episode's judged candidates"
            )));
        }
        let label = match verdict.as_str() {
            "supportive" => SupportLabel::Supportive,
            "nonsupportive" => SupportLabel::NonSupportive,
            other => return Err(label_mismatch(format!("invalid label {other:?}"))),
        };
        labels.insert(sid, label);
    }

    let _lock = SnapshotLock::acquire(&memory_path)?;
    let mut store = load_or_init_memory(config, &graph, &registry, Some(&memory_path))?;
    // The episode stores the question; rebuilding the query context through
    // the same adapters reproduces the embeddings it retrieved with.
    let query = QueryContext::from_question(&episode.query_id, &episode.question, &registry)?;
    let records = store.apply_feedback(&graph, query.signal(), &labels)?;

    for r in &records {
        let channel = match r.channel {
            Channel::Task => "task",
            Channel::Time => "time",
        };
        println!(
            "sid={} channel={} y={} gain={:.6} residual={:.6} pi {:.6} -> {:.6}",
            r.sentence_id, channel, r.y, r.gain, r.residual, r.pi_before, r.pi_after
        );
    }
    write_file(&memory_path, &mem_snapshot::to_bytes(&store))?;
    println!(
        "memory written to {} (revision {})",
        memory_path.display(),
        store.revision()
    );
    Ok(())
}
