use std::path::Path;

use anyhow::{bail, Context, Result};
use gam_core::eval::{
    make_scenarios, parse_dataset_jsonl, rewrite_dataset, run_memorization, EvalOptions, QaItem,
    TurnOutcome, TurnReport,
};
use serde::Serialize;

use crate::config::RunConfig;

use super::{load_graph, load_or_init_memory, write_file, EpisodeFile};

#[derive(Serialize)]
struct EvalReport<'a> {
    config_hash: String,
    scenario: &'a str,
    turns: Vec<TurnReport>,
}

pub fn run(
    config: &RunConfig,
    dataset_flag: Option<&Path>,
    graph_flag: Option<&Path>,
    turns_flag: Option<usize>,
    scenario: &str,
    out_dir_flag: Option<&Path>,
) -> Result<()> {
    let dataset_path = config.dataset_path(dataset_flag)?;
    let text = std::fs::read_to_string(&dataset_path)
        .with_context(|| format!("reading dataset {}", dataset_path.display()))?;
    let dataset = parse_dataset_jsonl(&text)?;
    let graph = load_graph(&config.graph_path(graph_flag)?)?;
    let turns = turns_flag.unwrap_or(1);
    let out_dir = out_dir_flag
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.paths.out_dir.clone());

    // Resolve exposure (memorized with feedback) and holdout (read-only
    // evaluation appended after the exposure turns).
    let (exposure, holdout): (Vec<QaItem>, Option<Vec<QaItem>>) = match scenario {
        "same" => (dataset.clone(), None),
        "similar" => {
            // Memorize on the originals, then evaluate paraphrases.
            let registry = config.registry(Some(&dataset))?;
            let rewritten = rewrite_dataset(&dataset, &registry)?;
            (dataset.clone(), Some(rewritten))
        }
        "different" => {
            let registry = config.registry(Some(&dataset))?;
            let scenarios = make_scenarios(&dataset, &registry, config.seed)?;
            (scenarios.different.exposure, Some(scenarios.different.eval))
        }
        other => bail!("unknown scenario {other:?} (expected same, similar, or different)"),
    };

    let registry = config.registry(Some(&exposure))?;
    let mut store = load_or_init_memory(
        config,
        &graph,
        &registry,
        config.paths.memory.as_deref(),
    )?;
    let mut outcomes = run_memorization(
        &exposure,
        &graph,
        &mut store,
        &config.retrieval,
        &registry,
        &EvalOptions {
            turns,
            feedback: true,
            start_turn: 0,
        },
    )?;

    // The `different` scenario evaluates the held-out half read-only after
    // the exposure turns.
    if let Some(holdout) = holdout {
        let holdout_registry = config.registry(Some(&holdout))?;
        let extra = run_memorization(
            &holdout,
            &graph,
            &mut store,
            &config.retrieval,
            &holdout_registry,
            &EvalOptions {
                turns: 1,
                feedback: false,
                start_turn: turns,
            },
        )?;
        outcomes.extend(extra);
    }

    write_outputs(config, scenario, &out_dir, &outcomes)?;
    for outcome in &outcomes {
        let r = &outcome.report;
        println!(
            "turn {} contain_acc={:.4} token_f1={:.4} mean_iterations={:.4} mean_latency_ms={:.3} failed={}",
            r.turn, r.contain_acc, r.token_f1, r.mean_iterations, r.mean_latency_ms, r.items_failed
        );
    }
    println!("reports written to {}", out_dir.display());
    Ok(())
}

fn write_outputs(
    config: &RunConfig,
    scenario: &str,
    out_dir: &Path,
    outcomes: &[TurnOutcome],
) -> Result<()> {
    let config_hash = config.hash();
    let report = EvalReport {
        config_hash: config_hash.clone(),
        scenario,
        turns: outcomes.iter().map(|o| o.report.clone()).collect(),
    };
    write_file(
        &out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;

    let mut csv = format!("# config_hash={config_hash}\n");
    csv.push_str(
        "turn,contain_acc,token_f1,mean_iterations,mean_latency_ms,mean_adapter_ms,adapter_tokens_in,adapter_tokens_out,items_failed\n",
    );
    for o in outcomes {
        let r = &o.report;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.turn,
            r.contain_acc,
            r.token_f1,
            r.mean_iterations,
            r.mean_latency_ms,
            r.mean_adapter_ms,
            r.adapter_tokens_in,
            r.adapter_tokens_out,
            r.items_failed
        ));
    }
    write_file(&out_dir.join("turns.csv"), csv.as_bytes())?;

    write_file(
        &out_dir.join("run_config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": config_hash,
            "config": config,
        }))?
        .as_bytes(),
    )?;

    for outcome in outcomes {
        write_file(
            &out_dir.join(format!("mem_turn_{}.gammem", outcome.report.turn)),
            &outcome.memory_snapshot,
        )?;
        for episode in &outcome.episodes {
            let file = EpisodeFile {
                config_hash: config_hash.clone(),
                episode: episode.clone(),
            };
            write_file(
                &out_dir.join(format!("episodes/{}.json", episode.query_id)),
                serde_json::to_string_pretty(&file)?.as_bytes(),
            )?;
        }
    }
    Ok(())
}
