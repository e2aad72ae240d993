//! End-to-end tests of the `gam` binary: golden outputs, exit codes, and
//! determinism under the offline doubles.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gam_core::eval::synthetic::{two_hop_benchmark, TwoHopSpec};

fn gam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gam"))
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const CONFIG: &str = r#"
seed = 0

[paths]
corpus = "corpus.jsonl"
graph = "graph.gamgraph"
memory = "memory.gammem"
dataset = "dataset.jsonl"
out_dir = "out"
"#;

const CORPUS: &str = r#"{"id": "P0", "text": "notes say Aldorin studied beside Borvek in the archive."}
{"id": "P1", "text": "later Borvek moved there after the flood. unrelated ledger rows fill margins."}
{"id": "P2", "text": "people asked where Aldorin would go after the flood."}
{"id": "P3", "text": "rumors placed the traveler near the harbor that spring."}
"#;

const QUESTION: &str = "where did the friend of Aldorin go after the flood?";

struct Workspace {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        write(&dir, "run.toml", CONFIG);
        write(&dir, "corpus.jsonl", CORPUS);
        Workspace { _tmp: tmp, dir }
    }

    fn run(&self, args: &[&str]) -> Output {
        gam()
            .current_dir(&self.dir)
            .args(["--config", "run.toml"])
            .args(args)
            .output()
            .unwrap()
    }
}

#[test]
fn index_prints_hand_counted_totals_and_is_deterministic() {
    let ws = Workspace::new();
    let out = ws.run(&["index"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    // 4 passages; P1 splits into two sentences; entities aldorin and borvek;
    // aldorin in s0 and s3, borvek in s0 and s1.
    assert!(text.contains("indexed passages=4 sentences=5 entities=2 es_entries=4 sp_entries=5"));

    let first = std::fs::read(ws.dir.join("graph.gamgraph")).unwrap();
    let rerun = ws.run(&["index"]);
    assert!(rerun.status.success());
    let second = std::fs::read(ws.dir.join("graph.gamgraph")).unwrap();
    assert_eq!(first, second, "re-indexing identical input must be bit-identical");
}

#[test]
fn index_empty_corpus_is_an_input_error() {
    let ws = Workspace::new();
    write(&ws.dir, "empty.jsonl", "");
    let out = ws.run(&["index", "--corpus", "empty.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn query_prints_ranked_passages_and_writes_episode() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    let out = ws.run(&["query", QUESTION]);
    assert!(out.status.success());
    let text = stdout(&out);
    // The distractor passage dominates a cold query on this fixture.
    assert!(text.starts_with("1. P2 "), "unexpected ranking head: {text}");
    // Scores print at six decimals.
    let first_line = text.lines().next().unwrap();
    let score = first_line.split_whitespace().last().unwrap();
    assert_eq!(score.split('.').nth(1).unwrap().len(), 6);

    // Episode JSON lands in the out dir and carries the config hash.
    let episodes: Vec<_> = std::fs::read_dir(ws.dir.join("out"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("episode-"))
        .collect();
    assert_eq!(episodes.len(), 1);
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(episodes[0].path()).unwrap()).unwrap();
    assert!(body["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(body["episode"]["question"].as_str().unwrap(), QUESTION);
}

#[test]
fn query_k_passages_limits_result_lines() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    let out = ws.run(&["query", "--k-passages", "1", QUESTION]);
    assert!(out.status.success());
    let ranked: Vec<&str> = stdout(&out)
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.trim())
        .filter(|l| l.contains(". P"))
        .map(|_| "line")
        .collect();
    assert_eq!(ranked.len(), 1);
}

#[test]
fn query_with_foreign_memory_snapshot_is_a_snapshot_error() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    // Build a memory snapshot bound to this graph, then swap the graph.
    assert!(ws.run(&["query", QUESTION]).status.success());
    let episode = ws.dir.join("out").read_dir().unwrap().next().unwrap().unwrap();
    write(
        &ws.dir,
        "labels.json",
        &format!(
            r#"{{"query_id": {:?}, "labels": {{}}}}"#,
            episode
                .file_name()
                .to_string_lossy()
                .trim_start_matches("episode-")
                .trim_end_matches(".json")
        ),
    );
    let out = ws.run(&[
        "feedback",
        "--episode",
        episode.path().to_str().unwrap(),
        "--labels",
        "labels.json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    write(
        &ws.dir,
        "corpus.jsonl",
        "{\"id\": \"X\", \"text\": \"entirely different text here.\"}\n",
    );
    assert!(ws.run(&["index"]).status.success());
    let out = ws.run(&["query", QUESTION]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn feedback_applies_default_gain_and_bumps_revision() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    assert!(ws.run(&["query", QUESTION]).status.success());
    let episode_path = ws
        .dir
        .join("out")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&episode_path).unwrap()).unwrap();
    let query_id = body["episode"]["query_id"].as_str().unwrap().to_string();
    let judged: Vec<u64> = body["episode"]["judged_candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(!judged.is_empty());

    // All judged sentences supportive: every task record gets K = pi/(pi+0.5).
    let labels: String = judged
        .iter()
        .map(|id| format!("\"{id}\": \"supportive\""))
        .collect::<Vec<_>>()
        .join(", ");
    write(
        &ws.dir,
        "labels.json",
        &format!(r#"{{"query_id": {query_id:?}, "labels": {{{labels}}}}}"#),
    );
    let out = ws.run(&[
        "feedback",
        "--episode",
        episode_path.to_str().unwrap(),
        "--labels",
        "labels.json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for line in text.lines().filter(|l| l.contains("channel=task")) {
        assert!(line.contains("gain=0.666667"), "fresh pi=1, r_pos=0.5: {line}");
    }
    assert!(text.contains("(revision 1)"));

    // Empty labels still advance the revision.
    write(
        &ws.dir,
        "labels.json",
        &format!(r#"{{"query_id": {query_id:?}, "labels": {{}}}}"#),
    );
    let out = ws.run(&[
        "feedback",
        "--episode",
        episode_path.to_str().unwrap(),
        "--labels",
        "labels.json",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("(revision 2)"));
}

#[test]
fn feedback_label_mismatches_exit_5() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    assert!(ws.run(&["query", QUESTION]).status.success());
    let episode_path = ws
        .dir
        .join("out")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&episode_path).unwrap()).unwrap();
    let query_id = body["episode"]["query_id"].as_str().unwrap().to_string();

    write(
        &ws.dir,
        "labels.json",
        r#"{"query_id": "some-other-query", "labels": {"0": "supportive"}}"#,
    );
    let out = ws.run(&[
        "feedback",
        "--episode",
        episode_path.to_str().unwrap(),
        "--labels",
        "labels.json",
    ]);
    assert_eq!(out.status.code(), Some(5));

    // Sentence id that the judge never saw.
    write(
        &ws.dir,
        "labels.json",
        &format!(r#"{{"query_id": {query_id:?}, "labels": {{"4": "supportive"}}}}"#),
    );
    let out = ws.run(&[
        "feedback",
        "--episode",
        episode_path.to_str().unwrap(),
        "--labels",
        "labels.json",
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn simulate_dynamics_golden_csv_and_gain_ordering() {
    let ws = Workspace::new();
    let out = gam()
        .current_dir(&ws.dir)
        .args([
            "simulate-dynamics",
            "--r", "1.0", "--q", "0", "--y", "1", "--s0", "0", "--n", "3",
            "--out", "dyn.csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(ws.dir.join("dyn.csv")).unwrap();
    assert_eq!(
        csv,
        "t,pi,gain,s\n\
         1,0.500000000000,0.500000000000,0.500000000000\n\
         2,0.333333333333,0.333333333333,0.666666666667\n\
         3,0.250000000000,0.250000000000,0.750000000000\n"
    );

    // Sweep over observation noise: larger r gives smaller gain at every t.
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for (i, r) in ["0.25", "0.5", "1", "2"].iter().enumerate() {
        let name = format!("sweep{i}.csv");
        let out = gam()
            .current_dir(&ws.dir)
            .args([
                "simulate-dynamics",
                "--r", r, "--q", "0.01", "--y", "1", "--s0", "0", "--n", "10",
                "--out", &name,
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        let gains: Vec<f64> = std::fs::read_to_string(ws.dir.join(&name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        curves.push(gains);
    }
    for t in 0..10 {
        for pair in curves.windows(2) {
            assert!(pair[0][t] > pair[1][t], "gain ordering violated at t={t}");
        }
    }

    // Parameter validation is an input error.
    let out = gam()
        .current_dir(&ws.dir)
        .args([
            "simulate-dynamics",
            "--r", "0", "--q", "0.01", "--y", "1", "--s0", "0", "--n", "3",
            "--out", "bad.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_reports_neutral_perplexities_before_any_feedback() {
    let ws = Workspace::new();
    assert!(ws.run(&["index"]).status.success());
    let out = ws.run(&["inspect"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(ws.dir.join("out/memory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "id,pi_task,pi_time,m_task_norm,cos_task_emb"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "1", "pi_task must start at 1: {line}");
        assert_eq!(cols[2], "1", "pi_time must start at 1: {line}");
    }
}

fn write_synthetic(dir: &Path) {
    let (corpus, dataset) = two_hop_benchmark(&TwoHopSpec {
        questions: 4,
        seed: 3,
    });
    let corpus_lines: String = corpus
        .iter()
        .map(|p| serde_json::to_string(p).unwrap() + "\n")
        .collect();
    write(dir, "corpus.jsonl", &corpus_lines);
    let dataset_lines: String = dataset
        .iter()
        .map(|i| serde_json::to_string(i).unwrap() + "\n")
        .collect();
    write(dir, "dataset.jsonl", &dataset_lines);
}

#[test]
fn eval_writes_reports_snapshots_and_episodes_deterministically() {
    let ws = Workspace::new();
    write_synthetic(&ws.dir);
    write(
        &ws.dir,
        "run.toml",
        &CONFIG.replace(
            "[paths]",
            "[adapters]\nsufficiency = \"oracle\"\nsupport = \"oracle\"\n\n[paths]",
        ),
    );
    assert!(ws.run(&["index"]).status.success());

    let out = ws.run(&["eval", "--turns", "2", "--out-dir", "run1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.dir.join("run1/report.json")).unwrap(),
    )
    .unwrap();
    let turns = report["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 2, "--turns 2 yields reports for turns 0..1");
    assert_eq!(turns[0]["turn"], 0);
    assert_eq!(turns[1]["turn"], 1);
    assert!(ws.dir.join("run1/mem_turn_0.gammem").exists());
    assert!(ws.dir.join("run1/mem_turn_1.gammem").exists());
    assert!(ws.dir.join("run1/episodes/t0-q0.json").exists());
    assert!(ws.dir.join("run1/run_config.json").exists());

    // Same config, same seed: byte-identical artifacts.
    let out = ws.run(&["eval", "--turns", "2", "--out-dir", "run2"]);
    assert!(out.status.success());
    for file in ["report.json", "turns.csv", "mem_turn_1.gammem", "episodes/t1-q2.json"] {
        let a = std::fs::read(ws.dir.join("run1").join(file)).unwrap();
        let b = std::fs::read(ws.dir.join("run2").join(file)).unwrap();
        assert_eq!(a, b, "artifact {file} diverged between identical runs");
    }
}

#[test]
fn eval_scenarios_append_holdout_report() {
    let ws = Workspace::new();
    write_synthetic(&ws.dir);
    write(
        &ws.dir,
        "run.toml",
        &CONFIG.replace(
            "[paths]",
            "[adapters]\nsufficiency = \"oracle\"\nsupport = \"oracle\"\n\n[paths]",
        ),
    );
    assert!(ws.run(&["index"]).status.success());

    let out = ws.run(&["eval", "--turns", "1", "--scenario", "similar", "--out-dir", "sim"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.dir.join("sim/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["scenario"], "similar");
    assert_eq!(report["turns"].as_array().unwrap().len(), 2);

    let out = ws.run(&["eval", "--turns", "1", "--scenario", "different", "--out-dir", "diff"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.dir.join("diff/report.json")).unwrap())
            .unwrap();
    // One exposure turn plus the read-only holdout turn.
    assert_eq!(report["turns"].as_array().unwrap().len(), 2);
}
