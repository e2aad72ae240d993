//! Run configuration: a single TOML file plus flag overrides.
//!
//! Every section is optional and falls back to the engine defaults. The
//! resolved configuration is hashed (SHA-256 over its canonical JSON) and that
//! hash is echoed into run artifacts for provenance.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use gam_core::adapters::doubles::{FixedSufficiency, OracleSufficiency, OracleSupport};
use gam_core::adapters::http::{HttpAdapters, HttpConfig};
use gam_core::adapters::AdapterRegistry;
use gam_core::eval::QaItem;
use gam_core::memory::UpdateConfig;
use gam_core::retrieval::RetrievalConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub update: UpdateConfig,
    #[serde(default)]
    pub adapters: AdapterSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub memory: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            graph: None,
            memory: None,
            dataset: None,
            out_dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSection {
    /// "doubles" (offline, deterministic) or "http".
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_dim")]
    pub embed_dim: usize,
    /// Sufficiency judge double: "always_no", "always_yes", or "oracle"
    /// (answers from dataset gold labels; eval only).
    #[serde(default = "default_sufficiency")]
    pub sufficiency: String,
    /// Support judge double: "empty" or "oracle".
    #[serde(default = "default_support")]
    pub support: String,
    /// With kind = "doubles", route these functions over HTTP instead
    /// (e.g. ["embed", "judge_sufficiency"]).
    #[serde(default)]
    pub http_functions: Vec<String>,
}

fn default_kind() -> String {
    "doubles".into()
}

fn default_dim() -> usize {
    64
}

fn default_sufficiency() -> String {
    "always_no".into()
}

fn default_support() -> String {
    "empty".into()
}

impl Default for AdapterSection {
    fn default() -> Self {
        AdapterSection {
            kind: default_kind(),
            embed_dim: default_dim(),
            sufficiency: default_sufficiency(),
            support: default_support(),
            http_functions: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        config.retrieval.validate().map_err(anyhow::Error::from)?;
        config.update.validate().map_err(anyhow::Error::from)?;
        Ok(config)
    }

    /// SHA-256 over the resolved config's canonical JSON, hex-encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        gam_core::vecmath::to_hex(&digest)
    }

    /// Builds the adapter registry this config describes. `dataset` feeds the
    /// oracle judges when selected; commands without a dataset pass `None`.
    pub fn registry(&self, dataset: Option<&[QaItem]>) -> Result<AdapterRegistry> {
        let section = &self.adapters;
        let mut registry = match section.kind.as_str() {
            "doubles" => AdapterRegistry::doubles_with_dim(self.seed, section.embed_dim),
            "http" => AdapterRegistry::http(HttpConfig::from_env(section.embed_dim)?)?,
            other => bail!("unknown adapter kind {other:?} (expected doubles or http)"),
        };
        if section.kind == "doubles" && !section.http_functions.is_empty() {
            let http = Arc::new(HttpAdapters::new(HttpConfig::from_env(section.embed_dim)?)?);
            for name in &section.http_functions {
                match name.as_str() {
                    "embed" => registry = registry.with_embedder(http.clone()),
                    "extract_time" => registry = registry.with_time_extractor(http.clone()),
                    "judge_sufficiency" => registry = registry.with_sufficiency(http.clone()),
                    "judge_support" => registry = registry.with_support(http.clone()),
                    "rewrite" => registry = registry.with_rewriter(http.clone()),
                    "generate" => registry = registry.with_generator(http.clone()),
                    other => bail!("unknown http function override {other:?}"),
                }
            }
        }
        match section.sufficiency.as_str() {
            "always_no" => {
                registry = registry.with_sufficiency(Arc::new(FixedSufficiency::always_no()))
            }
            "always_yes" => {
                registry = registry.with_sufficiency(Arc::new(FixedSufficiency::always_yes()))
            }
            "oracle" => {
                // Without a dataset the oracle knows no gold evidence and
                // answers "insufficient" for everything.
                let gold = dataset.map(gold_map).unwrap_or_default();
                registry = registry.with_sufficiency(Arc::new(OracleSufficiency::new(gold)));
            }
            "http" => {}
            other => bail!("unknown sufficiency judge {other:?}"),
        }
        match section.support.as_str() {
            "empty" => {}
            "oracle" => {
                let gold = dataset.map(gold_map).unwrap_or_default();
                registry = registry.with_support(Arc::new(OracleSupport::new(gold)));
            }
            "http" => {}
            other => bail!("unknown support judge {other:?}"),
        }
        Ok(registry)
    }

    pub fn corpus_path(&self, flag: Option<&Path>) -> Result<PathBuf> {
        resolve_path("corpus", flag, self.paths.corpus.as_deref())
    }

    pub fn graph_path(&self, flag: Option<&Path>) -> Result<PathBuf> {
        resolve_path("graph", flag, self.paths.graph.as_deref())
    }

    pub fn dataset_path(&self, flag: Option<&Path>) -> Result<PathBuf> {
        resolve_path("dataset", flag, self.paths.dataset.as_deref())
    }

    pub fn memory_path(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.paths.memory.clone())
    }
}

fn resolve_path(what: &str, flag: Option<&Path>, config: Option<&Path>) -> Result<PathBuf> {
    flag.or(config)
        .map(Path::to_path_buf)
        .with_context(|| format!("no {what} path given (config [paths] or flag)"))
}

fn gold_map(dataset: &[QaItem]) -> std::collections::HashMap<String, std::collections::BTreeSet<u32>> {
    dataset
        .iter()
        .filter_map(|item| {
            item.gold_support_ids
                .as_ref()
                .map(|ids| (item.question.clone(), ids.iter().copied().collect()))
        })
        .collect()
}

/// Advisory lock guarding a memory snapshot against concurrent writers.
pub struct SnapshotLock {
    path: PathBuf,
}

impl SnapshotLock {
    pub fn acquire(snapshot_path: &Path) -> Result<Self> {
        let path = snapshot_path.with_extension("lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(SnapshotLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "memory snapshot is locked by another process ({} exists)",
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating lock {}", path.display())),
        }
    }
}

impl Drop for SnapshotLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
