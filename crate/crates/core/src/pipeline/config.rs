use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::SkipGramConfig;
use crate::gcl::{Objective, TrainConfig};
use crate::graph::Layout;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: path `{0}` does not exist")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// JSON-lines corpus of `{"id", "latex"}` records.
    pub corpus: PathBuf,
    /// Directory receiving tables, checkpoints, indexes and the manifest.
    pub artifacts: PathBuf,
    /// Optional qrels used by the smoke report.
    #[serde(default)]
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { walks_per_node: 10, walk_length: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k: crate::eval::DEFAULT_DEPTH }
    }
}

/// One JSON document configuring every offline stage.
///
/// `seed` is the single source of randomness: it replaces the seeds of the walk sampler,
/// the token trainer, the encoder trainer and the augmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default = "all_layouts")]
    pub layouts: Vec<Layout>,
    #[serde(default = "all_models")]
    pub models: Vec<Objective>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub walks: WalkConfig,
    #[serde(default)]
    pub tokens: SkipGramConfig,
    #[serde(default)]
    pub gcl: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn all_layouts() -> Vec<Layout> {
    vec![Layout::Slt, Layout::Opt]
}

fn all_models() -> Vec<Objective> {
    Objective::ALL.to_vec()
}

fn default_seed() -> u64 {
    7
}

impl PipelineConfig {
    /// Reads a config; relative paths inside it resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.paths.corpus);
        resolve(&mut config.paths.artifacts);
        if let Some(q) = config.paths.qrels.as_mut() {
            resolve(q);
        }
        Ok(config)
    }

    /// Copies the global seed into every stage.
    pub fn with_global_seed(mut self) -> Self {
        self.tokens.seed = self.seed;
        self.gcl.seed = self.seed;
        self.gcl.augment.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.layouts.is_empty() {
            return bad("`layouts` is empty");
        }
        if self.walks.walks_per_node == 0 || self.walks.walk_length == 0 {
            return bad("walk count and length must be at least 1");
        }
        if self.eval.k == 0 {
            return bad("eval.k must be at least 1");
        }
        self.gcl.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.paths.corpus.exists() {
            return Err(ConfigError::MissingPath(self.paths.corpus.clone()));
        }
        if let Some(q) = &self.paths.qrels {
            if !q.exists() {
                return Err(ConfigError::MissingPath(q.clone()));
            }
        }
        Ok(())
    }

    /// Hash of every setting that shapes the artifacts; paths are excluded so a moved
    /// workspace reproduces the same bytes.
    pub fn hash(&self) -> u64 {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("paths");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(corpus: &str) -> PipelineConfig {
        serde_json::from_str(&format!(r#"{{"paths":{{"corpus":"{corpus}","artifacts":"out"}}}}"#)).unwrap()
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let c = config("c.jsonl");
        assert_eq!(c.layouts, vec![Layout::Slt, Layout::Opt]);
        assert_eq!(c.models.len(), 3);
        assert_eq!(c.seed, 7);
        assert_eq!(c.tokens.dim, 100);
        assert_eq!(c.gcl.epochs, 20);
        assert_eq!(c.eval.k, 1000);
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = config("a.jsonl");
        let b = config("elsewhere/b.jsonl");
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.gcl.learning_rate *= 2.0;
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.seed += 1;
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn global_seed_reaches_every_stage() {
        let mut c = config("a");
        c.seed = 99;
        let c = c.with_global_seed();
        assert_eq!((c.tokens.seed, c.gcl.seed, c.gcl.augment.seed), (99, 99, 99));
    }

    #[test]
    fn validation_rejects_missing_corpus_and_bad_values() {
        let c = config("/definitely/not/here.jsonl");
        assert!(matches!(c.validate(), Err(ConfigError::MissingPath(_))));
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "").unwrap();
        let mut c = config(corpus.to_str().unwrap());
        assert!(c.validate().is_ok());
        c.layouts.clear();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo.json");
        std::fs::write(&path, r#"{"paths":{"corpus":"corpus.jsonl","artifacts":"out","qrels":"q.txt"}}"#).unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.corpus, dir.path().join("corpus.jsonl"));
        assert_eq!(c.paths.qrels.unwrap(), dir.path().join("q.txt"));
        std::fs::write(&path, "{").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::Json { .. })));
    }
}
