#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use mathgcl_core::pipeline::synthetic::{synthetic_corpus, template_qrels};
use mathgcl_core::pipeline::{run_pipeline, write_corpus, CorpusEntry, PipelineConfig};

pub fn small_corpus() -> Vec<CorpusEntry> {
    synthetic_corpus(4, 11)
}

/// A fast config over the 20-formula corpus: tiny dimensions, two encoder epochs.
pub fn write_small_config(dir: &Path) -> PathBuf {
    let corpus = small_corpus();
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf).unwrap();
    std::fs::write(dir.join("corpus.jsonl"), buf).unwrap();
    std::fs::write(dir.join("qrels.txt"), template_qrels(&corpus).to_text()).unwrap();
    let config = serde_json::json!({
        "paths": { "corpus": "corpus.jsonl", "artifacts": "artifacts", "qrels": "qrels.txt" },
        "layouts": ["slt", "opt"],
        "models": ["graphcl", "bgrl"],
        "seed": 3,
        "walks": { "walks_per_node": 2, "walk_length": 4 },
        "tokens": { "dim": 16, "epochs": 1, "buckets": 256 },
        "gcl": { "epochs": 2, "batch_size": 8 },
        "eval": { "k": 100 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// Artifacts of the small config, built once per test binary.
pub fn shared_artifacts() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let config = PipelineConfig::load(&write_small_config(&dir)).unwrap();
        run_pipeline(&config).unwrap();
        dir.join("artifacts")
    })
}
