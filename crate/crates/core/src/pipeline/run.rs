use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embed::{sample_corpus, train_subword_skipgram, TrainTokensError};
use crate::eval::{evaluate_run, EvalError, QrelSet, Run};
use crate::gcl::{node_features, train, write_checkpoint, Checkpoint, EmbedMode, GclError, TrainConfig};
use crate::graph::{FormulaGraph, Layout};
use crate::index::{build_index, write_run, EmbeddingIndex, IndexError, RankedList};
use crate::pipeline::artifacts::{
    create, embed_records, run_file, Manifest, ManifestEntry, Model, CORPUS_FILE, MANIFEST_FILE, REPORT_FILE,
};
use crate::pipeline::config::{ConfigError, PipelineConfig};
use crate::pipeline::corpus::{parse_corpus, read_corpus, write_corpus, write_graph_records, CorpusError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("train-tokens: {0}")]
    Tokens(#[from] TrainTokensError),
    #[error("train-gcl: {0}")]
    Gcl(#[from] GclError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let mut w = create(path).map_err(io_err(path))?;
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Self-retrieval outcome for every indexed formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfRetrieval {
    pub queries: usize,
    pub rank_one: usize,
    pub min_self_score: f64,
}

impl SelfRetrieval {
    pub fn all_pass(&self) -> bool {
        self.rank_one == self.queries
    }
}

/// Uses each indexed row as its own query.
pub fn self_retrieval(index: &EmbeddingIndex) -> Result<SelfRetrieval, IndexError> {
    let mut rank_one = 0;
    let mut min_self_score = f64::INFINITY;
    for (i, id) in index.ids().iter().enumerate() {
        let top = index.query_topk(id, index.row(i), 1)?;
        let hit = &top.hits[0];
        if hit.id == *id && (hit.score - 1.0).abs() <= 1e-6 {
            rank_one += 1;
        }
        min_self_score = min_self_score.min(index.scores(index.row(i))?[i]);
    }
    Ok(SelfRetrieval { queries: index.len(), rank_one, min_self_score })
}

/// Ranks the whole index against each indexed row, `k` deep.
pub fn rank_corpus(index: &EmbeddingIndex, k: usize) -> Result<Vec<RankedList>, IndexError> {
    index.ids().iter().enumerate().map(|(i, id)| index.query_topk(id, index.row(i), k)).collect()
}

pub fn as_run(lists: &[RankedList]) -> Run {
    Run { queries: lists.iter().map(|l| (l.query_id.clone(), l.ids().map(str::to_string).collect())).collect() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub layout: Layout,
    pub model: Model,
    /// Mean loss of the first and last epoch; absent for the baseline.
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub self_retrieval: SelfRetrieval,
    pub bpref: Option<f64>,
    pub ndcg: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub formulas: usize,
    pub entries: Vec<EntryReport>,
}

/// Features and graphs of one layout, shared by every model trained on it.
struct LayoutData {
    graphs: Vec<FormulaGraph>,
    records: Vec<crate::graph::GraphRecord>,
}

fn eval_entry(index: &EmbeddingIndex, qrels: Option<&QrelSet>, k: usize, run_path: &Path) -> Result<(Option<f64>, Option<f64>), PipelineError> {
    let lists = rank_corpus(index, k)?;
    write_file(run_path, |w| write_run(&lists, w))?;
    match qrels {
        None => Ok((None, None)),
        Some(q) => {
            let r = evaluate_run(&[as_run(&lists)], q, k)?;
            Ok((Some(r.bpref.mean), Some(r.ndcg.mean)))
        }
    }
}

/// Runs every offline stage: parse, walks, token training, encoder training for each
/// model, indexing, and a smoke report. Returns the report that is also written to
/// `report.json` in the artifact directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let config = config.clone().with_global_seed();
    let hash = config.hash();
    let dir = &config.paths.artifacts;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let corpus_path = &config.paths.corpus;
    let entries = read_corpus(BufReader::new(File::open(corpus_path).map_err(io_err(corpus_path))?))?;
    write_file(&dir.join(CORPUS_FILE), |w| write_corpus(&entries, w))?;
    let qrels = match &config.paths.qrels {
        None => None,
        Some(p) => Some(QrelSet::parse(&std::fs::read_to_string(p).map_err(io_err(p))?)?),
    };

    let mut manifest = Manifest { config_hash: format!("{hash:016x}"), corpus: CORPUS_FILE.into(), entries: Vec::new() };
    let mut report = PipelineReport { config_hash: manifest.config_hash.clone(), formulas: entries.len(), entries: Vec::new() };

    for &layout in &config.layouts {
        let records = parse_corpus(&entries, layout)?;
        let data = LayoutData { graphs: records.iter().map(|r| r.graph.clone()).collect(), records };
        write_file(&dir.join(crate::pipeline::artifacts::graphs_file(layout)), |w| write_graph_records(&data.records, w))?;

        let walks = sample_corpus(&data.graphs, config.walks.walks_per_node, config.walks.walk_length, config.seed);
        let table = train_subword_skipgram(&walks, &config.tokens)?.with_config_hash(hash);
        log::info!("layout={layout} stage=train-tokens vocab={} walks={}", table.vocab().len(), walks.sequences.len());
        let features: Vec<_> = data.graphs.iter().map(|g| node_features(&table, g)).collect();

        let mut models = vec![Model::Baseline];
        models.extend(config.models.iter().map(|&o| Model::from(o)));
        for model in models {
            let started = Instant::now();
            let entry = ManifestEntry::new(layout, model);
            let (mode_params, first_loss, final_loss) = match model.objective() {
                None => (None, None, None),
                Some(objective) => {
                    let tc = TrainConfig { objective, ..config.gcl.clone() };
                    let outcome = train(&data.graphs, &features, &tc)?;
                    let ckpt = Checkpoint { params: outcome.params, layout, config_hash: hash };
                    let path = dir.join(entry.checkpoint.as_ref().expect("encoder models have checkpoints"));
                    write_file(&path, |w| write_checkpoint(&ckpt, w))?;
                    (Some(ckpt.params), outcome.loss_curve.first().copied(), outcome.loss_curve.last().copied())
                }
            };
            let mode = match &mode_params {
                Some(p) => EmbedMode::Gcl(p),
                None => EmbedMode::AverageBaseline,
            };
            let embeddings = embed_records(mode, &data.records, &table)?;
            let index = build_index(&embeddings)?.with_config_hash(hash);
            write_file(&dir.join(&entry.index), |w| index.write_to(w))?;
            let self_retrieval = self_retrieval(&index)?;
            let (bpref, ndcg) = eval_entry(&index, qrels.as_ref(), config.eval.k, &dir.join(run_file(layout, model)))?;
            log::info!(
                "layout={layout} model={model} self_rank_one={}/{} bpref={bpref:?}",
                self_retrieval.rank_one,
                self_retrieval.queries
            );
            report.entries.push(EntryReport {
                layout,
                model,
                first_loss,
                final_loss,
                self_retrieval,
                bpref,
                ndcg,
                seconds: started.elapsed().as_secs_f64(),
            });
            manifest.entries.push(entry);
        }
        write_file(&dir.join(crate::pipeline::artifacts::table_file(layout)), |w| table.write_to(w))?;
    }

    write_file(&dir.join(MANIFEST_FILE), |w| writeln!(w, "{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes")))?;
    write_file(&dir.join(REPORT_FILE), |w| writeln!(w, "{}", serde_json::to_string_pretty(&report).expect("report serializes")))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::artifacts::{query_pipeline, ArtifactSet};
    use crate::pipeline::config::{EvalConfig, WalkConfig};
    use crate::pipeline::synthetic::{synthetic_corpus, template_qrels};
    use crate::gcl::Objective;

    fn small_config(dir: &Path) -> PipelineConfig {
        let corpus = synthetic_corpus(4, 3);
        write_file(&dir.join("in.jsonl"), |w| write_corpus(&corpus, w)).unwrap();
        std::fs::write(dir.join("qrels.txt"), template_qrels(&corpus).to_text()).unwrap();
        let mut c: PipelineConfig = serde_json::from_value(serde_json::json!({
            "paths": {"corpus": dir.join("in.jsonl"), "artifacts": dir.join("out"), "qrels": dir.join("qrels.txt")},
            "models": ["bgrl"],
        }))
        .unwrap();
        c.walks = WalkConfig { walks_per_node: 2, walk_length: 4 };
        c.tokens.dim = 16;
        c.tokens.buckets = 512;
        c.tokens.epochs = 1;
        c.gcl.epochs = 2;
        c.gcl.batch_size = 8;
        c.eval = EvalConfig { k: 50 };
        c
    }

    #[test]
    fn small_pipeline_writes_loadable_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let report = run_pipeline(&config).unwrap();
        assert_eq!(report.formulas, 20);
        assert_eq!(report.entries.len(), 4);
        let out = dir.path().join("out");
        let manifest = Manifest::load(&out).unwrap();
        assert_eq!(manifest.entries.len(), 4);
        for (entry, r) in manifest.entries.iter().zip(&report.entries) {
            let set = ArtifactSet::load_entry(&out, entry).unwrap();
            assert_eq!((set.layout, set.model), (r.layout, r.model));
            assert!(r.bpref.is_some_and(|b| (0.0..=1.0).contains(&b)));
            assert_eq!(r.final_loss.is_some(), r.model == Model::Bgrl);
            let lists = std::fs::read_to_string(out.join(run_file(r.layout, r.model))).unwrap();
            assert!(Run::parse(&lists).unwrap().queries.len() == 20);
        }
        let corpus = read_corpus(BufReader::new(File::open(out.join(CORPUS_FILE)).unwrap())).unwrap();
        let set = ArtifactSet::load_entry(&out, &manifest.entries[1]).unwrap();
        let hits = query_pipeline(&set, &corpus[7].latex, set.layout, 5).unwrap();
        assert_eq!(hits.hits[0].id, corpus[7].id);
    }

    #[test]
    fn models_needing_negatives_fail_cleanly_on_tiny_corpora() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        std::fs::write(&config.paths.corpus, "{\"id\":\"only\",\"latex\":\"x\"}\n").unwrap();
        config.paths.qrels = None;
        config.models = vec![Objective::GraphCl];
        assert!(matches!(run_pipeline(&config), Err(PipelineError::Gcl(GclError::BatchTooSmall { .. }))));
    }
}
