use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::binio::FormatError;
use crate::embed::EmbeddingTable;
use crate::gcl::{embed_formula, read_checkpoint, EmbedMode, EncoderParams, FormulaEmbedding, GclError, Objective, Provenance};
use crate::graph::{FormulaGraph, GraphRecord, Layout};
use crate::index::{EmbeddingIndex, IndexError, RankedList};
use crate::latex::ParseError;
use crate::pipeline::corpus::build_graph;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Retrieval model: a trained encoder or the averaging baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    InfoGraph,
    GraphCl,
    Bgrl,
    Baseline,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::InfoGraph => "infograph",
            Model::GraphCl => "graphcl",
            Model::Bgrl => "bgrl",
            Model::Baseline => "baseline",
        }
    }

    pub fn objective(self) -> Option<Objective> {
        match self {
            Model::InfoGraph => Some(Objective::InfoGraph),
            Model::GraphCl => Some(Objective::GraphCl),
            Model::Bgrl => Some(Objective::Bgrl),
            Model::Baseline => None,
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            Model::Baseline => Provenance::AverageBaseline,
            _ => Provenance::Gcl,
        }
    }
}

impl From<Objective> for Model {
    fn from(o: Objective) -> Self {
        match o {
            Objective::InfoGraph => Model::InfoGraph,
            Objective::GraphCl => Model::GraphCl,
            Objective::Bgrl => Model::Bgrl,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "average_baseline" => Ok(Model::Baseline),
            other => other.parse::<Objective>().map(Model::from).map_err(|_| format!("unknown model `{s}`")),
        }
    }
}

pub fn table_file(layout: Layout) -> String {
    format!("{layout}.table")
}

pub fn graphs_file(layout: Layout) -> String {
    format!("{layout}.graphs.jsonl")
}

pub fn checkpoint_file(layout: Layout, model: Model) -> String {
    format!("{layout}-{model}.ckpt")
}

pub fn index_file(layout: Layout, model: Model) -> String {
    format!("{layout}-{model}.index")
}

pub fn run_file(layout: Layout, model: Model) -> String {
    format!("{layout}-{model}.run")
}

/// Files of one (layout, model) pair, relative to the artifact directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub layout: Layout,
    pub model: Model,
    pub table: String,
    pub checkpoint: Option<String>,
    pub index: String,
}

impl ManifestEntry {
    pub fn new(layout: Layout, model: Model) -> Self {
        Self {
            layout,
            model,
            table: table_file(layout),
            checkpoint: model.objective().map(|_| checkpoint_file(layout, model)),
            index: index_file(layout, model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Hex form of the config hash stored in every binary header.
    pub config_hash: String,
    pub corpus: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, QueryError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| QueryError::Load { path: path.clone(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| QueryError::Load { path, message: e.to_string() })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("parse: {0}")]
    Parse(#[from] ParseError),
    #[error("embed: {0}")]
    Embed(#[from] GclError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("artifacts: ArtifactMismatch: {0}")]
    ArtifactMismatch(String),
    #[error("load {path}: {message}")]
    Load { path: PathBuf, message: String },
}

impl QueryError {
    /// The pipeline stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            QueryError::Parse(_) => "parse",
            QueryError::Embed(_) => "embed",
            QueryError::Index(_) => "index",
            QueryError::ArtifactMismatch(_) => "artifacts",
            QueryError::Load { .. } => "load",
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            QueryError::Parse(e) => e.kind(),
            QueryError::Embed(_) => "EmbedError",
            QueryError::Index(_) => "IndexError",
            QueryError::ArtifactMismatch(_) => "ArtifactMismatch",
            QueryError::Load { .. } => "LoadError",
        }
    }

    /// `{"stage", "kind", "message"}` plus `offset` for parse errors that carry one.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "stage": self.stage(), "kind": self.kind(), "message": self.to_string() });
        if let QueryError::Parse(e) = self {
            if let Some(off) = e.offset() {
                v["offset"] = json!(off);
            }
        }
        v
    }
}

fn load_err(path: &Path, e: impl fmt::Display) -> QueryError {
    QueryError::Load { path: path.to_path_buf(), message: e.to_string() }
}

fn open(path: &Path) -> Result<BufReader<File>, QueryError> {
    File::open(path).map(BufReader::new).map_err(|e| load_err(path, e))
}

pub fn load_table(path: &Path) -> Result<EmbeddingTable, QueryError> {
    EmbeddingTable::read_from(&mut open(path)?).map_err(|e: FormatError| load_err(path, e))
}

pub fn load_index(path: &Path) -> Result<EmbeddingIndex, QueryError> {
    EmbeddingIndex::read_from(&mut open(path)?).map_err(|e| load_err(path, e))
}

/// Everything needed to answer queries for one (layout, model) pair.
#[derive(Debug, Clone)]
pub struct ArtifactSet {
    pub layout: Layout,
    pub model: Model,
    pub table: EmbeddingTable,
    pub params: Option<EncoderParams>,
    pub index: EmbeddingIndex,
}

impl ArtifactSet {
    /// Checks that the parts agree on layout, model, dimension and config hash.
    pub fn new(table: EmbeddingTable, params: Option<(EncoderParams, Layout, u64)>, index: EmbeddingIndex) -> Result<Self, QueryError> {
        let mismatch = |m: String| Err(QueryError::ArtifactMismatch(m));
        let layout = index.layout();
        if table.config_hash() != index.config_hash() {
            return mismatch(format!("table hash {:016x} != index hash {:016x}", table.config_hash(), index.config_hash()));
        }
        if table.dim() != index.dim() {
            return mismatch(format!("table dim {} != index dim {}", table.dim(), index.dim()));
        }
        let (model, params) = match params {
            None => {
                if index.provenance() != Provenance::AverageBaseline {
                    return mismatch("index was built from encoder embeddings but no checkpoint was given".into());
                }
                (Model::Baseline, None)
            }
            Some((p, ckpt_layout, hash)) => {
                if ckpt_layout != layout {
                    return mismatch(format!("checkpoint layout {ckpt_layout} != index layout {layout}"));
                }
                if hash != index.config_hash() {
                    return mismatch(format!("checkpoint hash {hash:016x} != index hash {:016x}", index.config_hash()));
                }
                if index.provenance() != Provenance::Gcl {
                    return mismatch("index holds baseline embeddings but a checkpoint was given".into());
                }
                (Model::from(p.objective), Some(p))
            }
        };
        Ok(Self { layout, model, table, params, index })
    }

    pub fn load(table: &Path, checkpoint: Option<&Path>, index: &Path) -> Result<Self, QueryError> {
        let params = match checkpoint {
            None => None,
            Some(path) => {
                let c = read_checkpoint(&mut open(path)?).map_err(|e| load_err(path, e))?;
                Some((c.params, c.layout, c.config_hash))
            }
        };
        Self::new(load_table(table)?, params, load_index(index)?)
    }

    pub fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<Self, QueryError> {
        let set = Self::load(&dir.join(&entry.table), entry.checkpoint.as_ref().map(|c| dir.join(c)).as_deref(), &dir.join(&entry.index))?;
        if set.layout != entry.layout || set.model != entry.model {
            return Err(QueryError::ArtifactMismatch(format!(
                "manifest lists {}/{} but files hold {}/{}",
                entry.layout, entry.model, set.layout, set.model
            )));
        }
        Ok(set)
    }

    pub fn mode(&self) -> EmbedMode<'_> {
        match &self.params {
            Some(p) => EmbedMode::Gcl(p),
            None => EmbedMode::AverageBaseline,
        }
    }

    pub fn embed_graph(&self, id: &str, g: &FormulaGraph) -> Result<FormulaEmbedding, GclError> {
        embed_formula(self.mode(), id, g, &self.table)
    }
}

/// Parse, build the requested layout, embed, and rank against the index.
pub fn query_pipeline(artifacts: &ArtifactSet, latex: &str, layout: Layout, k: usize) -> Result<RankedList, QueryError> {
    if artifacts.layout != layout {
        return Err(QueryError::ArtifactMismatch(format!("{layout} query against an index built for {}", artifacts.layout)));
    }
    let g = build_graph(latex, layout)?;
    let e = artifacts.embed_graph("query", &g)?;
    Ok(artifacts.index.query_topk("query", &e.vector, k)?)
}

/// Embeds every record with one mode.
pub fn embed_records(mode: EmbedMode<'_>, records: &[GraphRecord], table: &EmbeddingTable) -> Result<Vec<FormulaEmbedding>, GclError> {
    records.iter().map(|r| embed_formula(mode, &r.id, &r.graph, table)).collect()
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    #[serde(flatten)]
    embedding: FormulaEmbedding,
    config_hash: String,
}

/// One JSON line per embedding, each stamped with the config hash of its token table.
pub fn write_embeddings(embeddings: &[FormulaEmbedding], config_hash: u64, w: &mut impl Write) -> std::io::Result<()> {
    for e in embeddings {
        let rec = EmbeddingRecord { embedding: e.clone(), config_hash: format!("{config_hash:016x}") };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("embeddings serialize"))?;
    }
    Ok(())
}

/// Reads embedding lines and the config hash they share.
pub fn read_embeddings(reader: impl BufRead) -> Result<(Vec<FormulaEmbedding>, u64), String> {
    let mut out = Vec::new();
    let mut hash = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let h = u64::from_str_radix(&rec.config_hash, 16).map_err(|e| format!("line {}: config_hash: {e}", i + 1))?;
        if *hash.get_or_insert(h) != h {
            return Err(format!("line {}: config hash {h:016x} differs from earlier lines", i + 1));
        }
        out.push(rec.embedding);
    }
    let hash = hash.ok_or_else(|| "no embeddings".to_string())?;
    Ok((out, hash))
}

pub(crate) fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}
