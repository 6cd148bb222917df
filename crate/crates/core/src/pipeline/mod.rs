//! Offline pipeline wiring, artifact loading and the query path.

mod artifacts;
mod config;
mod corpus;
mod run;
pub mod synthetic;

pub use artifacts::{
    checkpoint_file, embed_records, graphs_file, index_file, load_index, load_table, query_pipeline, read_embeddings, run_file,
    table_file, write_embeddings, ArtifactSet, Manifest, ManifestEntry, Model, QueryError, CORPUS_FILE, MANIFEST_FILE, REPORT_FILE,
};
pub use config::{ConfigError, EvalConfig, Paths, PipelineConfig, WalkConfig};
pub use corpus::{build_graph, parse_corpus, read_corpus, write_corpus, write_graph_records, CorpusEntry, CorpusError};
pub use run::{as_run, rank_corpus, run_pipeline, self_retrieval, EntryReport, PipelineError, PipelineReport, SelfRetrieval};
