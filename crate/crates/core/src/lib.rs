//! Formula retrieval with graph contrastive learning.
//!
//! The pipeline parses LaTeX formulas into symbol layout trees and operator trees,
//! learns subword token embeddings from random walks over those trees, trains a
//! message-passing encoder under a self-supervised contrastive objective, and ranks
//! indexed formulas against a query by cosine similarity. An evaluation harness
//! scores ranked runs with bpref and nDCG.

mod binio;
pub mod embed;
pub mod eval;
pub mod gcl;
pub mod graph;
pub mod index;
pub mod latex;
pub mod pipeline;
pub mod token;

pub use binio::FormatError;
pub use embed::{EmbeddingTable, SkipGramConfig, WalkCorpus};
pub use gcl::{EncoderParams, FormulaEmbedding, Objective, Provenance, TrainConfig};
pub use eval::{evaluate_run, MetricReport, QrelSet, Run};
pub use graph::{build_opt, build_slt, FormulaGraph, Layout, Relation};
pub use index::{build_index, EmbeddingIndex, Hit, RankedList};
pub use latex::{parse_latex, ExpressionTree, ParseError};
pub use token::{MathToken, TokenKind};
