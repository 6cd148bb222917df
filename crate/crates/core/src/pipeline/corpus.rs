use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::graph::{build_opt, build_slt, serialize_graph, FormulaGraph, GraphRecord, Layout};
use crate::latex::{parse_latex, ParseError};

/// One corpus formula. `template` is only present in generated benchmark corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub latex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("corpus line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("formula `{id}`: {source}")]
    Parse { id: String, source: ParseError },
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId { line: i + 1, id: entry.id });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn write_corpus(entries: &[CorpusEntry], w: &mut impl Write) -> std::io::Result<()> {
    for e in entries {
        writeln!(w, "{}", serde_json::to_string(e).expect("corpus entries serialize"))?;
    }
    Ok(())
}

pub fn build_graph(latex: &str, layout: Layout) -> Result<FormulaGraph, ParseError> {
    let tree = parse_latex(latex)?;
    Ok(match layout {
        Layout::Slt => build_slt(&tree),
        Layout::Opt => build_opt(&tree),
    })
}

/// Parses every entry; the first failure is reported with its formula id.
pub fn parse_corpus(entries: &[CorpusEntry], layout: Layout) -> Result<Vec<GraphRecord>, CorpusError> {
    entries
        .iter()
        .map(|e| {
            let graph = build_graph(&e.latex, layout).map_err(|source| CorpusError::Parse { id: e.id.clone(), source })?;
            Ok(GraphRecord { id: e.id.clone(), graph })
        })
        .collect()
}

pub fn write_graph_records(records: &[GraphRecord], w: &mut impl Write) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", serialize_graph(&r.graph, &r.id))?;
    }
    Ok(())
}
