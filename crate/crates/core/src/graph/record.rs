//! Line-oriented JSON records for formula graphs.
//!
//! ```json
//! {"id":"q1","layout":"slt","nodes":["V!a","N!3"],"edges":[[0,1,"SUP"]],"root":0}
//! ```

use std::io::BufRead;

use serde::Serialize;
use serde_json::Value;

use crate::graph::{Edge, FormulaGraph, GraphError, Layout, Relation};
use crate::token::MathToken;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: malformed record field `{field}`: {message}")]
    MalformedRecord { line: usize, field: String, message: String },
    #[error("reading graph records: {0}")]
    Io(#[from] std::io::Error),
}

/// A graph together with the formula id it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphRecord {
    pub id: String,
    pub graph: FormulaGraph,
}

#[derive(Serialize)]
struct RawRecord<'a> {
    id: &'a str,
    layout: Layout,
    nodes: Vec<String>,
    edges: Vec<(usize, usize, String)>,
    root: usize,
}

/// Serializes a graph as a single-line JSON record.
pub fn serialize_graph(g: &FormulaGraph, id: &str) -> String {
    let raw = RawRecord {
        id,
        layout: g.layout,
        nodes: g.nodes.iter().map(ToString::to_string).collect(),
        edges: g.edges.iter().map(|e| (e.src, e.dst, e.rel.label())).collect(),
        root: g.root,
    };
    serde_json::to_string(&raw).expect("graph records always serialize")
}

/// Parses one record; `line` is only used for diagnostics.
pub fn deserialize_graph_at(text: &str, line: usize) -> Result<GraphRecord, RecordError> {
    let bad = |field: &str, message: String| RecordError::MalformedRecord { line, field: field.to_string(), message };
    let value: Value = serde_json::from_str(text).map_err(|e| bad("<json>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| bad("<json>", "expected an object".into()))?;
    let field = |name: &str| obj.get(name).ok_or_else(|| bad(name, "missing".into()));

    let id = field("id")?.as_str().ok_or_else(|| bad("id", "expected a string".into()))?.to_string();
    let layout: Layout = field("layout")?
        .as_str()
        .ok_or_else(|| bad("layout", "expected a string".into()))?
        .parse()
        .map_err(|e: String| bad("layout", e))?;
    let nodes = field("nodes")?
        .as_array()
        .ok_or_else(|| bad("nodes", "expected an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, n)| {
            n.as_str()
                .ok_or_else(|| bad("nodes", format!("entry {i} is not a string")))?
                .parse::<MathToken>()
                .map_err(|e| bad("nodes", format!("entry {i}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let edges = field("edges")?
        .as_array()
        .ok_or_else(|| bad("edges", "expected an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let parts = e.as_array().filter(|a| a.len() == 3).ok_or_else(|| bad("edges", format!("entry {i} is not [src,dst,rel]")))?;
            let index = |v: &Value| {
                v.as_u64().map(|x| x as usize).ok_or_else(|| bad("edges", format!("entry {i} has a non-integer index")))
            };
            let rel: Relation = parts[2]
                .as_str()
                .ok_or_else(|| bad("edges", format!("entry {i} relation is not a string")))?
                .parse()
                .map_err(|m: String| bad("edges", format!("entry {i}: {m}")))?;
            Ok(Edge { src: index(&parts[0])?, dst: index(&parts[1])?, rel })
        })
        .collect::<Result<Vec<_>, RecordError>>()?;
    let root = field("root")?.as_u64().ok_or_else(|| bad("root", "expected an integer".into()))? as usize;

    let graph = FormulaGraph { layout, nodes, edges, root };
    graph.validate().map_err(|e| {
        let f = match e {
            GraphError::BadRoot(_) | GraphError::RootHasParent => "root",
            GraphError::Empty => "nodes",
            _ => "edges",
        };
        bad(f, e.to_string())
    })?;
    Ok(GraphRecord { id, graph })
}

pub fn deserialize_graph(text: &str) -> Result<GraphRecord, RecordError> {
    deserialize_graph_at(text, 1)
}

/// Reads a JSON-lines file of graph records, skipping blank lines.
pub fn read_graph_records(reader: impl BufRead) -> Result<Vec<GraphRecord>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(deserialize_graph_at(&line, i + 1)?);
    }
    Ok(out)
}
