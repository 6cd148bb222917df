//! Formula graphs: symbol layout trees (SLT) and operator trees (OPT).
//!
//! Both layouts share one representation, a rooted tree of [`MathToken`]s whose
//! edges carry a [`Relation`]. Builders emit nodes in canonical pre-order so that
//! equal trees are equal values and serialize to identical bytes.

mod opt;
mod record;
mod slt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::token::MathToken;

pub use opt::{build_opt, opt_sexpr};
pub use record::{deserialize_graph, deserialize_graph_at, read_graph_records, serialize_graph, GraphRecord, RecordError};
pub use slt::build_slt;

/// Which tree family a graph belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Slt,
    Opt,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Slt => "slt",
            Layout::Opt => "opt",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Layout::Slt => 0,
            Layout::Opt => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Layout::Slt),
            1 => Some(Layout::Opt),
            _ => None,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slt" => Ok(Layout::Slt),
            "opt" => Ok(Layout::Opt),
            other => Err(format!("unknown layout `{other}` (expected slt or opt)")),
        }
    }
}

/// Edge label. SLT edges use the nine spatial relations, OPT edges use operand ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Sup,
    Sub,
    Over,
    Under,
    Within,
    PreSup,
    PreSub,
    Element,
    Next,
    Arg(u16),
}

/// Number of distinct operand ordinals with their own relation embedding;
/// higher ordinals share the last slot.
pub const ARG_SLOTS: usize = 32;

/// Size of the relation vocabulary seen by encoders.
pub const RELATION_SLOTS: usize = Relation::SLT.len() + ARG_SLOTS;

impl Relation {
    pub const SLT: [Relation; 9] = [
        Relation::Next,
        Relation::Sup,
        Relation::Sub,
        Relation::Over,
        Relation::Under,
        Relation::Within,
        Relation::PreSup,
        Relation::PreSub,
        Relation::Element,
    ];

    pub fn is_slt(self) -> bool {
        !matches!(self, Relation::Arg(_))
    }

    /// Dense index into a relation embedding table of [`RELATION_SLOTS`] rows.
    pub fn slot(self) -> usize {
        match self {
            Relation::Arg(i) => Relation::SLT.len() + (i as usize).min(ARG_SLOTS - 1),
            other => Relation::SLT.iter().position(|r| *r == other).expect("spatial relation"),
        }
    }

    /// Order in which children are visited when laying out nodes in pre-order.
    /// Baseline continuation comes last so that a symbol's scripts precede its successor.
    fn visit_rank(self) -> u32 {
        match self {
            Relation::Sup => 0,
            Relation::Sub => 1,
            Relation::Over => 2,
            Relation::Under => 3,
            Relation::Within => 4,
            Relation::PreSup => 5,
            Relation::PreSub => 6,
            Relation::Element => 7,
            Relation::Next => 8,
            Relation::Arg(i) => 16 + i as u32,
        }
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Next => "NEXT",
            Relation::Sup => "SUP",
            Relation::Sub => "SUB",
            Relation::Over => "OVER",
            Relation::Under => "UNDER",
            Relation::Within => "WITHIN",
            Relation::PreSup => "PRE_SUP",
            Relation::PreSub => "PRE_SUB",
            Relation::Element => "ELEMENT",
            Relation::Arg(i) => return write!(f, "ARG{i}"),
        };
        f.write_str(s)
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("ARG") {
            return n.parse::<u16>().map(Relation::Arg).map_err(|_| format!("bad ordinal in `{s}`"));
        }
        Relation::SLT
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rel: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("edge {edge} references node {node} but the graph has {len} nodes")]
    DanglingEdge { edge: usize, node: usize, len: usize },
    #[error("root index {0} is out of range")]
    BadRoot(usize),
    #[error("root node has an incoming edge")]
    RootHasParent,
    #[error("node {0} has more than one incoming edge")]
    MultipleParents(usize),
    #[error("node {0} is not reachable from the root")]
    Unreachable(usize),
    #[error("relation {rel} is not valid in a {layout} graph")]
    WrongAlphabet { rel: Relation, layout: Layout },
    #[error("operand ordinals of node {0} are not contiguous from 0")]
    NonContiguousArgs(usize),
}

/// A rooted, labeled tree over math tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaGraph {
    pub layout: Layout,
    pub nodes: Vec<MathToken>,
    pub edges: Vec<Edge>,
    pub root: usize,
}

impl FormulaGraph {
    pub fn single(layout: Layout, token: MathToken) -> Self {
        Self { layout, nodes: vec![token], edges: Vec::new(), root: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parent of every node (`None` for the root), assuming a valid tree.
    pub fn parents(&self) -> Vec<Option<(usize, Relation)>> {
        let mut parents = vec![None; self.nodes.len()];
        for e in &self.edges {
            parents[e.dst] = Some((e.src, e.rel));
        }
        parents
    }

    /// Children of every node in edge-list order.
    pub fn children(&self) -> Vec<Vec<(usize, Relation)>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            children[e.src].push((e.dst, e.rel));
        }
        children
    }

    /// Neighbors with edges treated as undirected.
    pub fn undirected_neighbors(&self) -> Vec<Vec<(usize, Relation)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push((e.dst, e.rel));
            adj[e.dst].push((e.src, e.rel));
        }
        adj
    }

    /// Checks the rooted-tree invariant by traversal. Does not check the relation alphabet.
    pub fn check_tree(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if self.root >= n {
            return Err(GraphError::BadRoot(self.root));
        }
        let mut has_parent = vec![false; n];
        for (i, e) in self.edges.iter().enumerate() {
            for node in [e.src, e.dst] {
                if node >= n {
                    return Err(GraphError::DanglingEdge { edge: i, node, len: n });
                }
            }
            if e.dst == self.root {
                return Err(GraphError::RootHasParent);
            }
            if std::mem::replace(&mut has_parent[e.dst], true) {
                return Err(GraphError::MultipleParents(e.dst));
            }
        }
        let children = self.children();
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(children[v].iter().map(|&(c, _)| c));
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(GraphError::Unreachable(v)),
            None => Ok(()),
        }
    }

    /// Full validity: rooted tree, layout alphabet, and contiguous operand ordinals for OPT.
    pub fn validate(&self) -> Result<(), GraphError> {
        self.check_tree()?;
        for e in &self.edges {
            if e.rel.is_slt() != (self.layout == Layout::Slt) {
                return Err(GraphError::WrongAlphabet { rel: e.rel, layout: self.layout });
            }
        }
        if self.layout == Layout::Opt {
            for (node, kids) in self.children().iter().enumerate() {
                let mut ords: Vec<u16> = kids
                    .iter()
                    .map(|(_, r)| match r {
                        Relation::Arg(i) => *i,
                        _ => unreachable!(),
                    })
                    .collect();
                ords.sort_unstable();
                if ords.iter().enumerate().any(|(i, &o)| o as usize != i) {
                    return Err(GraphError::NonContiguousArgs(node));
                }
            }
        }
        Ok(())
    }

    /// Renumbers nodes into pre-order (children visited by relation, then insertion order),
    /// making node 0 the root and listing edges by destination index.
    pub fn canonicalize(&mut self) {
        let mut children = self.children();
        for kids in &mut children {
            // stable: ties keep insertion order
            kids.sort_by_key(|&(_, r)| r.visit_rank());
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(children[v].iter().rev().map(|&(c, _)| c));
        }
        let mut new_index = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let nodes = order.iter().map(|&old| self.nodes[old].clone()).collect();
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { src: new_index[e.src], dst: new_index[e.dst], rel: e.rel })
            .collect();
        edges.sort_by_key(|e| e.dst);
        self.nodes = nodes;
        self.edges = edges;
        self.root = 0;
    }
}

/// Incremental builder used by the SLT and OPT constructors.
#[derive(Debug)]
pub(crate) struct GraphBuilder {
    layout: Layout,
    nodes: Vec<MathToken>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub(crate) fn new(layout: Layout) -> Self {
        Self { layout, nodes: Vec::new(), edges: Vec::new() }
    }

    pub(crate) fn node(&mut self, token: MathToken) -> usize {
        self.nodes.push(token);
        self.nodes.len() - 1
    }

    pub(crate) fn edge(&mut self, src: usize, dst: usize, rel: Relation) {
        self.edges.push(Edge { src, dst, rel });
    }

    pub(crate) fn finish(self, root: usize) -> FormulaGraph {
        let mut g = FormulaGraph { layout: self.layout, nodes: self.nodes, edges: self.edges, root };
        g.canonicalize();
        debug_assert_eq!(g.validate(), Ok(()));
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::TokenKind;

    fn v(s: &str) -> MathToken {
        MathToken::new(TokenKind::Variable, s).unwrap()
    }

    #[test]
    fn relation_labels_round_trip() {
        for r in Relation::SLT.into_iter().chain([Relation::Arg(0), Relation::Arg(17)]) {
            assert_eq!(r.to_string().parse::<Relation>().unwrap(), r);
        }
        assert!("ARGx".parse::<Relation>().is_err());
    }

    #[test]
    fn slots_are_dense_and_bounded() {
        let mut slots: Vec<usize> = Relation::SLT.iter().map(|r| r.slot()).collect();
        slots.extend((0..ARG_SLOTS as u16).map(|i| Relation::Arg(i).slot()));
        slots.sort_unstable();
        assert_eq!(slots, (0..RELATION_SLOTS).collect::<Vec<_>>());
        assert_eq!(Relation::Arg(500).slot(), RELATION_SLOTS - 1);
    }

    #[test]
    fn tree_checks_catch_violations() {
        let mut g = FormulaGraph {
            layout: Layout::Slt,
            nodes: vec![v("a"), v("b"), v("c")],
            edges: vec![Edge { src: 0, dst: 1, rel: Relation::Next }, Edge { src: 1, dst: 2, rel: Relation::Sup }],
            root: 0,
        };
        assert_eq!(g.validate(), Ok(()));

        g.edges.push(Edge { src: 0, dst: 2, rel: Relation::Sub });
        assert_eq!(g.check_tree(), Err(GraphError::MultipleParents(2)));
        g.edges.pop();

        g.edges[1] = Edge { src: 1, dst: 5, rel: Relation::Sup };
        assert!(matches!(g.check_tree(), Err(GraphError::DanglingEdge { .. })));

        // cycle between 1 and 2, detached from root
        g.edges = vec![Edge { src: 2, dst: 1, rel: Relation::Next }, Edge { src: 1, dst: 2, rel: Relation::Next }];
        assert!(matches!(g.check_tree(), Err(GraphError::Unreachable(_))));
    }

    #[test]
    fn canonical_order_puts_scripts_before_successor() {
        let mut b = GraphBuilder::new(Layout::Slt);
        let a = b.node(v("a"));
        let plus = b.node(v("p"));
        let three = b.node(v("t"));
        b.edge(a, plus, Relation::Next);
        b.edge(a, three, Relation::Sup);
        let g = b.finish(a);
        let labels: Vec<String> = g.nodes.iter().map(ToString::to_string).collect();
        assert_eq!(labels, ["V!a", "V!t", "V!p"]);
        assert_eq!(g.edges[0], Edge { src: 0, dst: 1, rel: Relation::Sup });
    }
}
