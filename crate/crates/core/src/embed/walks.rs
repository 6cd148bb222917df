//! Random-walk token corpora over formula graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{FormulaGraph, Relation};

/// Prefix of the tokens that carry edge labels inside a walk.
pub const RELATION_PREFIX: &str = "REL!";

pub fn relation_token(rel: Relation) -> String {
    format!("{RELATION_PREFIX}{rel}")
}

/// Token sequences sampled by walks, with the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub sequences: Vec<Vec<String>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

/// Samples `walks_per_node` uniform random walks of up to `walk_length` nodes from every node.
///
/// Edges are traversed in both directions. Node tokens and `REL!` tokens alternate, so a
/// walk visiting `L` nodes has `2L - 1` tokens.
pub fn sample_walks(g: &FormulaGraph, walks_per_node: usize, walk_length: usize, seed: u64) -> WalkCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(walks_per_node * g.len());
    walk_graph(g, walks_per_node, walk_length, &mut rng, &mut sequences);
    WalkCorpus { sequences, walk_length, walks_per_node, seed }
}

/// Walks over a whole collection with one seeded stream.
pub fn sample_corpus(graphs: &[FormulaGraph], walks_per_node: usize, walk_length: usize, seed: u64) -> WalkCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(walks_per_node * graphs.iter().map(FormulaGraph::len).sum::<usize>());
    for g in graphs {
        walk_graph(g, walks_per_node, walk_length, &mut rng, &mut sequences);
    }
    WalkCorpus { sequences, walk_length, walks_per_node, seed }
}

fn walk_graph(g: &FormulaGraph, walks_per_node: usize, walk_length: usize, rng: &mut impl Rng, out: &mut Vec<Vec<String>>) {
    assert!(walks_per_node >= 1 && walk_length >= 1, "walk parameters must be positive");
    let tokens: Vec<String> = g.nodes.iter().map(ToString::to_string).collect();
    let adj = g.undirected_neighbors();
    for _ in 0..walks_per_node {
        for start in 0..g.len() {
            let mut seq = Vec::with_capacity(2 * walk_length - 1);
            let mut cur = start;
            seq.push(tokens[cur].clone());
            for _ in 1..walk_length {
                let nbrs = &adj[cur];
                if nbrs.is_empty() {
                    break;
                }
                let (next, rel) = nbrs[rng.random_range(0..nbrs.len())];
                seq.push(relation_token(rel));
                seq.push(tokens[next].clone());
                cur = next;
            }
            out.push(seq);
        }
    }
}
