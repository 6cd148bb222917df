//! Structural augmentations: node dropping and edge perturbation.
//!
//! Augmented views keep an `origin` map from view node index to base node index, so
//! features can be gathered and node correspondences recovered across views.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Edge, FormulaGraph, Layout, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub node_drop_ratio: f64,
    pub edge_perturb_ratio: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { node_drop_ratio: 0.2, edge_perturb_ratio: 0.2, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [("node_drop_ratio", self.node_drop_ratio), ("edge_perturb_ratio", self.edge_perturb_ratio)] {
            if !(0.0..1.0).contains(&r) {
                return Err(format!("{name} {r} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

/// An augmented graph and, for each of its nodes, the index of the base node it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub graph: FormulaGraph,
    pub origin: Vec<usize>,
}

impl View {
    pub fn identity(g: &FormulaGraph) -> Self {
        Self { graph: g.clone(), origin: (0..g.len()).collect() }
    }
}

fn check_ratio(ratio: f64) {
    assert!((0.0..1.0).contains(&ratio), "augmentation ratio {ratio} outside [0, 1)");
}

/// Removes `floor(ratio·n)` uniformly chosen non-root nodes.
///
/// Children of a removed node move to its nearest surviving ancestor and keep their own
/// relation label.
pub fn drop_nodes(g: &FormulaGraph, ratio: f64, seed: u64) -> View {
    drop_nodes_with(g, ratio, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn drop_nodes_with(g: &FormulaGraph, ratio: f64, rng: &mut impl Rng) -> View {
    check_ratio(ratio);
    let n = g.len();
    let k = (ratio * n as f64).floor() as usize;
    if k == 0 {
        return View::identity(g);
    }
    let others: Vec<usize> = (0..n).filter(|&v| v != g.root).collect();
    let mut dropped = vec![false; n];
    for i in sample(rng, others.len(), k) {
        dropped[others[i]] = true;
    }
    let parents = g.parents();
    let origin: Vec<usize> = (0..n).filter(|&v| !dropped[v]).collect();
    let mut new_index = vec![usize::MAX; n];
    for (new, &old) in origin.iter().enumerate() {
        new_index[old] = new;
    }
    let mut edges = Vec::with_capacity(origin.len() - 1);
    for &v in &origin {
        let Some((mut p, rel)) = parents[v] else { continue };
        while dropped[p] {
            p = parents[p].expect("the root is never dropped").0;
        }
        edges.push(Edge { src: new_index[p], dst: new_index[v], rel });
    }
    let graph = FormulaGraph {
        layout: g.layout,
        nodes: origin.iter().map(|&v| g.nodes[v].clone()).collect(),
        edges,
        root: new_index[g.root],
    };
    View { graph, origin }
}

/// Relation labels an edge of this graph may be relabeled to.
///
/// For operator trees this is `ARG0` up to the largest ordinal present (at least `ARG1`).
pub fn relation_alphabet(g: &FormulaGraph) -> Vec<Relation> {
    match g.layout {
        Layout::Slt => Relation::SLT.to_vec(),
        Layout::Opt => {
            let max = g
                .edges
                .iter()
                .filter_map(|e| match e.rel {
                    Relation::Arg(i) => Some(i),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
                .max(1);
            (0..=max).map(Relation::Arg).collect()
        }
    }
}

/// Rewires `floor(ratio·|edges|)` uniformly chosen edges.
///
/// Each chosen edge's destination subtree moves under a uniformly chosen node outside that
/// subtree other than its current parent, and the edge gets a uniformly drawn label. When
/// no other parent exists the edge keeps its parent and receives a different label, so
/// every chosen edge ends up changed.
pub fn perturb_edges(g: &FormulaGraph, ratio: f64, seed: u64) -> View {
    perturb_edges_with(g, ratio, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn perturb_edges_with(g: &FormulaGraph, ratio: f64, rng: &mut impl Rng) -> View {
    check_ratio(ratio);
    let m = g.edges.len();
    let k = (ratio * m as f64).floor() as usize;
    if k == 0 {
        return View::identity(g);
    }
    let alphabet = relation_alphabet(g);
    let n = g.len();
    let mut parent: Vec<Option<(usize, Relation)>> = g.parents();
    for e in sample(rng, m, k) {
        let dst = g.edges[e].dst;
        let (cur_parent, cur_rel) = parent[dst].expect("edge destinations have parents");
        let in_subtree = subtree_mask(&parent, dst);
        let candidates: Vec<usize> = (0..n).filter(|&v| !in_subtree[v] && v != cur_parent).collect();
        parent[dst] = Some(if candidates.is_empty() {
            let others: Vec<Relation> = alphabet.iter().copied().filter(|&r| r != cur_rel).collect();
            (cur_parent, others[rng.random_range(0..others.len())])
        } else {
            let p = candidates[rng.random_range(0..candidates.len())];
            (p, alphabet[rng.random_range(0..alphabet.len())])
        });
    }
    let edges = (0..n).filter_map(|v| parent[v].map(|(p, rel)| Edge { src: p, dst: v, rel })).collect();
    let graph = FormulaGraph { layout: g.layout, nodes: g.nodes.clone(), edges, root: g.root };
    View { graph, origin: (0..n).collect() }
}

fn subtree_mask(parent: &[Option<(usize, Relation)>], top: usize) -> Vec<bool> {
    // walking up from each node is O(n·depth), fine for formula-sized trees
    let n = parent.len();
    let mut state: Vec<Option<bool>> = vec![None; n];
    state[top] = Some(true);
    for v in 0..n {
        let mut path = Vec::new();
        let mut cur = v;
        let answer = loop {
            if let Some(s) = state[cur] {
                break s;
            }
            path.push(cur);
            match parent[cur] {
                Some((p, _)) => cur = p,
                None => break false,
            }
        };
        for u in path {
            state[u] = Some(answer);
        }
    }
    state.into_iter().map(|s| s.unwrap_or(false)).collect()
}
