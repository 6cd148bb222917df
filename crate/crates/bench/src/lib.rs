//! Inputs shared by the benchmarks under `benches/`.

use mathgcl_core::gcl::{FormulaEmbedding, Mat, Provenance};
use mathgcl_core::graph::{FormulaGraph, Layout};
use mathgcl_core::pipeline::synthetic::{synthetic_corpus, SYNTHETIC_SEED};
use mathgcl_core::pipeline::{build_graph, CorpusEntry};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The 200-formula benchmark corpus.
pub fn corpus() -> Vec<CorpusEntry> {
    synthetic_corpus(40, SYNTHETIC_SEED)
}

pub fn graphs(layout: Layout) -> Vec<FormulaGraph> {
    corpus().iter().map(|e| build_graph(&e.latex, layout).expect("synthetic formulas parse")).collect()
}

/// Uniform node features in `[-1, 1]`, one matrix per graph.
pub fn features(graphs: &[FormulaGraph], dim: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graphs.iter().map(|g| Mat::uniform(g.len(), dim, 1.0, &mut rng)).collect()
}

pub fn embeddings(n: usize, dim: usize, seed: u64) -> Vec<FormulaEmbedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Mat::uniform(n, dim, 1.0, &mut rng);
    (0..n)
        .map(|i| FormulaEmbedding {
            id: format!("e{i:06}"),
            vector: m.row(i).iter().map(|&x| x as f32).collect(),
            provenance: Provenance::Gcl,
            layout: Layout::Opt,
        })
        .collect()
}
