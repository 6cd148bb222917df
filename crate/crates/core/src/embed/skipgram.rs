//! Skip-gram with negative sampling over subword-composed input vectors.
//!
//! Each vocabulary token's input representation is the mean of its own row and the rows
//! of its hashed character n-grams. Output vectors are per token. Training follows the
//! fastText update order and is bit-reproducible for a fixed seed.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::table::{ngram_buckets, EmbeddingTable, EMBEDDING_DIM};
use crate::embed::walks::WalkCorpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub min_count: usize,
    pub buckets: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: EMBEDDING_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.05,
            min_count: 1,
            buckets: 1 << 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainTokensError {
    #[error("walk corpus has no tokens meeting the minimum count")]
    EmptyCorpus,
    #[error("invalid skip-gram configuration: {0}")]
    InvalidConfig(String),
}

/// Draws token ids with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn new(counts: &[u64]) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        Self { dist: WeightedIndex::new(weights).expect("non-empty positive counts") }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

fn build_vocab(corpus: &WalkCorpus, min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in corpus.sequences.iter().flatten() {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut entries: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count as u64).collect();
    // frequency order, ties by token text, so ids never depend on hash iteration order
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens: Vec<String> = entries.iter().map(|(t, _)| t.to_string()).collect();
    let counts = entries.iter().map(|&(_, c)| c).collect();
    let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Vocab { tokens, counts, index }
}

fn sigmoid(x: f32) -> f32 {
    if x > 8.0 {
        1.0
    } else if x < -8.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

struct Model {
    dim: usize,
    /// vocabulary rows followed by bucket rows
    input: Vec<f32>,
    output: Vec<f32>,
    hidden: Vec<f32>,
    grad: Vec<f32>,
}

impl Model {
    fn hidden_from(&mut self, rows: &[usize]) {
        let d = self.dim;
        self.hidden.iter_mut().for_each(|x| *x = 0.0);
        for &r in rows {
            for (h, x) in self.hidden.iter_mut().zip(&self.input[r * d..(r + 1) * d]) {
                *h += x;
            }
        }
        let s = 1.0 / rows.len() as f32;
        self.hidden.iter_mut().for_each(|x| *x *= s);
    }

    /// One logistic step against output row `target`; accumulates the input gradient.
    fn binary_step(&mut self, target: usize, label: f32, lr: f32) {
        let d = self.dim;
        let out = &mut self.output[target * d..(target + 1) * d];
        let score: f32 = self.hidden.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        let alpha = lr * (label - sigmoid(score));
        for k in 0..d {
            self.grad[k] += alpha * out[k];
            out[k] += alpha * self.hidden[k];
        }
    }

    fn apply_grad(&mut self, rows: &[usize]) {
        let d = self.dim;
        for &r in rows {
            for (x, g) in self.input[r * d..(r + 1) * d].iter_mut().zip(&self.grad) {
                *x += g;
            }
        }
    }
}

/// Trains subword skip-gram embeddings on a walk corpus.
pub fn train_subword_skipgram(corpus: &WalkCorpus, config: &SkipGramConfig) -> Result<EmbeddingTable, TrainTokensError> {
    if config.dim == 0 || config.window == 0 || config.buckets == 0 {
        return Err(TrainTokensError::InvalidConfig("dim, window and buckets must be positive".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(TrainTokensError::InvalidConfig("learning rate must be positive".into()));
    }
    let vocab = build_vocab(corpus, config.min_count);
    if vocab.tokens.is_empty() {
        return Err(TrainTokensError::EmptyCorpus);
    }
    let dim = config.dim;
    let n_vocab = vocab.tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let rows: Vec<Vec<usize>> = vocab
        .tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut r = vec![i];
            r.extend(ngram_buckets(t, config.buckets).into_iter().map(|b| n_vocab + b));
            r
        })
        .collect();

    let bound = 1.0 / dim as f32;
    let input: Vec<f32> = (0..(n_vocab + config.buckets) * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut model = Model { dim, input, output: vec![0.0; n_vocab * dim], hidden: vec![0.0; dim], grad: vec![0.0; dim] };
    let sampler = NegativeSampler::new(&vocab.counts);

    let sentences: Vec<Vec<usize>> = corpus
        .sequences
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.index.get(t).copied()).collect())
        .collect();
    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (tokens_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;

    for _ in 0..config.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = processed as f64 / total;
                let lr = config.learning_rate * (1.0 - progress) as f32;
                processed += 1;
                let reach = rng.random_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let target = sentence[ctx];
                    model.hidden_from(&rows[center]);
                    model.grad.iter_mut().for_each(|g| *g = 0.0);
                    model.binary_step(target, 1.0, lr);
                    for _ in 0..config.negatives {
                        let neg = loop {
                            let n = sampler.sample(&mut rng);
                            if n != target || n_vocab == 1 {
                                break n;
                            }
                        };
                        if neg != target {
                            model.binary_step(neg, 0.0, lr);
                        }
                    }
                    model.apply_grad(&rows[center]);
                }
            }
        }
    }

    let mut vectors = Vec::with_capacity(n_vocab * dim);
    for r in &rows {
        model.hidden_from(r);
        vectors.extend_from_slice(&model.hidden);
    }
    let buckets = model.input.split_off(n_vocab * dim);
    Ok(EmbeddingTable::new(dim, vocab.tokens, vectors, config.buckets, buckets))
}
