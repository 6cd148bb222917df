//! Exact cosine retrieval over unit-normalized formula embeddings.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{self, FormatError};
use crate::gcl::{FormulaEmbedding, Provenance};
use crate::graph::Layout;

pub const INDEX_MAGIC: [u8; 4] = *b"MGRI";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("no embeddings to index")]
    Empty,
    #[error("duplicate formula id {0:?}")]
    DuplicateId(String),
    #[error("formula {0:?} has a zero or non-finite embedding")]
    ZeroVector(String),
    #[error("query vector is zero or non-finite")]
    ZeroQueryVector,
    #[error("embedding {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("embedding {id:?} is {found}, but the index holds {expected}")]
    MixedKinds { id: String, expected: String, found: String },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Results for one query, ordered by score descending then id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    dim: usize,
    rows: Vec<f32>,
    layout: Layout,
    provenance: Provenance,
    config_hash: u64,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Normalizes every embedding once so queries reduce to dot products.
pub fn build_index(embeddings: &[FormulaEmbedding]) -> Result<EmbeddingIndex, IndexError> {
    let first = embeddings.first().ok_or(IndexError::Empty)?;
    let dim = first.vector.len();
    let mut seen = HashSet::with_capacity(embeddings.len());
    let mut rows = Vec::with_capacity(embeddings.len() * dim);
    for e in embeddings {
        if !seen.insert(e.id.as_str()) {
            return Err(IndexError::DuplicateId(e.id.clone()));
        }
        if e.vector.len() != dim {
            return Err(IndexError::DimensionMismatch { id: e.id.clone(), expected: dim, found: e.vector.len() });
        }
        if e.layout != first.layout || e.provenance != first.provenance {
            return Err(IndexError::MixedKinds {
                id: e.id.clone(),
                expected: format!("{}/{}", first.layout, first.provenance.as_str()),
                found: format!("{}/{}", e.layout, e.provenance.as_str()),
            });
        }
        let n = norm(&e.vector);
        if !(n > 0.0 && n.is_finite()) {
            return Err(IndexError::ZeroVector(e.id.clone()));
        }
        rows.extend(e.vector.iter().map(|&x| (x as f64 / n) as f32));
    }
    Ok(EmbeddingIndex {
        ids: embeddings.iter().map(|e| e.id.clone()).collect(),
        dim,
        rows,
        layout: first.layout,
        provenance: first.provenance,
        config_hash: 0,
    })
}

/// Orders hits by score descending, then id ascending.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl EmbeddingIndex {
    pub fn with_config_hash(mut self, hash: u64) -> Self {
        self.config_hash = hash;
        self
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Cosine of the query against every row, in index order.
    pub fn scores(&self, q: &[f32]) -> Result<Vec<f64>, IndexError> {
        if q.len() != self.dim {
            return Err(IndexError::DimensionMismatch { id: "<query>".into(), expected: self.dim, found: q.len() });
        }
        let n = norm(q);
        if !(n > 0.0 && n.is_finite()) {
            return Err(IndexError::ZeroQueryVector);
        }
        let q: Vec<f64> = q.iter().map(|&x| x as f64 / n).collect();
        Ok(self.rows.chunks_exact(self.dim).map(|r| r.iter().zip(&q).map(|(&a, b)| a as f64 * b).sum()).collect())
    }

    /// Exact top-k by cosine; `k` is capped at the index size.
    pub fn query_topk(&self, query_id: &str, q: &[f32], k: usize) -> Result<RankedList, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let scores = self.scores(q)?;
        let mut hits: Vec<Hit> = self.ids.iter().zip(scores).map(|(id, score)| Hit { id: id.clone(), score }).collect();
        let k = k.min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        Ok(RankedList { query_id: query_id.to_string(), hits })
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&INDEX_MAGIC)?;
        binio::write_u32(w, INDEX_VERSION)?;
        binio::write_u32(w, self.ids.len() as u32)?;
        binio::write_u32(w, self.dim as u32)?;
        binio::write_u8(w, self.layout.tag())?;
        binio::write_u8(w, self.provenance.tag())?;
        binio::write_u64(w, self.config_hash)?;
        for id in &self.ids {
            binio::write_str(w, id)?;
        }
        binio::write_f32s(w, self.rows.iter().copied())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, FormatError> {
        binio::read_magic(r, INDEX_MAGIC)?;
        let version = binio::read_u32(r)?;
        if version != INDEX_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let count = binio::read_u32(r)? as usize;
        let dim = binio::read_u32(r)? as usize;
        if count == 0 || dim == 0 {
            return Err(FormatError::Invalid("empty index".into()));
        }
        let tag = binio::read_u8(r)?;
        let layout = Layout::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("layout tag {tag}")))?;
        let tag = binio::read_u8(r)?;
        let provenance = Provenance::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("provenance tag {tag}")))?;
        let config_hash = binio::read_u64(r)?;
        let ids = (0..count).map(|_| binio::read_str(r)).collect::<Result<Vec<_>, _>>()?;
        if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
            return Err(FormatError::Invalid("duplicate ids".into()));
        }
        let rows = binio::read_f32s(r, count * dim)?;
        for (id, row) in ids.iter().zip(rows.chunks_exact(dim)) {
            if (norm(row) - 1.0).abs() > 1e-5 {
                return Err(FormatError::Invalid(format!("row {id:?} is not unit length")));
            }
        }
        Ok(Self { ids, dim, rows, layout, provenance, config_hash })
    }
}

/// Writes TREC-style run lines: `query_id formula_id rank score`.
pub fn write_run(lists: &[RankedList], w: &mut impl Write) -> io::Result<()> {
    for list in lists {
        for (rank, hit) in list.hits.iter().enumerate() {
            writeln!(w, "{} {} {} {:.6}", list.query_id, hit.id, rank + 1, hit.score)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(id: &str, v: Vec<f32>) -> FormulaEmbedding {
        FormulaEmbedding { id: id.into(), vector: v, provenance: Provenance::Gcl, layout: Layout::Slt }
    }

    fn unit(dim: usize, at: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[at] = 1.0;
        v
    }

    #[test]
    fn normalizes_rows() {
        let mut v = vec![0.0f32; 100];
        v[0] = 3.0;
        v[1] = 4.0;
        let idx = build_index(&[emb("a", v)]).unwrap();
        assert!((idx.row(0)[0] - 0.6).abs() < 1e-7 && (idx.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn build_errors() {
        assert_eq!(build_index(&[]), Err(IndexError::Empty));
        let dup = [emb("a", unit(3, 0)), emb("a", unit(3, 1))];
        assert_eq!(build_index(&dup), Err(IndexError::DuplicateId("a".into())));
        let zero = [emb("a", unit(3, 0)), emb("z", vec![0.0; 3])];
        assert_eq!(build_index(&zero), Err(IndexError::ZeroVector("z".into())));
        let mut other = emb("b", unit(3, 1));
        other.layout = Layout::Opt;
        assert!(matches!(build_index(&[emb("a", unit(3, 0)), other]), Err(IndexError::MixedKinds { .. })));
    }

    #[test]
    fn hand_computed_ranking() {
        let mut e2 = vec![0.0f32; 100];
        e2[0] = 0.6;
        e2[1] = 0.8;
        let idx = build_index(&[emb("e2", e2), emb("e1", unit(100, 0))]).unwrap();
        let r = idx.query_topk("q", &unit(100, 0), 2).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["e1", "e2"]);
        assert!((r.hits[0].score - 1.0).abs() < 1e-7);
        assert!((r.hits[1].score - 0.6).abs() < 1e-7);
        assert_eq!(idx.query_topk("q", &unit(100, 0), 10).unwrap().hits.len(), 2);
        assert_eq!(idx.query_topk("q", &vec![0.0; 100], 1), Err(IndexError::ZeroQueryVector));
        assert_eq!(idx.query_topk("q", &unit(100, 0), 0), Err(IndexError::ZeroK));
    }

    #[test]
    fn ties_break_by_id() {
        let idx = build_index(&[emb("c", unit(4, 0)), emb("a", unit(4, 0)), emb("b", unit(4, 0))]).unwrap();
        let r = idx.query_topk("q", &unit(4, 0), 2).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn many_rows_are_unit_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let embs: Vec<_> =
            (0..10_000).map(|i| emb(&format!("f{i}"), (0..100).map(|_| rng.random_range(-5.0..5.0)).collect())).collect();
        let idx = build_index(&embs).unwrap();
        for i in 0..idx.len() {
            assert!((norm(idx.row(i)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let idx = build_index(&[emb("x1", unit(5, 2)), emb("x2", vec![1.0, 2.0, 3.0, 4.0, 5.0])]).unwrap().with_config_hash(5);
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MGRI");
        assert_eq!(EmbeddingIndex::read_from(&mut buf.as_slice()).unwrap(), idx);
        buf[0] = b'Z';
        assert!(matches!(EmbeddingIndex::read_from(&mut buf.as_slice()), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn run_lines() {
        let list = RankedList { query_id: "q1".into(), hits: vec![Hit { id: "f".into(), score: 0.5 }] };
        let mut out = Vec::new();
        write_run(&[list], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "q1 f 1 0.500000\n");
    }

    proptest! {
        #[test]
        fn topk_is_a_prefix_of_topk_plus_one(seed in any::<u64>(), n in 1usize..60, k in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse values force ties
            let embs: Vec<_> = (0..n)
                .map(|i| emb(&format!("{:03}", (i * 7919) % 1000), (0..4).map(|_| rng.random_range(-2i32..=2) as f32 + 0.5).collect()))
                .collect();
            let idx = build_index(&embs).unwrap();
            let q: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = idx.query_topk("q", &q, k).unwrap();
            let b = idx.query_topk("q", &q, k + 1).unwrap();
            prop_assert_eq!(&a.hits[..], &b.hits[..a.hits.len()]);
            for w in b.hits.windows(2) {
                prop_assert!(hit_order(&w[0], &w[1]) == Ordering::Less);
            }
        }
    }
}
