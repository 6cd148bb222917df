use std::collections::HashMap;
use std::io::{Read, Write};

use crate::binio::{self, FormatError};

pub const TABLE_MAGIC: [u8; 4] = *b"MGTE";
pub const TABLE_VERSION: u32 = 1;

/// Dimension of token and formula embeddings.
pub const EMBEDDING_DIM: usize = 100;
pub const MIN_NGRAM: usize = 3;
pub const MAX_NGRAM: usize = 6;

/// 32-bit FNV-1a, the hash fastText uses for subword buckets.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Character n-grams (lengths 3 to 6) of `<token>`.
pub fn char_ngrams(token: &str) -> Vec<String> {
    if token.is_empty() {
        return Vec::new();
    }
    let wrapped: Vec<char> = format!("<{token}>").chars().collect();
    let mut out = Vec::new();
    for start in 0..wrapped.len() {
        for n in MIN_NGRAM..=MAX_NGRAM {
            if start + n > wrapped.len() {
                break;
            }
            out.push(wrapped[start..start + n].iter().collect());
        }
    }
    out
}

pub fn ngram_buckets(token: &str, bucket_count: usize) -> Vec<usize> {
    char_ngrams(token).iter().map(|g| fnv1a(g.as_bytes()) as usize % bucket_count).collect()
}

/// Where a looked-up vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupSource {
    Vocabulary,
    /// Out of vocabulary; composed from hashed n-gram vectors.
    Subword,
    /// No n-grams could be extracted; the vector is all zeros.
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub values: Vec<f32>,
    pub source: LookupSource,
}

impl TokenEmbedding {
    pub fn is_degenerate(&self) -> bool {
        self.source == LookupSource::Empty
    }
}

/// Token vectors plus the hashed n-gram vectors used for unseen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    bucket_count: usize,
    buckets: Vec<f32>,
    config_hash: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vocab: Vec<String>, vectors: Vec<f32>, bucket_count: usize, buckets: Vec<f32>) -> Self {
        assert_eq!(vectors.len(), vocab.len() * dim, "vocabulary rows");
        assert_eq!(buckets.len(), bucket_count * dim, "bucket rows");
        assert!(bucket_count > 0, "at least one bucket");
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { dim, vocab, index, vectors, bucket_count, buckets, config_hash: 0 }
    }

    pub fn with_config_hash(mut self, hash: u64) -> Self {
        self.config_hash = hash;
        self
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    fn bucket(&self, b: usize) -> &[f32] {
        &self.buckets[b * self.dim..(b + 1) * self.dim]
    }

    /// Total lookup: vocabulary vector, else the mean of the token's n-gram bucket vectors,
    /// else a zero vector flagged [`LookupSource::Empty`].
    pub fn embed_token(&self, token: &str) -> TokenEmbedding {
        if let Some(v) = self.vector(token) {
            return TokenEmbedding { values: v.to_vec(), source: LookupSource::Vocabulary };
        }
        let ids = ngram_buckets(token, self.bucket_count);
        if ids.is_empty() {
            log::warn!("token {token:?} has no character n-grams; using a zero vector");
            return TokenEmbedding { values: vec![0.0; self.dim], source: LookupSource::Empty };
        }
        let mut values = vec![0.0f32; self.dim];
        for &b in &ids {
            for (acc, x) in values.iter_mut().zip(self.bucket(b)) {
                *acc += x;
            }
        }
        let scale = 1.0 / ids.len() as f32;
        values.iter_mut().for_each(|x| *x *= scale);
        TokenEmbedding { values, source: LookupSource::Subword }
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&TABLE_MAGIC)?;
        binio::write_u32(w, TABLE_VERSION)?;
        binio::write_u32(w, self.dim as u32)?;
        binio::write_u32(w, self.vocab.len() as u32)?;
        binio::write_u32(w, self.bucket_count as u32)?;
        binio::write_u64(w, self.config_hash)?;
        for t in &self.vocab {
            binio::write_str(w, t)?;
        }
        binio::write_f32s(w, self.vectors.iter().copied())?;
        binio::write_f32s(w, self.buckets.iter().copied())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, FormatError> {
        binio::read_magic(r, TABLE_MAGIC)?;
        let version = binio::read_u32(r)?;
        if version != TABLE_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let dim = binio::read_u32(r)? as usize;
        let vocab_len = binio::read_u32(r)? as usize;
        let bucket_count = binio::read_u32(r)? as usize;
        if dim == 0 || bucket_count == 0 {
            return Err(FormatError::Invalid("zero dimension or bucket count".into()));
        }
        let config_hash = binio::read_u64(r)?;
        let vocab = (0..vocab_len).map(|_| binio::read_str(r)).collect::<Result<Vec<_>, _>>()?;
        let vectors = binio::read_f32s(r, vocab_len * dim)?;
        let buckets = binio::read_f32s(r, bucket_count * dim)?;
        if vectors.iter().chain(&buckets).any(|x| !x.is_finite()) {
            return Err(FormatError::Invalid("non-finite embedding component".into()));
        }
        Ok(Self::new(dim, vocab, vectors, bucket_count, buckets).with_config_hash(config_hash))
    }
}
