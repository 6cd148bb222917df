//! Token embeddings learned from random walks over formula trees.

mod skipgram;
mod table;
mod walks;

pub use skipgram::{train_subword_skipgram, NegativeSampler, SkipGramConfig, TrainTokensError};
pub use table::{
    char_ngrams, fnv1a, ngram_buckets, EmbeddingTable, LookupSource, TokenEmbedding, EMBEDDING_DIM, TABLE_MAGIC,
    TABLE_VERSION,
};
pub use walks::{relation_token, sample_corpus, sample_walks, WalkCorpus, RELATION_PREFIX};
