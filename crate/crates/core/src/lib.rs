//! Ad-hoc retrieval experimentation engine built around the multi-field Duet
//! ranker (DuetMF).
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`corpus`]: TSV/TREC ingestion, tokenization, positional multi-field
//!   inverted index, passage segmentation, URL domains.
//! - [`lexical`]: query likelihood (Dirichlet), BM25, the sequential
//!   dependence model and passage-based relevance-model expansion.
//! - [`embed`]: skip-gram (negative sampling) IN/OUT embeddings and the four
//!   DESM similarity variants.
//! - [`tensor`]: a small reverse-mode autodiff tape with Adam and RankNet.
//! - [`duet`]: the DuetMF model, structured dropout, triple training,
//!   pseudo-query pretraining and ensembling.
//! - [`ltr`]: feature extraction and the two-hidden-layer neural reranker.
//! - [`eval`]: MRR, NDCG@k, MAP, Recall@k and TREC run files.
//! - [`synth`]: a deterministic synthetic collection with planted relevance.
//! - [`cli`]: the `duetmf` command-line driver.

pub mod cli;
pub mod corpus;
pub mod duet;
pub mod embed;
mod error;
pub mod eval;
pub mod lexical;
pub mod ltr;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
