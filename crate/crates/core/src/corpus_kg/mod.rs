//! Corpus ingestion and knowledge-graph construction: chunking, per-chunk
//! extraction through the gateway, and merging of chunk subgraphs.

mod chunk;
mod extract;
mod graph;
mod merge;

pub use chunk::{chunk_corpus, reassemble, Chunk, Document};
pub use extract::{extract_all, extract_subgraph, parse_extraction, RawEntity, RawRelation, Subgraph};
pub use graph::{Entity, KnowledgeGraph, Relation, ENTITIES_FILE, ENTITY_VECTORS_FILE, RELATIONS_FILE};
pub use merge::merge_subgraphs;

use std::path::Path;

use thiserror::Error;

use crate::llm_gateway::GatewayError;
use crate::storage::{self, StorageError};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid chunking: size {chunk_size}, overlap {overlap} (need size > overlap >= 0)")]
    InvalidChunking { chunk_size: usize, overlap: usize },
    #[error("no entities were extracted from the corpus")]
    EmptyGraph,
    #[error("entity {0} has no embedding")]
    MissingEmbedding(u64),
    #[error("knowledge graph invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// Reads a JSONL corpus of `{"doc_id": ..., "text": ...}` objects.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, KgError> {
    Ok(storage::read_jsonl(path)?)
}
