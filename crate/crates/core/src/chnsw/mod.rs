//! Multi-layer proximity index over entities and communities. Each layer is a
//! navigable graph of its own nodes; downward links carry search entry
//! points from one layer to the next.

mod build;
mod index;
mod layer;
mod persist;
mod search;

pub use index::{ChnswIndex, LayerHits, SearchResult};
pub use layer::{LayerGraph, LayerInput};
pub use persist::{load_index, read_manifest, save_index, IndexManifest, FORMAT_VERSION, INTER_FILE, MANIFEST_FILE};
pub use search::{beam_search, distance, Scored, SearchStats, VisitedSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum ChnswError {
    #[error("node {node} is not in layer {layer}")]
    StartNotInLayer { layer: usize, node: u64 },
    #[error("layer {0} is empty")]
    EmptyLayer(usize),
    #[error("layer {layer}: expected dimension {expected}, found {found}")]
    DimensionMismatch { layer: usize, expected: usize, found: usize },
    #[error("node {0} has no embedding")]
    MissingEmbedding(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index format version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u64 },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChnswParams {
    /// Neighbours linked per insertion; lists are pruned beyond `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for ChnswParams {
    fn default() -> Self {
        Self { m: 32, ef_construction: 100, ef_search: 100, seed: 0 }
    }
}

impl ChnswParams {
    pub fn validate(&self) -> Result<(), ChnswError> {
        if self.m == 0 || self.ef_construction == 0 || self.ef_search == 0 {
            return Err(ChnswError::InvalidParameter("m, ef_construction and ef_search must be >= 1".into()));
        }
        Ok(())
    }
}
