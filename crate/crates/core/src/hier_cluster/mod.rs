//! Iterative attributed clustering: augment, weight, cluster, summarize and
//! lift to a community graph, layer by layer.

mod graph;
mod hierarchy;
mod leiden;
mod lpa;

pub use graph::{
    augment_knn, edge_weight, weight_edges, AttributedGraph, Augmenter, KnnAugmenter, Provenance, WeightPolicy,
    WeightedEdge, WeightedGraph,
};
pub use hierarchy::{
    build_next_layer, hierarchical_cluster, summarize_community, AttributedCommunity, HierarchyParams, HierarchyTree,
    MemberText, COMMUNITIES_FILE, COMMUNITY_VECTORS_FILE,
};
pub use leiden::{leiden, modularity};
pub use lpa::label_propagation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_gateway::GatewayError;
use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("node {0} has no embedding")]
    MissingEmbedding(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot cluster an empty graph")]
    EmptyGraph,
    #[error("hierarchy invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBackend {
    #[default]
    WeightedLeiden,
    LabelPropagation,
}

/// Partitions the graph; `labels[i]` is the community of node `i`, numbered
/// `0..k` in order of first appearance.
pub fn cluster(graph: &WeightedGraph, backend: ClusterBackend, resolution: f64, seed: u64) -> Vec<usize> {
    match backend {
        ClusterBackend::WeightedLeiden => leiden(graph, resolution, seed),
        ClusterBackend::LabelPropagation => label_propagation(graph, seed),
    }
}
