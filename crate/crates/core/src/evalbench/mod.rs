//! QA and clustering metrics, the synthetic layered dataset, a planted
//! attribute graph, an
//! independent per-layer HNSW baseline and the benchmark runner.

mod base_hnsw;
mod bench;
mod metrics;
mod planted;
mod synthetic;

pub use base_hnsw::{base_hnsw_search, BaseHnsw, BaseHnswSet};
pub use bench::{run_benchmark, BenchConfig, BenchReport, BenchRow, BASE_HNSW, CHNSW, CSV_HEADER};
pub use metrics::{chi, mean_cosine_sim, qa_accuracy, qa_recall, ClusterAssignment, QaRecord};
pub use planted::{compare_clustering_sim, partition_sim, planted_attribute_graph, PlantedConfig, PlantedGraph};
pub use synthetic::{
    gen_synthetic_hierarchy, layer_sizes, random_unit_vectors, DivisorChoice, SyntheticConfig, SyntheticHierarchy,
    MIN_DIVISIBLE_SIZE,
};

use crate::chnsw::ChnswError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid cluster assignment: {0}")]
    InvalidAssignment(String),
    #[error("at least two clusters are required")]
    SingleCluster,
    #[error("within-cluster dispersion is zero")]
    DegenerateDispersion,
    #[error("point or centroid {0} has zero norm")]
    ZeroVector(usize),
    #[error("benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    Index(#[from] ChnswError),
}
