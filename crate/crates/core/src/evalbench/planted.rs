use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{mean_cosine_sim, ClusterAssignment};
use super::synthetic::random_unit_vectors;
use super::EvalError;
use crate::hier_cluster::{cluster, weight_edges, AttributedGraph, Augmenter, HierarchyParams, WeightedGraph};
use crate::llm_gateway::EmbeddingVector;

/// Two structural communities, each made of two attribute groups that the
/// edges do not distinguish.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub group_size: usize,
    pub dimension: usize,
    /// Edge probability inside a structural community.
    pub p_in: f64,
    /// Edge probability across the two communities.
    pub p_out: f64,
    /// Scale of the per-node perturbation around its group direction.
    pub noise: f32,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(seed: u64) -> Self {
        Self { group_size: 12, dimension: 32, p_in: 0.35, p_out: 0.02, noise: 0.35, seed }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: AttributedGraph,
    /// Structural community of each node.
    pub community: Vec<usize>,
    /// Attribute group of each node, `0..4`.
    pub group: Vec<usize>,
}

pub fn planted_attribute_graph(config: &PlantedConfig) -> PlantedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, g) = (config.dimension, config.group_size);
    let centers = random_unit_vectors(4, d, &mut rng);
    let n = 4 * g;
    let group: Vec<usize> = (0..n).map(|i| i / g).collect();
    let community: Vec<usize> = group.iter().map(|k| k / 2).collect();
    let embeddings: Vec<EmbeddingVector> = group
        .iter()
        .map(|&k| {
            let noise = random_unit_vectors(1, d, &mut rng);
            let v = (0..d).map(|j| centers[k * d + j] + config.noise * noise[j]).collect();
            EmbeddingVector::new(v).expect("nonzero perturbed vector")
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community[u] == community[v] { config.p_in } else { config.p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let graph = AttributedGraph::new((0..n as u64).collect(), embeddings, edges).expect("one embedding per node");
    PlantedGraph { graph, community, group }
}

/// Sim of the partition `labels` over the graph embeddings.
pub fn partition_sim(graph: &AttributedGraph, labels: &[usize]) -> Result<f64, EvalError> {
    let points = graph.embeddings.iter().map(|e| e.values().iter().map(|&x| x as f64).collect()).collect();
    mean_cosine_sim(&ClusterAssignment::new(points, labels.to_vec())?)
}

/// Sim of one attributed clustering round (augment, weight, cluster) and of
/// clustering the original edges with unit weights, in that order.
pub fn compare_clustering_sim(graph: &AttributedGraph, params: &HierarchyParams) -> Result<(f64, f64), EvalError> {
    let err = |e: crate::hier_cluster::ClusterError| EvalError::Config(e.to_string());
    let weighted = weight_edges(params.augmenter.augment(graph).map_err(err)?, params.weight_policy);
    let attributed = cluster(&weighted, params.backend, params.resolution, params.seed);
    let structural = cluster(&WeightedGraph::structural(graph), params.backend, params.resolution, params.seed);
    Ok((partition_sim(graph, &attributed)?, partition_sim(graph, &structural)?))
}
