use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::corpus_kg::KnowledgeGraph;
use crate::llm_gateway::EmbeddingVector;

/// Nodes with embeddings and unweighted undirected edges, stored once as
/// `(u, v)` local indices with `u < v`. This is the input of one clustering
/// round: the knowledge graph at the bottom, a community graph above.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    pub node_ids: Vec<u64>,
    pub embeddings: Vec<EmbeddingVector>,
    pub edges: Vec<(usize, usize)>,
}

impl AttributedGraph {
    pub fn new(
        node_ids: Vec<u64>,
        embeddings: Vec<EmbeddingVector>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ClusterError> {
        if node_ids.len() != embeddings.len() {
            return Err(ClusterError::MissingEmbedding(node_ids.get(embeddings.len()).copied().unwrap_or(0)));
        }
        let n = node_ids.len();
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(u, v)| u != v && *u < n && *v < n)
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        Ok(Self { node_ids, embeddings, edges: set.into_iter().collect() })
    }

    pub fn from_kg(kg: &KnowledgeGraph) -> Result<Self, ClusterError> {
        let embeddings = kg
            .entities
            .iter()
            .map(|e| e.embedding.clone().ok_or(ClusterError::MissingEmbedding(e.entity_id)))
            .collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<u64> = kg.entities.iter().map(|e| e.entity_id).collect();
        let edges = kg.undirected_edges().into_iter().map(|(u, v)| (u as usize, v as usize));
        Self::new(ids, embeddings, edges)
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn average_degree(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.len() as f64
        }
    }

    /// KNN neighbor count used when none is configured: the rounded average
    /// degree, at least 1.
    pub fn default_knn_k(&self) -> usize {
        (self.average_degree().round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub provenance: Provenance,
}

/// Augmented graph with edge weights in `[0, 1]`; edges stored once with
/// `u < v`, no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub node_ids: Vec<u64>,
    pub embeddings: Vec<EmbeddingVector>,
    pub edges: Vec<WeightedEdge>,
}

impl WeightedGraph {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Uniform weights on the original edges only, no augmentation.
    pub fn structural(graph: &AttributedGraph) -> Self {
        Self {
            node_ids: graph.node_ids.clone(),
            embeddings: graph.embeddings.clone(),
            edges: graph
                .edges
                .iter()
                .map(|&(u, v)| WeightedEdge { u, v, weight: 1.0, provenance: Provenance::Original })
                .collect(),
        }
    }
}

/// Graph augmentation strategy.
pub trait Augmenter {
    fn augment(&self, graph: &AttributedGraph) -> Result<WeightedGraph, ClusterError>;
}

/// Links every node to its `k` most cosine-similar nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnAugmenter {
    /// `None` uses [`AttributedGraph::default_knn_k`].
    pub k: Option<usize>,
    /// Minimum cosine similarity for an augmented edge.
    pub similarity_floor: f32,
}

impl Default for KnnAugmenter {
    fn default() -> Self {
        Self { k: None, similarity_floor: 0.0 }
    }
}

impl Augmenter for KnnAugmenter {
    fn augment(&self, graph: &AttributedGraph) -> Result<WeightedGraph, ClusterError> {
        let k = self.k.unwrap_or_else(|| graph.default_knn_k()).max(1);
        augment_knn(graph, k, self.similarity_floor)
    }
}

/// Original edges plus, for every node `u`, edges to its `k` nearest nodes
/// by cosine similarity (ties to the lower index). Augmented edges that
/// duplicate an original edge keep the original provenance. All weights
/// start at 1.
pub fn augment_knn(graph: &AttributedGraph, k: usize, similarity_floor: f32) -> Result<WeightedGraph, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidParameter("k_neighbors must be >= 1".into()));
    }
    let n = graph.len();
    let mut provenance: std::collections::BTreeMap<(usize, usize), Provenance> =
        graph.edges.iter().map(|&e| (e, Provenance::Original)).collect();
    let mut sims: Vec<(f32, usize)> = Vec::with_capacity(n);
    for u in 0..n {
        sims.clear();
        let zu = &graph.embeddings[u];
        for v in (0..n).filter(|&v| v != u) {
            sims.push((zu.dot(&graph.embeddings[v]), v));
        }
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(s, v) in sims.iter().take(k) {
            if s < similarity_floor {
                break;
            }
            provenance.entry((u.min(v), u.max(v))).or_insert(Provenance::Augmented);
        }
    }
    Ok(WeightedGraph {
        node_ids: graph.node_ids.clone(),
        embeddings: graph.embeddings.clone(),
        edges: provenance
            .into_iter()
            .map(|((u, v), provenance)| WeightedEdge { u, v, weight: 1.0, provenance })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// `max(cos, 0)`: weight as attribute similarity.
    #[default]
    Affinity,
    /// `1 - cos` clipped to `[0, 1]`: weight as attribute distance.
    Distance,
}

pub fn edge_weight(cos: f64, policy: WeightPolicy) -> f64 {
    match policy {
        WeightPolicy::Affinity => cos.clamp(0.0, 1.0),
        WeightPolicy::Distance => (1.0 - cos).clamp(0.0, 1.0),
    }
}

/// Reweights every edge from its endpoint embeddings.
pub fn weight_edges(mut graph: WeightedGraph, policy: WeightPolicy) -> WeightedGraph {
    for e in &mut graph.edges {
        let cos = graph.embeddings[e.u].dot(&graph.embeddings[e.v]) as f64;
        e.weight = edge_weight(cos, policy);
    }
    graph
}
