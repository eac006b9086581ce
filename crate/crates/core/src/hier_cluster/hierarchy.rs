use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cluster, weight_edges, AttributedGraph, Augmenter, ClusterBackend, ClusterError, KnnAugmenter, WeightPolicy};
use crate::corpus_kg::KnowledgeGraph;
use crate::llm_gateway::{ChatRequest, EmbeddingVector, Gateway};
use crate::prompts;
use crate::storage;
use crate::text::{collapse_whitespace, truncate_tokens};

pub const COMMUNITIES_FILE: &str = "communities.jsonl";
pub const COMMUNITY_VECTORS_FILE: &str = "community_vectors.bin";

/// Tokens kept per member description in a summarization prompt.
const MEMBER_DESCRIPTION_TOKENS: usize = 200;
/// Tokens of a child summary used as the child's name one layer up.
const MEMBER_NAME_TOKENS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedCommunity {
    pub community_id: u64,
    pub layer: usize,
    /// Node ids one layer down: entity ids at layer 1, community ids above.
    pub members: Vec<u64>,
    pub parent: Option<u64>,
    pub summary: String,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyParams {
    pub max_layers: usize,
    pub min_nodes: usize,
    pub augmenter: KnnAugmenter,
    pub weight_policy: WeightPolicy,
    pub backend: ClusterBackend,
    pub resolution: f64,
    pub seed: u64,
    pub embed_batch: usize,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            max_layers: 3,
            min_nodes: 10,
            augmenter: KnnAugmenter::default(),
            weight_policy: WeightPolicy::Affinity,
            backend: ClusterBackend::WeightedLeiden,
            resolution: 1.0,
            seed: 0,
            embed_batch: 64,
        }
    }
}

/// Layer 0 holds entity ids, layers `1..=L` community ids. Community ids are
/// dense across all layers and index `communities`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HierarchyTree {
    pub layers: Vec<Vec<u64>>,
    pub communities: Vec<AttributedCommunity>,
    entity_parents: Vec<Option<u64>>,
}

impl HierarchyTree {
    pub fn new(entity_count: usize, communities: Vec<AttributedCommunity>) -> Result<Self, ClusterError> {
        let mut layers: Vec<Vec<u64>> = vec![(0..entity_count as u64).collect()];
        for c in &communities {
            if c.layer == 0 {
                return Err(ClusterError::Invariant(format!("community {} on layer 0", c.community_id)));
            }
            while layers.len() <= c.layer {
                layers.push(Vec::new());
            }
            layers[c.layer].push(c.community_id);
        }
        let mut entity_parents = vec![None; entity_count];
        for c in communities.iter().filter(|c| c.layer == 1) {
            for &m in &c.members {
                if let Some(slot) = entity_parents.get_mut(m as usize) {
                    *slot = Some(c.community_id);
                }
            }
        }
        let tree = Self { layers, communities, entity_parents };
        tree.validate()?;
        Ok(tree)
    }

    /// Number of community layers `L`.
    pub fn num_community_layers(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    pub fn entity_count(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    pub fn community(&self, id: u64) -> Option<&AttributedCommunity> {
        self.communities.get(id as usize)
    }

    pub fn layer_communities(&self, layer: usize) -> impl Iterator<Item = &AttributedCommunity> + '_ {
        let ids: &[u64] = if layer == 0 { &[] } else { self.layers.get(layer).map_or(&[], Vec::as_slice) };
        ids.iter().map(move |&id| &self.communities[id as usize])
    }

    /// Parent community of node `id` on `layer`.
    pub fn parent_of(&self, layer: usize, id: u64) -> Option<u64> {
        if layer == 0 {
            self.entity_parents.get(id as usize).copied().flatten()
        } else {
            self.community(id).and_then(|c| c.parent)
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::Invariant(m));
        for (i, c) in self.communities.iter().enumerate() {
            if c.community_id != i as u64 {
                return bad(format!("community at row {i} has id {}", c.community_id));
            }
            if c.members.is_empty() {
                return bad(format!("community {i} has no members"));
            }
            if c.summary.trim().is_empty() {
                return bad(format!("community {i} has an empty summary"));
            }
        }
        for layer in 1..self.layers.len() {
            let below = &self.layers[layer - 1];
            if self.layers[layer].len() >= below.len() {
                return bad(format!("layer {layer} does not shrink"));
            }
            let mut seen = BTreeSet::new();
            for c in self.layer_communities(layer) {
                for &m in &c.members {
                    if !seen.insert(m) {
                        return bad(format!("node {m} of layer {} is in two communities", layer - 1));
                    }
                    if layer > 1 {
                        match self.community(m) {
                            Some(child) if child.layer == layer - 1 && child.parent == Some(c.community_id) => {}
                            _ => return bad(format!("community {m} does not point to parent {}", c.community_id)),
                        }
                    }
                }
            }
            let all: BTreeSet<u64> = below.iter().copied().collect();
            if seen != all {
                return bad(format!("layer {layer} does not cover layer {}", layer - 1));
            }
        }
        let top = self.layers.len() - 1;
        for c in &self.communities {
            if (c.layer == top) != c.parent.is_none() {
                return bad(format!("community {} has a wrong parent link", c.community_id));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), ClusterError> {
        storage::write_jsonl(&dir.join(COMMUNITIES_FILE), &self.communities)?;
        let vectors = self
            .communities
            .iter()
            .map(|c| c.embedding.as_ref().map(|e| e.values()).ok_or(ClusterError::MissingEmbedding(c.community_id)))
            .collect::<Result<Vec<_>, _>>()?;
        storage::write_vectors(&dir.join(COMMUNITY_VECTORS_FILE), vectors)?;
        Ok(())
    }

    pub fn load(dir: &Path, entity_count: usize) -> Result<Self, ClusterError> {
        let mut communities: Vec<AttributedCommunity> = storage::read_jsonl(&dir.join(COMMUNITIES_FILE))?;
        let vectors = storage::read_vectors(&dir.join(COMMUNITY_VECTORS_FILE), communities.len())?;
        for (c, v) in communities.iter_mut().zip(vectors) {
            c.embedding = Some(EmbeddingVector::from_normalized(v));
        }
        Self::new(entity_count, communities)
    }
}

/// A member as presented to the summarizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemberText {
    pub name: String,
    pub description: String,
}

/// Summary of a community from its member texts. Falls back to the sorted
/// member names joined with `"; "` when the gateway fails.
pub fn summarize_community(gateway: &Gateway, members: &[MemberText]) -> String {
    let mut names: Vec<&str> = members.iter().map(|m| m.name.as_str()).collect();
    names.sort_unstable();
    let fallback = names.join("; ");
    let shown: Vec<MemberText> = members
        .iter()
        .map(|m| MemberText {
            name: m.name.clone(),
            description: truncate_tokens(&m.description, MEMBER_DESCRIPTION_TOKENS).to_string(),
        })
        .collect();
    let list = serde_json::to_string(&shown).unwrap_or_default();
    let prompt = prompts::render(prompts::SUMMARIZE, &[("members", &list)]);
    match ChatRequest::new(prompt).and_then(|req| gateway.chat(&req)) {
        Ok(resp) => collapse_whitespace(&resp.text),
        Err(e) => {
            log::warn!("community summary failed, using member names: {e}");
            fallback
        }
    }
}

/// Community graph one layer up: one node per label, an edge between two
/// communities iff some edge joins their members. `node_ids` and
/// `embeddings` are indexed by label.
pub fn build_next_layer(
    labels: &[usize],
    edges: impl IntoIterator<Item = (usize, usize)>,
    node_ids: Vec<u64>,
    embeddings: Vec<EmbeddingVector>,
) -> Result<AttributedGraph, ClusterError> {
    let lifted = edges.into_iter().map(|(u, v)| (labels[u], labels[v]));
    AttributedGraph::new(node_ids, embeddings, lifted)
}

fn member_name(summary: &str) -> String {
    let first = summary.split(". ").next().unwrap_or(summary);
    truncate_tokens(first, MEMBER_NAME_TOKENS).trim_end_matches('.').to_string()
}

/// Builds the community hierarchy of `kg`.
///
/// Each round augments the current graph, weights it, clusters it, and
/// summarizes and embeds every community. The loop stops before a round when
/// the graph has fewer than `min_nodes` nodes or `max_layers` layers exist,
/// after a round that produced a single community, and without adding a
/// layer when clustering leaves every node alone.
pub fn hierarchical_cluster(
    gateway: &Gateway,
    kg: &KnowledgeGraph,
    params: &HierarchyParams,
) -> Result<HierarchyTree, ClusterError> {
    if kg.is_empty() {
        return Err(ClusterError::EmptyGraph);
    }
    if params.max_layers == 0 {
        return Err(ClusterError::InvalidParameter("max_layers must be >= 1".into()));
    }
    let mut graph = AttributedGraph::from_kg(kg)?;
    let mut texts: Vec<MemberText> = kg
        .entities
        .iter()
        .map(|e| MemberText { name: e.name.clone(), description: e.description.clone() })
        .collect();
    let mut communities: Vec<AttributedCommunity> = Vec::new();
    let mut layer = 0;
    loop {
        if graph.len() < params.min_nodes || layer >= params.max_layers {
            break;
        }
        let weighted = weight_edges(params.augmenter.augment(&graph)?, params.weight_policy);
        let labels = cluster(&weighted, params.backend, params.resolution, params.seed.wrapping_add(layer as u64));
        let count = labels.iter().max().map_or(0, |m| m + 1);
        if count == graph.len() {
            log::info!("layer {}: clustering did not merge any nodes, stopping", layer + 1);
            break;
        }
        layer += 1;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); count];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        let summaries = gateway.fan_out(&groups, |g| {
            let members: Vec<MemberText> = g.iter().map(|&i| texts[i].clone()).collect();
            summarize_community(gateway, &members)
        });
        let embeddings = gateway.embed_batched(&summaries, params.embed_batch)?;
        let base = communities.len() as u64;
        if layer > 1 {
            for (i, &l) in labels.iter().enumerate() {
                communities[graph.node_ids[i] as usize].parent = Some(base + l as u64);
            }
        }
        for (l, (g, (summary, embedding))) in groups.iter().zip(summaries.iter().zip(&embeddings)).enumerate() {
            communities.push(AttributedCommunity {
                community_id: base + l as u64,
                layer,
                members: g.iter().map(|&i| graph.node_ids[i]).collect(),
                parent: None,
                summary: summary.clone(),
                embedding: Some(embedding.clone()),
            });
        }
        log::info!("layer {layer}: {} nodes -> {count} communities", graph.len());
        let ids: Vec<u64> = (0..count as u64).map(|l| base + l).collect();
        let edges: Vec<(usize, usize)> = weighted.edges.iter().map(|e| (e.u, e.v)).collect();
        graph = build_next_layer(&labels, edges, ids, embeddings)?;
        texts = summaries
            .iter()
            .map(|s| MemberText { name: member_name(s), description: s.clone() })
            .collect();
        if count == 1 {
            break;
        }
    }
    HierarchyTree::new(kg.len(), communities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_kg::{Entity, Relation};
    use crate::llm_gateway::{Backend, ChatResponse, GatewayConfig, GatewayError, MockBackend};

    fn unit(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn kg(points: &[&[f32]], edges: &[(u64, u64)]) -> KnowledgeGraph {
        let entities = points
            .iter()
            .enumerate()
            .map(|(i, p)| Entity {
                entity_id: i as u64,
                name: format!("E{i}"),
                description: format!("entity number {i}"),
                source_chunks: [0].into(),
                embedding: Some(unit(p)),
            })
            .collect();
        let relations = edges
            .iter()
            .enumerate()
            .map(|(i, &(h, t))| Relation {
                relation_id: i as u64,
                head: h,
                tail: t,
                description: "linked".into(),
                source_chunks: [0].into(),
            })
            .collect();
        KnowledgeGraph::new(entities, relations).unwrap()
    }

    fn two_clique_kg() -> KnowledgeGraph {
        let a: &[f32] = &[1.0, 0.05, 0.0];
        let b: &[f32] = &[0.0, 0.05, 1.0];
        kg(&[a, a, a, b, b, b], &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)])
    }

    fn gw() -> Gateway {
        Gateway::mock(MockBackend::default())
    }

    #[test]
    fn single_entity_has_no_community_layer() {
        let g = kg(&[&[1.0, 0.0]], &[]);
        let tree = hierarchical_cluster(&gw(), &g, &HierarchyParams::default()).unwrap();
        assert_eq!(tree.num_community_layers(), 0);
        assert!(tree.communities.is_empty());
    }

    #[test]
    fn two_cliques_give_two_layers() {
        let params = HierarchyParams { max_layers: 3, min_nodes: 2, ..Default::default() };
        let tree = hierarchical_cluster(&gw(), &two_clique_kg(), &params).unwrap();
        assert_eq!(tree.num_community_layers(), 2);
        assert_eq!(tree.layers[1].len(), 2);
        assert_eq!(tree.layers[2].len(), 1);
        let mut members: Vec<Vec<u64>> = tree.layer_communities(1).map(|c| c.members.clone()).collect();
        members.sort();
        assert_eq!(members, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        for e in 0..6 {
            assert!(tree.parent_of(0, e).is_some());
        }
        let root = tree.layer_communities(2).next().unwrap();
        assert_eq!(root.parent, None);
        assert_eq!(tree.parent_of(1, 0), Some(root.community_id));
    }

    #[test]
    fn max_layers_one_forces_single_layer() {
        let params = HierarchyParams { max_layers: 1, min_nodes: 2, ..Default::default() };
        let tree = hierarchical_cluster(&gw(), &two_clique_kg(), &params).unwrap();
        assert_eq!(tree.num_community_layers(), 1);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let params = HierarchyParams { min_nodes: 2, seed: 9, ..Default::default() };
        let a = hierarchical_cluster(&gw(), &two_clique_kg(), &params).unwrap();
        let b = hierarchical_cluster(&gw(), &two_clique_kg(), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_roundtrip() {
        let params = HierarchyParams { min_nodes: 2, ..Default::default() };
        let tree = hierarchical_cluster(&gw(), &two_clique_kg(), &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        tree.save(dir.path()).unwrap();
        let back = HierarchyTree::load(dir.path(), 6).unwrap();
        assert_eq!(back, tree);
    }

    fn members(names: &[&str]) -> Vec<MemberText> {
        names
            .iter()
            .map(|n| MemberText { name: n.to_string(), description: format!("about {n}") })
            .collect()
    }

    #[test]
    fn mock_summary_mentions_all_members() {
        let s = summarize_community(&gw(), &members(&["SAM ALTMAN", "OPENAI", "MICROSOFT"]));
        assert_eq!(s, "Summary of: MICROSOFT, OPENAI, SAM ALTMAN");
        let single = summarize_community(&gw(), &members(&["OPENAI"]));
        assert_eq!(single, "about OPENAI");
    }

    #[test]
    fn failed_summary_falls_back_to_names() {
        struct Down;
        impl Backend for Down {
            fn chat(&self, _: &ChatRequest) -> Result<ChatResponse, GatewayError> {
                Err(GatewayError::Network("down".into()))
            }
            fn embed(&self, _: &[String]) -> Result<(Vec<Vec<f32>>, u64), GatewayError> {
                Err(GatewayError::Network("down".into()))
            }
            fn name(&self) -> &'static str {
                "down"
            }
        }
        let g = Gateway::new(
            Box::new(Down),
            GatewayConfig { backoff_base: std::time::Duration::ZERO, ..Default::default() },
        );
        let s = summarize_community(&g, &members(&["SAM ALTMAN", "OPENAI", "MICROSOFT"]));
        assert_eq!(s, "MICROSOFT; OPENAI; SAM ALTMAN");
    }

    fn lift(labels: &[usize], edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
        let count = labels.iter().max().unwrap() + 1;
        let g = build_next_layer(
            labels,
            edges.iter().copied(),
            (0..count as u64).collect(),
            (0..count).map(|_| unit(&[1.0])).collect(),
        )
        .unwrap();
        g.edges
    }

    #[test]
    fn lifting_cross_edges() {
        assert_eq!(lift(&[0, 0, 1, 1], &[(0, 1), (1, 2), (2, 3)]), vec![(0, 1)]);
        // cross-edge enumeration oracle
        let labels = [0, 0, 1, 1, 2, 2];
        let edges = [(0, 1), (1, 2), (0, 3), (3, 4), (4, 5), (2, 3)];
        let mut expected = BTreeSet::new();
        for &(u, v) in &edges {
            let (a, b) = (labels[u], labels[v]);
            if a != b {
                expected.insert((a.min(b), a.max(b)));
            }
        }
        let got: BTreeSet<(usize, usize)> = lift(&labels, &edges).into_iter().collect();
        assert_eq!(got, expected);
        assert_eq!(got, [(0, 1), (1, 2)].into());
        assert!(lift(&[0, 0, 1, 1], &[(0, 1), (2, 3)]).is_empty());
    }
}
