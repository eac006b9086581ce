use serde::Serialize;

use super::build::build_layers;
use super::layer::{LayerGraph, LayerInput};
use super::search::{SearchStats, VisitedSet};
use super::{ChnswError, ChnswParams};
use crate::corpus_kg::KnowledgeGraph;
use crate::hier_cluster::HierarchyTree;

/// Multi-layer proximity index. Layer 0 holds entities, layer `L` is the top;
/// every node of layer `i >= 1` has one downward link into layer `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChnswIndex {
    pub(crate) layers: Vec<LayerGraph>,
    pub(crate) inter: Vec<Vec<u32>>,
    pub(crate) params: ChnswParams,
}

/// Hits of one layer, ascending by distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerHits {
    pub layer: usize,
    pub entry: u64,
    pub hits: Vec<(u64, f32)>,
    #[serde(skip)]
    pub stats: SearchStats,
    #[serde(skip)]
    pub elapsed: std::time::Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub k: usize,
    /// Top layer first.
    pub per_layer: Vec<LayerHits>,
}

impl SearchResult {
    pub fn layer(&self, layer: usize) -> Option<&LayerHits> {
        self.per_layer.iter().find(|h| h.layer == layer)
    }

    pub fn total_stats(&self) -> SearchStats {
        let mut s = SearchStats::default();
        for h in &self.per_layer {
            s += h.stats;
        }
        s
    }
}

impl ChnswIndex {
    /// Builds from per-layer inputs, bottom layer first.
    pub fn build(inputs: Vec<LayerInput>, params: ChnswParams) -> Result<Self, ChnswError> {
        let (layers, inter) = build_layers(inputs, &params)?;
        Ok(Self { layers, inter, params })
    }

    /// Entities at layer 0 and the communities of each tree layer above.
    pub fn from_hierarchy(tree: &HierarchyTree, kg: &KnowledgeGraph, params: ChnswParams) -> Result<Self, ChnswError> {
        let mut inputs = Vec::with_capacity(tree.num_community_layers() + 1);
        let mut bottom = LayerInput::new(Vec::with_capacity(kg.len()), Vec::new());
        for e in &kg.entities {
            let v = e.embedding.as_ref().ok_or(ChnswError::MissingEmbedding(e.entity_id))?;
            bottom.node_ids.push(e.entity_id);
            bottom.vectors.extend_from_slice(v.values());
        }
        inputs.push(bottom);
        for layer in 1..=tree.num_community_layers() {
            let mut input = LayerInput::new(Vec::new(), Vec::new());
            for c in tree.layer_communities(layer) {
                let v = c.embedding.as_ref().ok_or(ChnswError::MissingEmbedding(c.community_id))?;
                input.node_ids.push(c.community_id);
                input.vectors.extend_from_slice(v.values());
            }
            inputs.push(input);
        }
        Self::build(inputs, params)
    }

    pub fn params(&self) -> &ChnswParams {
        &self.params
    }

    /// Number of layers, `L + 1`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn top_layer(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, i: usize) -> &LayerGraph {
        &self.layers[i]
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    pub fn dimension(&self) -> usize {
        self.layers[0].dimension()
    }

    /// Downward link target of node `id` on `layer`.
    pub fn psi(&self, layer: usize, id: u64) -> Option<u64> {
        if layer == 0 || layer >= self.layers.len() {
            return None;
        }
        let local = self.layers[layer].position(id)?;
        let target = *self.inter[layer].get(local)?;
        Some(self.layers[layer - 1].node_id(target))
    }

    /// Deterministic pseudo-random top-layer start for `q`.
    pub fn start_node(&self, q: &[f32]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.params.seed;
        for x in q {
            h ^= x.to_bits() as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let top = &self.layers[self.top_layer()];
        top.node_id((h % top.len() as u64) as u32)
    }

    /// Top-`k` per layer, searching each layer from the downward link of the
    /// best hit one layer up.
    pub fn hierarchical_search(&self, q: &[f32], k: usize) -> Result<SearchResult, ChnswError> {
        self.hierarchical_search_from(q, k, self.start_node(q))
    }

    pub fn hierarchical_search_from(&self, q: &[f32], k: usize, start: u64) -> Result<SearchResult, ChnswError> {
        if q.len() != self.dimension() {
            return Err(ChnswError::DimensionMismatch { layer: self.top_layer(), expected: self.dimension(), found: q.len() });
        }
        if k == 0 {
            return Err(ChnswError::InvalidParameter("k must be >= 1".into()));
        }
        let top = self.top_layer();
        let mut entry = self.layers[top]
            .position(start)
            .ok_or(ChnswError::StartNotInLayer { layer: top, node: start })? as u32;
        let mut visited = VisitedSet::default();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for i in (0..=top).rev() {
            let layer = &self.layers[i];
            let mut stats = SearchStats::default();
            let t = std::time::Instant::now();
            let r = layer.search_local(q, entry, k, self.params.ef_search, &mut visited, &mut stats, None);
            let elapsed = t.elapsed();
            per_layer.push(LayerHits { layer: i, entry: layer.node_id(entry), hits: layer.to_ids(&r), stats, elapsed });
            if i > 0 {
                entry = self.inter[i][r[0].idx as usize];
            }
        }
        Ok(SearchResult { k, per_layer })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::random_unit_vectors;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64) -> (ChnswIndex, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [4usize, 2, 1]
            .iter()
            .scan(0u64, |next, &n| {
                let ids = (*next..*next + n as u64).collect();
                *next += n as u64;
                Some(LayerInput::new(ids, random_unit_vectors(n, 3, &mut rng)))
            })
            .collect();
        let params = ChnswParams { m: 2, ef_construction: 8, ef_search: 8, seed };
        (ChnswIndex::build(inputs, params).unwrap(), rng)
    }

    #[test]
    fn toy_hierarchical_nearest_is_exact() {
        for seed in 0..10 {
            let (index, mut rng) = toy(seed);
            for q in random_unit_vectors(10, 3, &mut rng).chunks(3) {
                let r = index.hierarchical_search(q, 1).unwrap();
                assert_eq!(r.per_layer.iter().map(|h| h.layer).collect::<Vec<_>>(), vec![2, 1, 0]);
                for h in &r.per_layer {
                    assert_eq!(h.hits[0].0, index.layer(h.layer).brute_force(q, 1)[0].0);
                }
            }
        }
    }

    #[test]
    fn psi_total_and_one_layer_has_none() {
        let (index, _) = toy(3);
        for l in 1..3 {
            for &id in index.layer(l).node_ids() {
                let t = index.psi(l, id).unwrap();
                assert!(index.layer(l - 1).position(t).is_some());
            }
        }
        let single = ChnswIndex::build(vec![LayerInput::new(vec![7, 8], vec![1.0, 0.0, 0.0, 1.0])], ChnswParams::default()).unwrap();
        assert_eq!(single.num_layers(), 1);
        assert_eq!(single.psi(0, 7), None);
    }

    #[test]
    fn one_layer_matches_search_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let input = LayerInput::new((0..200).collect(), random_unit_vectors(200, 8, &mut rng));
        let index = ChnswIndex::build(vec![input], ChnswParams { m: 4, ef_construction: 16, ef_search: 10, seed: 0 }).unwrap();
        for q in random_unit_vectors(20, 8, &mut rng).chunks(8) {
            let r = index.hierarchical_search(q, 5).unwrap();
            let (direct, stats) = index.layer(0).search_layer(q, index.start_node(q), 5, 10).unwrap();
            assert_eq!(r.per_layer[0].hits, direct);
            assert_eq!(r.total_stats(), stats);
        }
    }

    #[test]
    fn replay_is_identical() {
        let (a, mut rng) = toy(5);
        let (b, _) = toy(5);
        let q = random_unit_vectors(1, 3, &mut rng);
        assert_eq!(a.hierarchical_search(&q, 2).unwrap().per_layer.iter().map(|h| h.hits.clone()).collect::<Vec<_>>(),
                   b.hierarchical_search(&q, 2).unwrap().per_layer.iter().map(|h| h.hits.clone()).collect::<Vec<_>>());
        assert!(matches!(a.hierarchical_search(&q[..2], 1), Err(ChnswError::DimensionMismatch { .. })));
        assert!(matches!(a.hierarchical_search(&q, 0), Err(ChnswError::InvalidParameter(_))));
    }
}
