use super::search::{beam_search, distance, Scored, SearchStats, VisitedSet};
use super::ChnswError;

/// One index layer: nodes sorted by id, their vectors (row-major) and
/// symmetric adjacency lists of local indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub(crate) layer_index: usize,
    pub(crate) node_ids: Vec<u64>,
    pub(crate) dimension: usize,
    pub(crate) vectors: Vec<f32>,
    pub(crate) adjacency: Vec<Vec<u32>>,
}

/// Node ids and unit vectors of one layer, in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInput {
    pub node_ids: Vec<u64>,
    pub vectors: Vec<f32>,
}

impl LayerInput {
    pub fn new(node_ids: Vec<u64>, vectors: Vec<f32>) -> Self {
        Self { node_ids, vectors }
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

impl LayerGraph {
    /// Layer without edges; nodes are reordered by id.
    pub(crate) fn unlinked(layer_index: usize, input: LayerInput, dimension: usize) -> Result<Self, ChnswError> {
        let n = input.node_ids.len();
        if n == 0 {
            return Err(ChnswError::EmptyLayer(layer_index));
        }
        if dimension == 0 || input.vectors.len() != n * dimension {
            return Err(ChnswError::DimensionMismatch { layer: layer_index, expected: dimension, found: input.vectors.len() / n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| input.node_ids[i]);
        if order.windows(2).any(|w| input.node_ids[w[0]] == input.node_ids[w[1]]) {
            return Err(ChnswError::InvalidParameter(format!("duplicate node id in layer {layer_index}")));
        }
        let node_ids = order.iter().map(|&i| input.node_ids[i]).collect();
        let mut vectors = Vec::with_capacity(n * dimension);
        for &i in &order {
            vectors.extend_from_slice(&input.vectors[i * dimension..(i + 1) * dimension]);
        }
        Ok(Self { layer_index, node_ids, dimension, vectors, adjacency: vec![Vec::new(); n] })
    }

    /// Layer with a caller-supplied graph given as id pairs; edges are
    /// symmetrized and deduplicated.
    pub fn from_edges(
        layer_index: usize,
        input: LayerInput,
        dimension: usize,
        edges: &[(u64, u64)],
    ) -> Result<Self, ChnswError> {
        let mut g = Self::unlinked(layer_index, input, dimension)?;
        for &(a, b) in edges {
            let (Some(u), Some(v)) = (g.position(a), g.position(b)) else {
                return Err(ChnswError::StartNotInLayer { layer: layer_index, node: if g.position(a).is_none() { a } else { b } });
            };
            if u != v {
                g.link(u as u32, v as u32);
            }
        }
        for list in &mut g.adjacency {
            list.sort_unstable();
        }
        Ok(g)
    }

    pub(crate) fn link(&mut self, u: u32, v: u32) {
        if !self.adjacency[u as usize].contains(&v) {
            self.adjacency[u as usize].push(v);
            self.adjacency[v as usize].push(u);
        }
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn node_id(&self, local: u32) -> u64 {
        self.node_ids[local as usize]
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.node_ids.binary_search(&id).ok()
    }

    pub fn vector(&self, local: u32) -> &[f32] {
        let d = self.dimension;
        &self.vectors[local as usize * d..(local as usize + 1) * d]
    }

    pub fn vector_of(&self, id: u64) -> Option<&[f32]> {
        self.position(id).map(|i| self.vector(i as u32))
    }

    /// Neighbour ids of a node.
    pub fn neighbors(&self, id: u64) -> Vec<u64> {
        self.position(id)
            .map(|i| self.adjacency[i].iter().map(|&j| self.node_ids[j as usize]).collect())
            .unwrap_or_default()
    }

    pub(crate) fn adjacency(&self, local: u32) -> &[u32] {
        &self.adjacency[local as usize]
    }

    pub fn degree(&self, id: u64) -> usize {
        self.position(id).map_or(0, |i| self.adjacency[i].len())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .all(|(u, list)| list.iter().all(|&v| self.adjacency[v as usize].contains(&(u as u32))))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v as usize);
                }
            }
        }
        count == self.len()
    }

    /// Search by local index; returns the `k` best of an `ef`-wide beam.
    pub(crate) fn search_local(
        &self,
        q: &[f32],
        start: u32,
        k: usize,
        ef: usize,
        visited: &mut VisitedSet,
        stats: &mut SearchStats,
        trace: Option<&mut Vec<f32>>,
    ) -> Vec<Scored> {
        let mut r = beam_search(
            self.len(),
            start,
            ef.max(k),
            |i| distance(self.vector(i), q),
            |i| self.adjacency(i),
            visited,
            stats,
            trace,
        );
        r.truncate(k);
        r
    }

    /// The `k` nearest nodes to `q` found from `start`, as `(id, distance)`
    /// ascending, with the number of distance evaluations.
    pub fn search_layer(
        &self,
        q: &[f32],
        start: u64,
        k: usize,
        ef: usize,
    ) -> Result<(Vec<(u64, f32)>, SearchStats), ChnswError> {
        let s = self
            .position(start)
            .ok_or(ChnswError::StartNotInLayer { layer: self.layer_index, node: start })?;
        if k == 0 {
            return Err(ChnswError::InvalidParameter("k must be >= 1".into()));
        }
        let mut visited = VisitedSet::new(self.len());
        let mut stats = SearchStats::default();
        let r = self.search_local(q, s as u32, k, ef, &mut visited, &mut stats, None);
        Ok((self.to_ids(&r), stats))
    }

    /// Like [`search_layer`](Self::search_layer), also returning the furthest
    /// result distance after every change to a full result set.
    pub fn search_layer_traced(
        &self,
        q: &[f32],
        start: u64,
        k: usize,
        ef: usize,
    ) -> Result<(Vec<(u64, f32)>, Vec<f32>), ChnswError> {
        let s = self
            .position(start)
            .ok_or(ChnswError::StartNotInLayer { layer: self.layer_index, node: start })?;
        let mut visited = VisitedSet::new(self.len());
        let mut stats = SearchStats::default();
        let mut trace = Vec::new();
        let r = self.search_local(q, s as u32, k.max(1), ef, &mut visited, &mut stats, Some(&mut trace));
        Ok((self.to_ids(&r), trace))
    }

    pub(crate) fn to_ids(&self, r: &[Scored]) -> Vec<(u64, f32)> {
        r.iter().map(|s| (self.node_ids[s.idx as usize], s.dist)).collect()
    }

    /// Exact nearest node to `q`, ties to the lowest id.
    pub fn exact_nearest(&self, q: &[f32]) -> u32 {
        let mut best = Scored { dist: f32::INFINITY, idx: 0 };
        for i in 0..self.len() as u32 {
            let s = Scored { dist: distance(self.vector(i), q), idx: i };
            if s < best {
                best = s;
            }
        }
        best.idx
    }

    /// [`exact_nearest`](Self::exact_nearest) for many queries, scanning the
    /// layer in cache-sized blocks.
    pub(crate) fn exact_nearest_many(&self, queries: &[&[f32]]) -> Vec<Scored> {
        const QUERY_TILE: usize = 64;
        const NODE_TILE: usize = 512;
        let mut best = vec![Scored { dist: f32::INFINITY, idx: 0 }; queries.len()];
        for (qt, bt) in queries.chunks(QUERY_TILE).zip(best.chunks_mut(QUERY_TILE)) {
            for start in (0..self.len()).step_by(NODE_TILE) {
                let end = (start + NODE_TILE).min(self.len());
                for (q, b) in qt.iter().zip(bt.iter_mut()) {
                    for i in start as u32..end as u32 {
                        let s = Scored { dist: distance(self.vector(i), q), idx: i };
                        if s < *b {
                            *b = s;
                        }
                    }
                }
            }
        }
        best
    }

    /// Exact top-`k` by brute force, as `(id, distance)` ascending.
    pub fn brute_force(&self, q: &[f32], k: usize) -> Vec<(u64, f32)> {
        let mut all: Vec<Scored> =
            (0..self.len() as u32).map(|i| Scored { dist: distance(self.vector(i), q), idx: i }).collect();
        let k = k.min(all.len());
        if k == 0 {
            return Vec::new();
        }
        all.select_nth_unstable(k - 1);
        all.truncate(k);
        all.sort_unstable();
        self.to_ids(&all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::random_unit_vectors;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn complete(n: usize, dim: usize, seed: u64) -> LayerGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u64> = (0..n as u64).map(|i| 10 * i + 3).collect();
        let edges: Vec<(u64, u64)> =
            ids.iter().flat_map(|&a| ids.iter().filter(move |&&b| b > a).map(move |&b| (a, b))).collect();
        LayerGraph::from_edges(0, LayerInput::new(ids, random_unit_vectors(n, dim, &mut rng)), dim, &edges).unwrap()
    }

    #[test]
    fn single_node_layer() {
        let g = LayerGraph::from_edges(2, LayerInput::new(vec![42], vec![1.0, 0.0]), 2, &[]).unwrap();
        let (hits, _) = g.search_layer(&[0.0, 1.0], 42, 1, 10).unwrap();
        assert_eq!(hits, vec![(42, 1.0)]);
        assert!(g.is_connected());
    }

    #[test]
    fn complete_layer_top2_from_any_start() {
        let g = complete(5, 8, 3);
        let q = g.vector(4).iter().map(|x| -x).collect::<Vec<f32>>();
        let mut oracle: Vec<(u64, f32)> = g.node_ids().iter().map(|&id| (id, distance(g.vector_of(id).unwrap(), &q))).collect();
        oracle.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for &start in g.node_ids() {
            let (hits, _) = g.search_layer(&q, start, 2, 2).unwrap();
            assert_eq!(hits, oracle[..2].to_vec());
        }
    }

    #[test]
    fn k_beyond_layer_returns_everything() {
        let g = complete(5, 4, 9);
        let (hits, _) = g.search_layer(g.vector(0), 3, 50, 1).unwrap();
        assert_eq!(hits.len(), 5);
    }

    #[test]
    fn bad_start_and_shapes() {
        let g = complete(3, 4, 1);
        assert!(matches!(g.search_layer(g.vector(0), 999, 1, 4), Err(ChnswError::StartNotInLayer { node: 999, .. })));
        assert!(matches!(g.search_layer(g.vector(0), 3, 0, 4), Err(ChnswError::InvalidParameter(_))));
        let dup = LayerGraph::from_edges(0, LayerInput::new(vec![1, 1], vec![1.0; 4]), 2, &[]);
        assert!(matches!(dup, Err(ChnswError::InvalidParameter(_))));
        let short = LayerGraph::from_edges(0, LayerInput::new(vec![1, 2], vec![1.0; 3]), 2, &[]);
        assert!(matches!(short, Err(ChnswError::DimensionMismatch { .. })));
        assert!(matches!(LayerGraph::from_edges(4, LayerInput::new(vec![], vec![]), 2, &[]), Err(ChnswError::EmptyLayer(4))));
    }

    #[test]
    fn tiled_exact_nearest_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1300;
        let g = LayerGraph::from_edges(0, LayerInput::new((0..n as u64).collect(), random_unit_vectors(n, 16, &mut rng)), 16, &[]).unwrap();
        let qs = random_unit_vectors(70, 16, &mut rng);
        let queries: Vec<&[f32]> = qs.chunks(16).collect();
        for (q, best) in queries.iter().zip(g.exact_nearest_many(&queries)) {
            assert_eq!(best.idx, g.exact_nearest(q));
            assert_eq!(g.brute_force(q, 1)[0].0, best.idx as u64);
        }
    }
}
