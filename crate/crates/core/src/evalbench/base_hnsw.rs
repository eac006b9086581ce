//! Per-layer baseline: one independent multi-level navigable index per layer,
//! each searched from its own top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chnsw::{beam_search, distance, ChnswParams, LayerInput, Scored, SearchStats, VisitedSet};

/// Single-layer index with its own internal entry levels.
#[derive(Debug, Clone)]
pub struct BaseHnsw {
    node_ids: Vec<u64>,
    dimension: usize,
    vectors: Vec<f32>,
    /// `links[level][node]`; empty for nodes below `level`.
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    params: ChnswParams,
}

impl BaseHnsw {
    pub fn build(input: &LayerInput, dimension: usize, params: ChnswParams) -> Self {
        let n = input.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                ((-u.ln()) * ml).floor() as usize
            })
            .collect();
        let top = levels.iter().copied().max().unwrap_or(0);
        let mut index = Self {
            node_ids: input.node_ids.clone(),
            dimension,
            vectors: input.vectors.clone(),
            links: vec![vec![Vec::new(); n]; top + 1],
            entry: 0,
            params,
        };
        let mut visited = VisitedSet::new(n);
        let mut max_level = levels.first().copied().unwrap_or(0);
        for q in 1..n as u32 {
            let level = levels[q as usize];
            let v = index.vector(q).to_vec();
            let mut stats = SearchStats::default();
            let mut ep = index.entry;
            for lc in (level + 1..=max_level).rev() {
                ep = index.search_level(&v, ep, 1, lc, &mut visited, &mut stats)[0].idx;
            }
            for lc in (0..=level.min(max_level)).rev() {
                let found = index.search_level(&v, ep, params.ef_construction, lc, &mut visited, &mut stats);
                let cap = if lc == 0 { 2 * params.m } else { params.m };
                for s in found.iter().take(params.m) {
                    index.links[lc][q as usize].push(s.idx);
                    index.links[lc][s.idx as usize].push(q);
                    index.shrink(s.idx, lc, cap);
                }
                ep = found[0].idx;
            }
            if level > max_level {
                max_level = level;
                index.entry = q;
            }
        }
        index.links.truncate(max_level + 1);
        index
    }

    fn vector(&self, i: u32) -> &[f32] {
        let d = self.dimension;
        &self.vectors[i as usize * d..(i as usize + 1) * d]
    }

    fn search_level(
        &self,
        q: &[f32],
        ep: u32,
        ef: usize,
        level: usize,
        visited: &mut VisitedSet,
        stats: &mut SearchStats,
    ) -> Vec<Scored> {
        let links = &self.links[level];
        beam_search(self.node_ids.len(), ep, ef, |i| distance(self.vector(i), q), |i| &links[i as usize], visited, stats, None)
    }

    /// Keeps the `cap` nearest links of `u` on `level`.
    fn shrink(&mut self, u: u32, level: usize, cap: usize) {
        if self.links[level][u as usize].len() <= cap {
            return;
        }
        let mut scored: Vec<Scored> = self.links[level][u as usize]
            .iter()
            .map(|&w| Scored { dist: distance(self.vector(u), self.vector(w)), idx: w })
            .collect();
        scored.sort_unstable();
        self.links[level][u as usize] = scored.into_iter().take(cap).map(|s| s.idx).collect();
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.links.len()
    }

    /// Top-`k` ids with distances, and the distance evaluations spent.
    pub fn search(&self, q: &[f32], k: usize) -> (Vec<(u64, f32)>, SearchStats) {
        let mut visited = VisitedSet::new(self.len());
        let mut stats = SearchStats::default();
        let mut ep = self.entry;
        for level in (1..self.links.len()).rev() {
            ep = self.search_level(q, ep, 1, level, &mut visited, &mut stats)[0].idx;
        }
        let mut r = self.search_level(q, ep, self.params.ef_search.max(k), 0, &mut visited, &mut stats);
        r.truncate(k);
        (r.iter().map(|s| (self.node_ids[s.idx as usize], s.dist)).collect(), stats)
    }
}

/// One baseline index per layer.
#[derive(Debug, Clone)]
pub struct BaseHnswSet {
    pub layers: Vec<BaseHnsw>,
}

impl BaseHnswSet {
    pub fn build(inputs: &[LayerInput], dimension: usize, params: ChnswParams) -> Self {
        Self { layers: inputs.iter().map(|l| BaseHnsw::build(l, dimension, params)).collect() }
    }

    /// Per-layer results bottom first.
    pub fn search(&self, q: &[f32], k: usize) -> Vec<(Vec<(u64, f32)>, SearchStats)> {
        self.layers.iter().map(|l| l.search(q, k)).collect()
    }
}

/// Per-layer baseline search over a set of layers; returns per-layer hits
/// and distance-evaluation counts, bottom first.
pub fn base_hnsw_search(
    set: &BaseHnswSet,
    queries: &[Vec<f32>],
    k: usize,
) -> Vec<Vec<(Vec<(u64, f32)>, SearchStats)>> {
    queries.iter().map(|q| set.search(q, k)).collect()
}
