use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{LayerGraph, LayerInput};
use super::search::{distance, Scored, SearchStats, VisitedSet};
use super::{ChnswError, ChnswParams};

/// Builds all layers top-down. `inputs[0]` is the bottom layer. Returns the
/// layers bottom-first and, for every layer `i >= 1`, the local index of
/// each node's link target in layer `i - 1` (`inter[0]` is empty).
pub(crate) fn build_layers(
    inputs: Vec<LayerInput>,
    params: &ChnswParams,
) -> Result<(Vec<LayerGraph>, Vec<Vec<u32>>), ChnswError> {
    params.validate()?;
    if inputs.is_empty() {
        return Err(ChnswError::EmptyLayer(0));
    }
    if let Some(i) = inputs.iter().position(LayerInput::is_empty) {
        return Err(ChnswError::EmptyLayer(i));
    }
    let dimension = inputs[0].vectors.len() / inputs[0].len();
    let top = inputs.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut visited = VisitedSet::default();
    let mut built: Vec<Option<LayerGraph>> = (0..=top).map(|_| None).collect();
    let mut inter: Vec<Vec<u32>> = vec![Vec::new(); top + 1];

    for (i, input) in inputs.into_iter().enumerate().rev() {
        let mut g = LayerGraph::unlinked(i, input, dimension)?;
        let mut dists: Vec<Vec<f32>> = vec![Vec::new(); g.len()];
        let upper = if i < top { built[i + 1].as_ref() } else { None };
        let mut psi: Vec<Option<Scored>> = vec![None; upper.map_or(0, LayerGraph::len)];
        for j in 0..g.len() as u32 {
            let v = g.vector(j).to_vec();
            let mut entry = None;
            if let Some(up) = upper {
                let mut stats = SearchStats::default();
                let c = up.search_local(&v, 0, 1, params.ef_construction, &mut visited, &mut stats, None)[0];
                let slot = &mut psi[c.idx as usize];
                entry = slot.map(|p| p.idx);
                let candidate = Scored { dist: c.dist, idx: j };
                if slot.is_none_or(|p| candidate < p) {
                    *slot = Some(candidate);
                }
            }
            if j == 0 {
                continue;
            }
            let entry = entry.unwrap_or_else(|| rng.random_range(0..j));
            let mut stats = SearchStats::default();
            let found = g.search_local(&v, entry, params.m, params.ef_construction, &mut visited, &mut stats, None);
            for s in found {
                link(&mut g, &mut dists, j, s);
                prune(&mut g, &mut dists, s.idx, params.m);
            }
        }
        fill_deficits(&mut g, &mut dists, params.m);
        connect_components(&mut g, &mut dists);
        if let Some(up) = upper {
            inter[i + 1] = assign_links(up, &g, psi, params, &mut visited);
        }
        for list in &mut g.adjacency {
            list.sort_unstable();
        }
        built[i] = Some(g);
    }
    let layers = built.into_iter().map(|g| g.expect("every layer built")).collect();
    Ok((layers, inter))
}

fn link(g: &mut LayerGraph, dists: &mut [Vec<f32>], u: u32, v: Scored) {
    if g.adjacency[u as usize].contains(&v.idx) {
        return;
    }
    g.adjacency[u as usize].push(v.idx);
    dists[u as usize].push(v.dist);
    g.adjacency[v.idx as usize].push(u);
    dists[v.idx as usize].push(v.dist);
}

fn unlink(g: &mut LayerGraph, dists: &mut [Vec<f32>], u: u32, v: u32) {
    for (a, b) in [(u, v), (v, u)] {
        if let Some(p) = g.adjacency[a as usize].iter().position(|&x| x == b) {
            g.adjacency[a as usize].swap_remove(p);
            dists[a as usize].swap_remove(p);
        }
    }
}

/// Drops the furthest neighbour of `u` once it has more than `2m`, skipping
/// any neighbour that would fall to `m` links or fewer.
fn prune(g: &mut LayerGraph, dists: &mut [Vec<f32>], u: u32, m: usize) {
    while g.adjacency[u as usize].len() > 2 * m {
        let mut by_dist: Vec<Scored> = g.adjacency[u as usize]
            .iter()
            .zip(&dists[u as usize])
            .map(|(&w, &dist)| Scored { dist, idx: w })
            .collect();
        by_dist.sort_unstable_by(|a, b| b.cmp(a));
        match by_dist.into_iter().find(|s| g.adjacency[s.idx as usize].len() > m) {
            Some(s) => unlink(g, dists, u, s.idx),
            None => break,
        }
    }
}

/// Gives every node at least `min(m, n - 1)` neighbours, linking it to its
/// exact nearest non-neighbours.
fn fill_deficits(g: &mut LayerGraph, dists: &mut [Vec<f32>], m: usize) {
    let target = m.min(g.len() - 1);
    for u in 0..g.len() as u32 {
        if g.adjacency[u as usize].len() >= target {
            continue;
        }
        let mut all: Vec<Scored> = (0..g.len() as u32)
            .filter(|&w| w != u)
            .map(|w| Scored { dist: distance(g.vector(u), g.vector(w)), idx: w })
            .collect();
        all.sort_unstable();
        for s in all {
            if g.adjacency[u as usize].len() >= target {
                break;
            }
            link(g, dists, u, s);
        }
    }
}

/// Joins every component not containing node 0 to the rest of the layer
/// through the exact nearest outside node of its lowest-index member.
fn connect_components(g: &mut LayerGraph, dists: &mut [Vec<f32>]) {
    let n = g.len();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for root in 0..n {
        if comp[root] != usize::MAX {
            continue;
        }
        let mut stack = vec![root];
        comp[root] = count;
        while let Some(u) = stack.pop() {
            for &v in &g.adjacency[u] {
                if comp[v as usize] == usize::MAX {
                    comp[v as usize] = count;
                    stack.push(v as usize);
                }
            }
        }
        count += 1;
    }
    if count == 1 {
        return;
    }
    log::debug!("layer {}: joining {count} components", g.layer_index());
    // Components are numbered by lowest member, so joining each to the
    // lower-numbered ones yields a single component.
    let mut first = vec![usize::MAX; count];
    for (u, &c) in comp.iter().enumerate() {
        if first[c] == usize::MAX {
            first[c] = u;
        }
    }
    for c in 1..count {
        let u = first[c] as u32;
        let best = (0..n as u32)
            .filter(|&w| comp[w as usize] < c)
            .map(|w| Scored { dist: distance(g.vector(u), g.vector(w)), idx: w })
            .min()
            .expect("component 0 is non-empty");
        link(g, dists, u, best);
    }
}

/// Completes the downward links of `upper` into `lower`: nodes without a
/// link get their exact nearest node, then every link is replaced by a
/// closer node found by searching `lower` from the current target.
fn assign_links(
    upper: &LayerGraph,
    lower: &LayerGraph,
    mut psi: Vec<Option<Scored>>,
    params: &ChnswParams,
    visited: &mut VisitedSet,
) -> Vec<u32> {
    let unlinked: Vec<u32> = (0..psi.len() as u32).filter(|&c| psi[c as usize].is_none()).collect();
    let missing = unlinked.len();
    let queries: Vec<&[f32]> = unlinked.iter().map(|&c| upper.vector(c)).collect();
    for (&c, best) in unlinked.iter().zip(lower.exact_nearest_many(&queries)) {
        psi[c as usize] = Some(best);
    }
    log::debug!("layer {}: {missing} of {} nodes linked exactly", upper.layer_index(), upper.len());
    psi.into_iter()
        .enumerate()
        .map(|(c, slot)| {
            let current = slot.expect("all links assigned");
            let q = upper.vector(c as u32);
            let mut stats = SearchStats::default();
            let best = lower.search_local(q, current.idx, 1, params.ef_construction, visited, &mut stats, None)[0];
            if best < current {
                best.idx
            } else {
                current.idx
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::random_unit_vectors;
    use proptest::prelude::*;

    fn params(m: usize) -> ChnswParams {
        ChnswParams { m, ef_construction: 16, ef_search: 16, seed: 1 }
    }

    fn inputs(sizes: &[usize], dim: usize, seed: u64) -> Vec<LayerInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = 0u64;
        sizes
            .iter()
            .map(|&n| {
                let ids = (next..next + n as u64).collect();
                next += n as u64;
                LayerInput::new(ids, random_unit_vectors(n, dim, &mut rng))
            })
            .collect()
    }

    #[test]
    fn toy_links_are_exact_and_total() {
        for seed in 0..20 {
            let (layers, inter) = build_layers(inputs(&[4, 2, 1], 3, seed), &params(2)).unwrap();
            for i in 1..layers.len() {
                assert_eq!(inter[i].len(), layers[i].len());
                for (c, &t) in inter[i].iter().enumerate() {
                    assert_eq!(t, layers[i - 1].exact_nearest(layers[i].vector(c as u32)), "seed {seed} layer {i}");
                }
            }
            assert!(inter[0].is_empty());
        }
    }

    #[test]
    fn duplicate_vectors_build() {
        let input = LayerInput::new(vec![5, 1, 3], [0.6f32, 0.8].repeat(3));
        let (layers, _) = build_layers(vec![input], &params(2)).unwrap();
        let g = &layers[0];
        assert_eq!(g.node_ids(), &[1, 3, 5]);
        assert!(g.is_connected());
        assert_eq!(g.exact_nearest(&[0.6, 0.8]), 0);
    }

    #[test]
    fn rejects_empty_layers() {
        assert!(matches!(build_layers(vec![], &params(2)), Err(ChnswError::EmptyLayer(0))));
        let mut ins = inputs(&[3], 2, 0);
        ins.push(LayerInput::new(vec![], vec![]));
        assert!(matches!(build_layers(ins, &params(2)), Err(ChnswError::EmptyLayer(1))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn adjacency_symmetric_with_min_degree(n in 1usize..150, m in 2usize..6, seed in 0u64..1000) {
            let (layers, _) = build_layers(inputs(&[n], 8, seed), &ChnswParams { seed, ..params(m) }).unwrap();
            let g = &layers[0];
            prop_assert!(g.is_symmetric());
            prop_assert!(g.is_connected());
            for id in g.node_ids() {
                prop_assert!(g.degree(*id) >= m.min(n - 1));
                prop_assert!(!g.neighbors(*id).contains(id));
            }
        }
    }
}
