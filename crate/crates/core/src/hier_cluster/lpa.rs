use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::leiden::compact;
use super::WeightedGraph;

const MAX_SWEEPS: usize = 100;

/// Weighted label propagation. Each node adopts the label with the largest
/// incident weight; a node keeps its label when it is among the best, and
/// otherwise the lowest best label wins.
pub fn label_propagation(graph: &WeightedGraph, seed: u64) -> Vec<usize> {
    let n = graph.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &graph.edges {
        if e.weight > 0.0 {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
    }
    let mut labels: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut weight_to = vec![0.0f64; n];
    let mut touched = Vec::new();
    for _ in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            for &(u, w) in &adj[v] {
                let l = labels[u];
                if weight_to[l] == 0.0 {
                    touched.push(l);
                }
                weight_to[l] += w;
            }
            if touched.is_empty() {
                continue;
            }
            touched.sort_unstable();
            let best_w = touched.iter().map(|&l| weight_to[l]).fold(f64::NEG_INFINITY, f64::max);
            let cur = labels[v];
            if weight_to[cur] < best_w - 1e-12 {
                let best = *touched.iter().find(|&&l| weight_to[l] >= best_w - 1e-12).expect("non-empty");
                labels[v] = best;
                changed = true;
            }
            for &l in &touched {
                weight_to[l] = 0.0;
            }
            touched.clear();
        }
        if !changed {
            break;
        }
    }
    compact(&labels).0
}
