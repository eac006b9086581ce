//! Weighted modularity optimization in the Leiden style: fast local moving,
//! refinement within communities, aggregation on the refined partition.
//!
//! Node visiting order is a seeded shuffle. Among equally good moves the
//! lowest community label wins, and a node only leaves its community for a
//! strictly better one, so results are deterministic per seed.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::WeightedGraph;

const EPS: f64 = 1e-12;
const MAX_LEVELS: usize = 64;

/// Undirected weighted graph in adjacency-list form with self-loop weights.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    /// Node strength: incident weight with self-loops counted twice.
    strength: Vec<f64>,
    /// Sum of strengths (twice the total edge weight).
    total: f64,
}

impl Network {
    pub(crate) fn from_weighted(graph: &WeightedGraph) -> Self {
        let n = graph.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in &graph.edges {
            if e.weight > 0.0 && e.u != e.v {
                adj[e.u].push((e.v, e.weight));
                adj[e.v].push((e.u, e.weight));
            }
        }
        Self::from_parts(adj, vec![0.0; n])
    }

    fn from_parts(mut adj: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        for list in &mut adj {
            list.sort_by_key(|(v, _)| *v);
        }
        let strength: Vec<f64> = adj
            .iter()
            .zip(&self_loops)
            .map(|(list, s)| list.iter().map(|(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total = strength.iter().sum();
        Self { adj, self_loops, strength, total }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn aggregate(&self, labels: &[usize], count: usize) -> Network {
        let mut acc: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        let mut self_loops = vec![0.0; count];
        for v in 0..self.len() {
            let cv = labels[v];
            self_loops[cv] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                let cu = labels[u];
                if cu == cv {
                    // each internal edge is seen from both ends
                    self_loops[cv] += w / 2.0;
                } else {
                    *acc[cv].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        let adj = acc.into_iter().map(|m| m.into_iter().collect()).collect();
        Network::from_parts(adj, self_loops)
    }
}

/// Weighted modularity `Q = 1/2m Σ_ij (A_ij - γ k_i k_j / 2m) δ(c_i, c_j)`.
pub fn modularity(graph: &WeightedGraph, labels: &[usize], resolution: f64) -> f64 {
    let net = Network::from_weighted(graph);
    if net.total <= 0.0 {
        return 0.0;
    }
    let count = labels.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; count];
    let mut tot = vec![0.0; count];
    for v in 0..net.len() {
        tot[labels[v]] += net.strength[v];
        for &(u, w) in &net.adj[v] {
            if labels[u] == labels[v] {
                internal[labels[v]] += w;
            }
        }
    }
    (0..count)
        .map(|c| internal[c] / net.total - resolution * (tot[c] / net.total).powi(2))
        .sum()
}

/// Renumbers labels `0..k` in order of first appearance.
pub(crate) fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect();
    (out, next)
}

/// Partition of the graph's nodes; labels are compact and numbered in order
/// of first appearance.
pub fn leiden(graph: &WeightedGraph, resolution: f64, seed: u64) -> Vec<usize> {
    let n = graph.len();
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::from_weighted(graph);
    if net.total <= 0.0 {
        return (0..n).collect();
    }
    // aggregate node currently holding each original node
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut partition: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_LEVELS {
        move_nodes_fast(&net, &mut partition, resolution, &mut rng);
        let (p, count) = compact(&partition);
        partition = p;
        if count == net.len() {
            break;
        }
        let refined = refine(&net, &partition, resolution, &mut rng);
        let (refined, refined_count) = compact(&refined);
        // refinement that found nothing to merge would aggregate to the same
        // network; fall back to the unrefined partition
        let (agg_labels, agg_count) =
            if refined_count == net.len() { (partition.clone(), count) } else { (refined, refined_count) };
        let mut next_partition = vec![0; agg_count];
        for v in 0..net.len() {
            next_partition[agg_labels[v]] = partition[v];
        }
        net = net.aggregate(&agg_labels, agg_count);
        for o in node_of.iter_mut() {
            *o = agg_labels[*o];
        }
        partition = next_partition;
    }
    let flat: Vec<usize> = node_of.iter().map(|&a| partition[a]).collect();
    compact(&flat).0
}

fn move_nodes_fast(net: &Network, labels: &mut [usize], resolution: f64, rng: &mut ChaCha8Rng) -> bool {
    let n = net.len();
    let label_space = n;
    let mut tot = vec![0.0; label_space];
    let mut size = vec![0usize; label_space];
    for v in 0..n {
        tot[labels[v]] += net.strength[v];
        size[labels[v]] += 1;
    }
    let mut free: Vec<usize> = (0..label_space).filter(|&l| size[l] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into_iter().collect();
    let mut queued = vec![true; n];
    let mut weight_to = vec![0.0; label_space];
    let mut touched: Vec<usize> = Vec::new();
    let m2 = net.total;
    let mut changed = false;
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let cur = labels[v];
        let kv = net.strength[v];
        for &(u, w) in &net.adj[v] {
            let c = labels[u];
            if weight_to[c] == 0.0 {
                touched.push(c);
            }
            weight_to[c] += w;
        }
        tot[cur] -= kv;
        size[cur] -= 1;
        let mut best = cur;
        let mut best_gain = weight_to[cur] - resolution * kv * tot[cur] / m2;
        touched.sort_unstable();
        for &c in &touched {
            let gain = weight_to[c] - resolution * kv * tot[c] / m2;
            if gain > best_gain + EPS {
                best = c;
                best_gain = gain;
            }
        }
        if size[cur] > 0 && best_gain < -EPS {
            // isolating v beats every neighbouring community
            if let Some(l) = free.pop() {
                best = l;
            }
        }
        for &c in &touched {
            weight_to[c] = 0.0;
        }
        touched.clear();
        tot[best] += kv;
        size[best] += 1;
        if best != cur {
            if size[cur] == 0 {
                free.push(cur);
            }
            if let Some(pos) = free.iter().position(|&l| l == best) {
                free.remove(pos);
            }
            labels[v] = best;
            changed = true;
            for &(u, _) in &net.adj[v] {
                if !queued[u] && labels[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    changed
}

fn refine(net: &Network, partition: &[usize], resolution: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = net.len();
    let m2 = net.total;
    let count = partition.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for v in 0..n {
        members[partition[v]].push(v);
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_tot: Vec<f64> = net.strength.clone();
    let mut r_size = vec![1usize; n];
    // weight from a refined community to the rest of its parent community
    let mut r_ext = vec![0.0; n];
    let mut weight_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    for group in members.iter_mut() {
        let c_tot: f64 = group.iter().map(|&v| net.strength[v]).sum();
        for &v in group.iter() {
            r_ext[v] = net.adj[v].iter().filter(|(u, _)| partition[*u] == partition[v]).map(|(_, w)| w).sum();
        }
        group.shuffle(rng);
        for &v in group.iter() {
            if r_size[refined[v]] != 1 {
                continue;
            }
            let kv = net.strength[v];
            if r_ext[v] + EPS < resolution * kv * (c_tot - kv) / m2 {
                continue;
            }
            for &(u, w) in &net.adj[v] {
                if partition[u] != partition[v] {
                    continue;
                }
                let r = refined[u];
                if weight_to[r] == 0.0 {
                    touched.push(r);
                }
                weight_to[r] += w;
            }
            touched.sort_unstable();
            let own = refined[v];
            let mut best = own;
            let mut best_gain = 0.0;
            for &r in &touched {
                if r == own {
                    continue;
                }
                let well_connected = r_ext[r] + EPS >= resolution * r_tot[r] * (c_tot - r_tot[r]) / m2;
                if !well_connected {
                    continue;
                }
                let gain = weight_to[r] - resolution * kv * r_tot[r] / m2;
                if gain > best_gain + EPS {
                    best = r;
                    best_gain = gain;
                }
            }
            if best != own {
                r_ext[best] = r_ext[best] + r_ext[v] - 2.0 * weight_to[best];
                r_tot[best] += kv;
                r_size[best] += 1;
                r_tot[own] -= kv;
                r_size[own] -= 1;
                refined[v] = best;
            }
            for &r in &touched {
                weight_to[r] = 0.0;
            }
            touched.clear();
        }
    }
    refined
}
