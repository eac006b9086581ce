use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Distance paired with a local node index. Orders by distance, then by
/// index, so ties always favour the lowest index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub dist: f32,
    pub idx: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `1 - <a, b>` on unit vectors.
#[inline]
pub fn distance(a: &[f32], b: &[f32]) -> f32 {
    1.0 - crate::llm_gateway::dot(a, b)
}

/// Visited marks reused across searches by bumping an epoch.
#[derive(Debug, Default, Clone)]
pub struct VisitedSet {
    marks: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    pub fn new(n: usize) -> Self {
        Self { marks: vec![0; n], epoch: 0 }
    }

    pub fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `i`; false if it was already marked.
    #[inline]
    pub fn insert(&mut self, i: u32) -> bool {
        let m = &mut self.marks[i as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub distance_evals: u64,
    pub expansions: u64,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.distance_evals += o.distance_evals;
        self.expansions += o.expansions;
    }
}

/// Best-first search over a graph of `n` nodes from `start`.
///
/// Keeps a candidate queue (nearest first) and a result set of at most `ef`
/// nodes. A neighbour enters both when the result set has room or it beats
/// the current furthest result; the search stops when the nearest candidate
/// is farther than the furthest result. Returns the result set ascending.
///
/// When `trace` is given, the furthest result distance is recorded after
/// every change to a full result set.
pub fn beam_search<'g, D, N>(
    n: usize,
    start: u32,
    ef: usize,
    mut dist: D,
    neighbors: N,
    visited: &mut VisitedSet,
    stats: &mut SearchStats,
    mut trace: Option<&mut Vec<f32>>,
) -> Vec<Scored>
where
    D: FnMut(u32) -> f32,
    N: Fn(u32) -> &'g [u32],
{
    let ef = ef.max(1);
    visited.reset(n);
    visited.insert(start);
    let first = Scored { dist: dist(start), idx: start };
    stats.distance_evals += 1;
    let mut candidates = BinaryHeap::from([Reverse(first)]);
    let mut results = BinaryHeap::from([first]);
    if results.len() == ef {
        if let Some(t) = trace.as_deref_mut() {
            t.push(first.dist);
        }
    }
    while let Some(Reverse(c)) = candidates.pop() {
        let furthest = *results.peek().expect("result set is never empty");
        if c > furthest {
            break;
        }
        stats.expansions += 1;
        for &x in neighbors(c.idx) {
            if !visited.insert(x) {
                continue;
            }
            let sx = Scored { dist: dist(x), idx: x };
            stats.distance_evals += 1;
            if results.len() < ef || sx < *results.peek().expect("non-empty") {
                candidates.push(Reverse(sx));
                results.push(sx);
                if results.len() > ef {
                    results.pop();
                }
                if results.len() == ef {
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(results.peek().expect("non-empty").dist);
                    }
                }
            }
        }
    }
    results.into_sorted_vec()
}
