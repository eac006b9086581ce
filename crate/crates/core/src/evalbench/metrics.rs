use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text::{collapse_whitespace, words};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    pub gold: String,
    #[serde(default)]
    pub generated: String,
}

fn canonical(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase())
}

/// 1 when the canonical gold answer occurs in the canonical generation.
pub fn qa_accuracy(record: &QaRecord) -> u8 {
    let gold = canonical(&record.gold);
    u8::from(!gold.is_empty() && canonical(&record.generated).contains(&gold))
}

/// Share of gold tokens present in the generation; 0 when either side says
/// a bare "yes" or "no".
pub fn qa_recall(record: &QaRecord) -> f64 {
    let gold: BTreeSet<String> = words(&record.gold).into_iter().collect();
    let generated: BTreeSet<String> = words(&record.generated).into_iter().collect();
    let yes_no = |s: &BTreeSet<String>| s.contains("yes") || s.contains("no");
    if gold.is_empty() || yes_no(&gold) || yes_no(&generated) {
        return 0.0;
    }
    gold.intersection(&generated).count() as f64 / gold.len() as f64
}

/// Points with cluster labels `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub clusters: usize,
}

impl ClusterAssignment {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, EvalError> {
        if points.len() != labels.len() {
            return Err(EvalError::InvalidAssignment(format!("{} points, {} labels", points.len(), labels.len())));
        }
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(EvalError::InvalidAssignment("points differ in dimension".into()));
        }
        let clusters = labels.iter().max().map_or(0, |m| m + 1);
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        if used.len() != clusters {
            return Err(EvalError::InvalidAssignment("cluster labels are not contiguous".into()));
        }
        Ok(Self { points, labels, clusters })
    }

    fn dimension(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    fn centroids(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let d = self.dimension();
        let mut sums = vec![vec![0.0; d]; self.clusters];
        let mut counts = vec![0usize; self.clusters];
        for (p, &l) in self.points.iter().zip(&self.labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
        (sums, counts)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Calinski-Harabasz index.
pub fn chi(a: &ClusterAssignment) -> Result<f64, EvalError> {
    if a.clusters < 2 {
        return Err(EvalError::SingleCluster);
    }
    let n = a.points.len();
    let d = a.dimension();
    let (centroids, counts) = a.centroids();
    let mut mean = vec![0.0; d];
    for p in &a.points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let between: f64 = centroids.iter().zip(&counts).map(|(c, &k)| k as f64 * sq_dist(c, &mean)).sum();
    let within: f64 = a.points.iter().zip(&a.labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    if within == 0.0 {
        return Err(EvalError::DegenerateDispersion);
    }
    Ok((n - a.clusters) as f64 / (a.clusters - 1) as f64 * between / within)
}

/// Mean cosine similarity between each point and its cluster centroid.
pub fn mean_cosine_sim(a: &ClusterAssignment) -> Result<f64, EvalError> {
    if a.points.is_empty() {
        return Ok(0.0);
    }
    let (centroids, _) = a.centroids();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (i, (p, &l)) in a.points.iter().zip(&a.labels).enumerate() {
        let c = &centroids[l];
        let (np, nc) = (norm(p), norm(c));
        if np < 1e-12 || nc < 1e-12 {
            return Err(EvalError::ZeroVector(i));
        }
        total += p.iter().zip(c).map(|(x, y)| x * y).sum::<f64>() / (np * nc);
    }
    Ok(total / a.points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(gold: &str, generated: &str) -> QaRecord {
        QaRecord { question: String::new(), gold: gold.into(), generated: generated.into() }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(qa_accuracy(&rec("Sam Altman", "The answer is Sam Altman.")), 1);
        assert_eq!(qa_accuracy(&rec("Sam Altman", "Andrew Ng")), 0);
        assert_eq!(qa_accuracy(&rec("X", "x")), 1);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(qa_recall(&rec("Sam Altman", "It was Sam Altman.")), 1.0);
        assert_eq!(qa_recall(&rec("Sam Altman", "Altman resigned")), 0.5);
        assert_eq!(qa_recall(&rec("yes", "yes")), 0.0);
        assert_eq!(qa_recall(&rec("Sam Altman", "No, Sam Altman")), 0.0);
    }

    fn one_d(points: &[f64], labels: &[usize]) -> ClusterAssignment {
        ClusterAssignment::new(points.iter().map(|&x| vec![x]).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn chi_hand_example() {
        assert_eq!(chi(&one_d(&[0.0, 1.0, 4.0, 5.0], &[0, 0, 1, 1])).unwrap(), 32.0);
        assert!(matches!(chi(&one_d(&[0.0, 1.0], &[0, 0])), Err(EvalError::SingleCluster)));
        assert!(matches!(chi(&one_d(&[1.0, 1.0, 2.0, 2.0], &[0, 0, 1, 1])), Err(EvalError::DegenerateDispersion)));
    }

    #[test]
    fn sim_examples() {
        let same = ClusterAssignment::new(vec![vec![1.0, 2.0]; 3], vec![0; 3]).unwrap();
        assert!((mean_cosine_sim(&same).unwrap() - 1.0).abs() < 1e-12);
        let antipodal = ClusterAssignment::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0, 0]).unwrap();
        assert!(matches!(mean_cosine_sim(&antipodal), Err(EvalError::ZeroVector(_))));
        let square = ClusterAssignment::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 0]).unwrap();
        let expected = std::f64::consts::FRAC_PI_4.cos();
        assert!((mean_cosine_sim(&square).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_gapped_labels() {
        assert!(ClusterAssignment::new(vec![vec![0.0], vec![1.0]], vec![0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_of_gold_is_one(gold in "[a-zA-Z][a-zA-Z ]{0,20}") {
            prop_assert_eq!(qa_accuracy(&rec(&gold, &gold)), 1);
        }

        #[test]
        fn recall_ignores_word_order(words in proptest::collection::vec("[a-z]{1,6}", 1..8), gold in "[a-z]{1,6}( [a-z]{1,6}){0,2}") {
            let forward = words.join(" ");
            let mut rev = words.clone();
            rev.reverse();
            let backward = rev.join(" ");
            prop_assert_eq!(qa_recall(&rec(&gold, &forward)), qa_recall(&rec(&gold, &backward)));
        }
    }
}
