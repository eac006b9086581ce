use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_synthetic_hierarchy, random_unit_vectors, BaseHnswSet, DivisorChoice, EvalError, SyntheticConfig};
use crate::chnsw::{ChnswIndex, ChnswParams, LayerGraph};

pub const CSV_HEADER: &str = "layer,system,queries,mean_ms,dist_evals,recall";
pub const CHNSW: &str = "c-hnsw";
pub const BASE_HNSW: &str = "base-hnsw";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub bottom_size: usize,
    pub dimension: usize,
    /// Cap on the number of synthetic layers; `None` divides until small.
    pub max_layers: Option<usize>,
    /// Force every divisor to this value instead of a seeded 3 or 4.
    pub divisor: Option<usize>,
    pub seed: u64,
    pub queries: usize,
    pub k: usize,
    pub workers: usize,
    pub index: ChnswParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            bottom_size: 100_000,
            dimension: 256,
            max_layers: Some(5),
            divisor: None,
            seed: 0,
            queries: 200,
            k: 5,
            workers: 1,
            index: ChnswParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let config: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let positive = [
            ("bottom_size", self.bottom_size),
            ("dimension", self.dimension),
            ("queries", self.queries),
            ("k", self.k),
            ("workers", self.workers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(EvalError::Config(format!("{name} must be >= 1")));
        }
        if self.max_layers == Some(0) {
            return Err(EvalError::Config("max_layers must be >= 1".into()));
        }
        if matches!(self.divisor, Some(d) if d < 2) {
            return Err(EvalError::Config("divisor must be >= 2".into()));
        }
        self.index.validate().map_err(|e| EvalError::Config(e.to_string()))
    }
}

/// One CSV row. `layer` is `None` on a system's average row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub layer: Option<usize>,
    pub system: &'static str,
    pub queries: usize,
    pub mean_ms: f64,
    /// Mean distance evaluations per query.
    pub dist_evals: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub layer_sizes: Vec<usize>,
    pub chnsw_build_ms: f64,
    pub base_build_ms: f64,
    pub rows: Vec<BenchRow>,
    /// Summed distance evaluations over all layers and queries.
    pub chnsw_total_evals: u64,
    pub base_total_evals: u64,
}

impl BenchReport {
    /// C-HNSW distance evaluations as a fraction of the baseline's.
    pub fn eval_ratio(&self) -> f64 {
        self.chnsw_total_evals as f64 / self.base_total_evals.max(1) as f64
    }

    pub fn rows_for<'a>(&'a self, system: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows.iter().filter(move |r| r.system == system)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let layer = r.layer.map_or_else(|| "avg".to_string(), |l| l.to_string());
            let _ = writeln!(out, "{layer},{},{},{:.4},{:.2},{:.4}", r.system, r.queries, r.mean_ms, r.dist_evals, r.recall);
        }
        out
    }

    /// Grouped bar chart of distance evaluations per layer.
    pub fn to_svg(&self) -> String {
        let layers = self.layer_sizes.len();
        let (w, h, pad) = (120.0 * layers as f64 + 80.0, 320.0, 40.0);
        let max = self.rows.iter().map(|r| r.dist_evals).fold(1.0, f64::max);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        let _ = writeln!(svg, "<text x=\"{pad}\" y=\"20\">distance evaluations per query</text>");
        for (s, (system, colour)) in [(CHNSW, "#3b6ea5"), (BASE_HNSW, "#c8733b")].into_iter().enumerate() {
            for r in self.rows_for(system) {
                let Some(l) = r.layer else { continue };
                let bh = (h - 2.0 * pad) * r.dist_evals / max;
                let x = pad + 120.0 * l as f64 + 45.0 * s as f64;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"40\" height=\"{bh:.1}\" fill=\"{colour}\"><title>{system} layer {l}: {:.1}</title></rect>",
                    h - pad - bh,
                    r.dist_evals
                );
            }
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{system}</text>", w - 90.0, 20.0 + 15.0 * s as f64);
        }
        for l in 0..layers {
            let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\">layer {l}</text>", pad + 120.0 * l as f64 + 20.0, h - pad + 16.0);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[derive(Default, Clone)]
struct Acc {
    evals: Vec<u64>,
    nanos: Vec<u128>,
    recall: Vec<f64>,
}

impl Acc {
    fn new(layers: usize) -> Self {
        Self { evals: vec![0; layers], nanos: vec![0; layers], recall: vec![0.0; layers] }
    }

    fn merge(&mut self, o: &Acc) {
        for l in 0..self.evals.len() {
            self.evals[l] += o.evals[l];
            self.nanos[l] += o.nanos[l];
            self.recall[l] += o.recall[l];
        }
    }
}

fn recall(found: &[(u64, f32)], exact: &[(u64, f32)]) -> f64 {
    let truth: HashSet<u64> = exact.iter().map(|x| x.0).collect();
    found.iter().filter(|x| truth.contains(&x.0)).count() as f64 / truth.len().max(1) as f64
}

fn run_queries(index: &ChnswIndex, base: &BaseHnswSet, layers: &[LayerGraph], queries: &[Vec<f32>], k: usize) -> Result<(Acc, Acc), EvalError> {
    let n = layers.len();
    let (mut c, mut b) = (Acc::new(n), Acc::new(n));
    for q in queries {
        let result = index.hierarchical_search(q, k)?;
        let mut base_hits = Vec::with_capacity(n);
        for layer in &base.layers {
            let t = Instant::now();
            let (hits, stats) = layer.search(q, k);
            base_hits.push((hits, stats, t.elapsed()));
        }
        for (l, layer) in layers.iter().enumerate() {
            let exact = layer.brute_force(q, k);
            let hits = result.layer(l).expect("every layer is searched");
            c.evals[l] += hits.stats.distance_evals;
            c.nanos[l] += hits.elapsed.as_nanos();
            c.recall[l] += recall(&hits.hits, &exact);
            let (found, stats, elapsed) = &base_hits[l];
            b.evals[l] += stats.distance_evals;
            b.nanos[l] += elapsed.as_nanos();
            b.recall[l] += recall(found, &exact);
        }
    }
    Ok((c, b))
}

fn rows(system: &'static str, acc: &Acc, queries: usize) -> Vec<BenchRow> {
    let q = queries as f64;
    let mut rows: Vec<BenchRow> = (0..acc.evals.len())
        .map(|l| BenchRow {
            layer: Some(l),
            system,
            queries,
            mean_ms: acc.nanos[l] as f64 / q / 1e6,
            dist_evals: acc.evals[l] as f64 / q,
            recall: acc.recall[l] / q,
        })
        .collect();
    let n = rows.len() as f64;
    rows.push(BenchRow {
        layer: None,
        system,
        queries,
        mean_ms: rows.iter().map(|r| r.mean_ms).sum::<f64>() / n,
        dist_evals: rows.iter().map(|r| r.dist_evals).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
    });
    rows
}

/// Builds both systems on a seeded synthetic hierarchy and measures
/// per-layer latency, distance evaluations and recall@k against brute force.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, EvalError> {
    config.validate()?;
    let mut synth = SyntheticConfig::new(config.bottom_size, config.dimension, config.seed);
    synth.max_layers = config.max_layers;
    if let Some(d) = config.divisor {
        synth.divisor = DivisorChoice::Fixed(d);
    }
    let hierarchy = gen_synthetic_hierarchy(&synth);
    log::info!("synthetic layer sizes {:?}", hierarchy.layer_sizes);

    let t = Instant::now();
    let index = ChnswIndex::build(hierarchy.layers.clone(), config.index)?;
    let chnsw_build_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let base = BaseHnswSet::build(&hierarchy.layers, config.dimension, config.index);
    let base_build_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let flat = random_unit_vectors(config.queries, config.dimension, &mut rng);
    let queries: Vec<Vec<f32>> = flat.chunks(config.dimension).map(<[f32]>::to_vec).collect();

    let n = hierarchy.layer_sizes.len();
    let chunk = queries.len().div_ceil(config.workers);
    let parts: Vec<Result<(Acc, Acc), EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> = queries
            .chunks(chunk)
            .map(|qs| s.spawn(|| run_queries(&index, &base, index.layers(), qs, config.k)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark worker panicked")).collect()
    });
    let (mut c, mut b) = (Acc::new(n), Acc::new(n));
    for part in parts {
        let (pc, pb) = part?;
        c.merge(&pc);
        b.merge(&pb);
    }

    let mut all = rows(CHNSW, &c, config.queries);
    all.extend(rows(BASE_HNSW, &b, config.queries));
    Ok(BenchReport {
        layer_sizes: hierarchy.layer_sizes,
        chnsw_build_ms,
        base_build_ms,
        rows: all,
        chnsw_total_evals: c.evals.iter().sum(),
        base_total_evals: b.evals.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BenchConfig {
        BenchConfig {
            bottom_size: 200,
            dimension: 16,
            max_layers: None,
            queries: 20,
            index: ChnswParams { m: 8, ef_construction: 32, ef_search: 32, seed: 0 },
            ..BenchConfig::default()
        }
    }

    #[test]
    fn csv_schema() {
        let report = run_benchmark(&toy()).unwrap();
        let layers = report.layer_sizes.len();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len() - 1, 2 * layers + 2);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
        assert_eq!(lines.iter().filter(|l| l.starts_with("avg,")).count(), 2);
        assert!(report.to_svg().starts_with("<svg"));
    }

    #[test]
    fn counts_reproducible_across_runs_and_workers() {
        let a = run_benchmark(&toy()).unwrap();
        let b = run_benchmark(&BenchConfig { workers: 3, ..toy() }).unwrap();
        let evals = |r: &BenchReport| r.rows.iter().map(|r| r.dist_evals).collect::<Vec<_>>();
        assert_eq!(evals(&a), evals(&b));
        assert_eq!(a.chnsw_total_evals, b.chnsw_total_evals);
    }

    #[test]
    fn malformed_config() {
        assert!(matches!(BenchConfig::from_toml("bottom_size = \"many\""), Err(EvalError::Config(_))));
        assert!(matches!(BenchConfig::from_toml("queries = 0"), Err(EvalError::Config(_))));
        assert!(matches!(BenchConfig::from_toml("colour = 3"), Err(EvalError::Config(_))));
        let c = BenchConfig::from_toml("bottom_size = 50\n[index]\nm = 4").unwrap();
        assert_eq!((c.bottom_size, c.index.m, c.index.ef_search), (50, 4, 100));
    }
}
