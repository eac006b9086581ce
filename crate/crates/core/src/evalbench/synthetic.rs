use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chnsw::LayerInput;

/// Layers stop shrinking once a layer has fewer nodes than this.
pub const MIN_DIVISIBLE_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisorChoice {
    /// Seeded choice of 3 or 4 per layer.
    Random,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub bottom_size: usize,
    pub dimension: usize,
    pub seed: u64,
    /// Cap on the number of layers, bottom included.
    pub max_layers: Option<usize>,
    pub divisor: DivisorChoice,
}

impl SyntheticConfig {
    pub fn new(bottom_size: usize, dimension: usize, seed: u64) -> Self {
        Self { bottom_size, dimension, seed, max_layers: None, divisor: DivisorChoice::Random }
    }
}

/// Random unit vectors per layer with layer sizes shrinking by 3 or 4.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHierarchy {
    /// Bottom to top.
    pub layer_sizes: Vec<usize>,
    pub dimension: usize,
    /// `divisors[i]` took layer `i` to layer `i + 1`.
    pub divisors: Vec<usize>,
    pub seed: u64,
    /// Node ids `0..n` per layer, bottom first.
    pub layers: Vec<LayerInput>,
}

/// `count` vectors drawn uniformly from `[-1, 1]^dimension`, then
/// unit-normalized, row-major.
pub fn random_unit_vectors(count: usize, dimension: usize, rng: &mut impl Rng) -> Vec<f32> {
    let mut out = Vec::with_capacity(count * dimension);
    for _ in 0..count {
        let start = out.len();
        loop {
            out.truncate(start);
            out.extend((0..dimension).map(|_| rng.random_range(-1.0f32..1.0)));
            let norm = out[start..].iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
            if norm > 1e-6 {
                out[start..].iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
                break;
            }
        }
    }
    out
}

/// Layer sizes by repeated floor division while the current size is at
/// least [`MIN_DIVISIBLE_SIZE`].
pub fn layer_sizes(config: &SyntheticConfig, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut sizes = vec![config.bottom_size];
    let mut divisors = Vec::new();
    let cap = config.max_layers.unwrap_or(usize::MAX).max(1);
    while *sizes.last().expect("non-empty") >= MIN_DIVISIBLE_SIZE && sizes.len() < cap {
        let d = match config.divisor {
            DivisorChoice::Random => {
                if rng.random_bool(0.5) {
                    3
                } else {
                    4
                }
            }
            DivisorChoice::Fixed(d) => d.max(2),
        };
        divisors.push(d);
        sizes.push(sizes.last().expect("non-empty") / d);
    }
    (sizes, divisors)
}

pub fn gen_synthetic_hierarchy(config: &SyntheticConfig) -> SyntheticHierarchy {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bottom = config.bottom_size.max(1);
    let config = SyntheticConfig { bottom_size: bottom, ..config.clone() };
    let (layer_sizes, divisors) = layer_sizes(&config, &mut rng);
    let layers = layer_sizes
        .iter()
        .map(|&n| LayerInput::new((0..n as u64).collect(), random_unit_vectors(n, config.dimension, &mut rng)))
        .collect();
    SyntheticHierarchy { layer_sizes, dimension: config.dimension, divisors, seed: config.seed, layers }
}
