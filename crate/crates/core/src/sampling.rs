//! Deterministic random substreams and categorical sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Replication count and seed for a Monte Carlo computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    #[serde(rename = "B")]
    pub replications: u64,
    pub seed: u64,
}

impl MonteCarlo {
    pub fn new(replications: u64, seed: u64) -> Self {
        Self { replications, seed }
    }
}

/// Named lanes keep independent uses of one seed from sharing randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    GofReplicate = 1,
    Interval = 2,
    Names = 3,
    MixtureCoin = 4,
    PowerReplicate = 5,
    Subsample = 6,
    RareCount = 7,
    WidthScaling = 8,
}

/// RNG for replicate `index` of `lane` under `seed`.
///
/// The 256-bit ChaCha key is built from (seed, lane) and the replicate index
/// selects the stream, so every replicate is reproducible in isolation.
pub fn substream(seed: u64, lane: Lane, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(lane as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"onomstat");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Samples indices with probability proportional to integer weights.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<u64>,
}

impl Categorical {
    /// Returns `None` when the weights sum to zero.
    pub fn new(weights: impl IntoIterator<Item = u64>) -> Option<Self> {
        let mut acc = 0u64;
        let cumulative: Vec<u64> = weights
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if acc == 0 {
            None
        } else {
            Some(Self { cumulative })
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn total(&self) -> u64 {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random_range(0..self.total());
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// Samples indices with probability proportional to real weights.
#[derive(Debug, Clone)]
pub struct WeightedReal {
    cumulative: Vec<f64>,
}

impl WeightedReal {
    pub fn new(weights: &[f64]) -> Option<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .iter()
            .map(|&w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        if acc <= 0.0 {
            None
        } else {
            Some(Self { cumulative })
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    /// Counts per category for `n` independent draws.
    pub fn counts<R: Rng + ?Sized>(&self, n: u64, rng: &mut R, out: &mut [u64]) {
        out.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            out[self.sample(rng)] += 1;
        }
    }
}
