//! Seeded random datasets for tests, benchmarks and the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::token::{Sequence, Token};

/// How many output tokens each sequence gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MPolicy {
    /// The same `m` for every sequence (input lengths are drawn from `m..=n_max`).
    Fixed(usize),
    /// `m^j` uniform in `1..=n^j`.
    Uniform,
}

impl std::str::FromStr for MPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(MPolicy::Uniform),
            _ => s
                .strip_prefix("fixed:")
                .unwrap_or(s)
                .parse::<usize>()
                .map(MPolicy::Fixed)
                .map_err(|_| format!("expected `uniform` or `fixed:<m>`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub d: usize,
    pub n_sequences: usize,
    pub n_max: usize,
    pub m_policy: MPolicy,
    /// Probability that an input token is drawn from a pool shared by all
    /// sequences instead of sampled fresh.
    pub share: f64,
}

impl GenConfig {
    pub fn new(seed: u64, d: usize, n_sequences: usize, n_max: usize) -> Self {
        GenConfig {
            seed,
            d,
            n_sequences,
            n_max,
            m_policy: MPolicy::Uniform,
            share: 0.3,
        }
    }

    fn check(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidInput(format!(
                "d must be at least 2, got {}",
                self.d
            )));
        }
        if self.n_sequences == 0 || self.n_max == 0 {
            return Err(Error::InvalidInput(
                "need at least one sequence of at least one token".into(),
            ));
        }
        if let MPolicy::Fixed(m) = self.m_policy {
            if m == 0 || m > self.n_max {
                return Err(Error::InvalidInput(format!(
                    "fixed m = {m} must lie in 1..={}",
                    self.n_max
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.share) {
            return Err(Error::InvalidInput(format!(
                "share must lie in [0, 1], got {}",
                self.share
            )));
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 1000;

fn normal(rng: &mut ChaCha8Rng, d: usize, sd: f64) -> Token<f64> {
    Token(
        (0..d)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn attempt(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Dataset<f64> {
    let pool: Vec<Token<f64>> = (0..cfg.n_max.max(4))
        .map(|_| normal(rng, cfg.d, 1.0))
        .collect();
    let pairs = (0..cfg.n_sequences)
        .map(|_| {
            let lo = match cfg.m_policy {
                MPolicy::Fixed(m) => m,
                MPolicy::Uniform => 1,
            };
            let n = rng.random_range(lo..=cfg.n_max);
            let m = match cfg.m_policy {
                MPolicy::Fixed(m) => m,
                MPolicy::Uniform => rng.random_range(1..=n),
            };
            let input = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < cfg.share {
                        pool[rng.random_range(0..pool.len())].clone()
                    } else {
                        normal(rng, cfg.d, 1.0)
                    }
                })
                .collect();
            let output = (0..m).map(|_| normal(rng, cfg.d, 2.0)).collect();
            (
                Sequence::from_tokens_unchecked(input),
                Sequence::from_tokens_unchecked(output),
            )
        })
        .collect();
    Dataset::new(cfg.d, pairs)
}

/// Draws datasets until one satisfies the interpolation assumptions.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset<f64>> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_ATTEMPTS {
        let ds = attempt(cfg, &mut rng);
        if ds.validate().is_ok() {
            return Ok(ds);
        }
    }
    Err(Error::InvalidInput(format!(
        "no valid dataset after {MAX_ATTEMPTS} draws (seed {})",
        cfg.seed
    )))
}

/// The `k`-th dataset of the standard random corpus: `d ∈ 2..=6`, `N ≤ 5`,
/// `n^j ≤ 12`, `m^j` uniform.
pub fn corpus_dataset(k: u64) -> Result<Dataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + k);
    let d = rng.random_range(2..=6);
    let n = rng.random_range(1..=5);
    let n_max = rng.random_range(1..=12);
    generate_dataset(&GenConfig::new(rng.random(), d, n, n_max))
}
